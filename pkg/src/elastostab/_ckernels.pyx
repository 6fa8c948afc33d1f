# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the staircase path integral and pointwise Gram-Schmidt solve."""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()


cdef inline Py_ssize_t _cell(double t, Py_ssize_t n) nogil:
    cdef Py_ssize_t m = <Py_ssize_t>floor(t)
    if m < 0:
        m = 0
    if m > n - 2:
        m = n - 2
    return m


cdef inline double _line_value(const double[:, :, ::1] a, int ax, Py_ssize_t q,
                               Py_ssize_t i1, Py_ssize_t i2, double w1, double w2) nogil:
    # value at node q along axis ax, bilinear in the two remaining axes
    cdef double v00, v10, v01, v11
    if ax == 0:
        v00 = a[q, i1, i2]; v10 = a[q, i1 + 1, i2]; v01 = a[q, i1, i2 + 1]; v11 = a[q, i1 + 1, i2 + 1]
    elif ax == 1:
        v00 = a[i1, q, i2]; v10 = a[i1 + 1, q, i2]; v01 = a[i1, q, i2 + 1]; v11 = a[i1 + 1, q, i2 + 1]
    else:
        v00 = a[i1, i2, q]; v10 = a[i1 + 1, i2, q]; v01 = a[i1, i2 + 1, q]; v11 = a[i1 + 1, i2 + 1, q]
    return (1 - w1) * (1 - w2) * v00 + w1 * (1 - w2) * v10 + (1 - w1) * w2 * v01 + w1 * w2 * v11


cdef double _segment(const double[:, :, ::1] a, int ax, Py_ssize_t n,
                     Py_ssize_t i1, Py_ssize_t i2, double w1, double w2,
                     double h, double o, double s, double e) nogil:
    cdef double ts = (s - o) / h, te = (e - o) / h
    cdef Py_ssize_t ms = _cell(ts, n), me = _cell(te, n), q
    cdef double fs = ts - ms, fe = te - me
    cdef double l0, l1, acc = 0.0
    # cumulative cells from ms up to me (signed)
    if me > ms:
        for q in range(ms, me):
            acc += 0.5 * h * (_line_value(a, ax, q, i1, i2, w1, w2)
                              + _line_value(a, ax, q + 1, i1, i2, w1, w2))
    elif me < ms:
        for q in range(me, ms):
            acc -= 0.5 * h * (_line_value(a, ax, q, i1, i2, w1, w2)
                              + _line_value(a, ax, q + 1, i1, i2, w1, w2))
    l0 = _line_value(a, ax, me, i1, i2, w1, w2)
    l1 = _line_value(a, ax, me + 1, i1, i2, w1, w2)
    acc += h * (fe * l0 + 0.5 * fe * fe * (l1 - l0))
    l0 = _line_value(a, ax, ms, i1, i2, w1, w2)
    l1 = _line_value(a, ax, ms + 1, i1, i2, w1, w2)
    acc -= h * (fs * l0 + 0.5 * fs * fs * (l1 - l0))
    return acc


def staircase_integrals(const double[:, :, :, ::1] a, const double[::1] spacing, const double[::1] origin,
                        const double[:, ::1] starts, const double[:, ::1] ends, const long[::1] order):
    cdef Py_ssize_t K = starts.shape[0], k
    cdef int step, ax, o1, o2
    cdef double cur[3]
    cdef double t1, t2, w1, w2
    cdef Py_ssize_t i1, i2
    cdef Py_ssize_t dims[3]
    dims[0] = a.shape[1]; dims[1] = a.shape[2]; dims[2] = a.shape[3]
    out = np.zeros(K)
    cdef double[::1] res = out
    with nogil:
        for k in range(K):
            cur[0] = starts[k, 0]; cur[1] = starts[k, 1]; cur[2] = starts[k, 2]
            for step in range(3):
                ax = <int>order[step]
                if ax == 0:
                    o1 = 1; o2 = 2
                elif ax == 1:
                    o1 = 0; o2 = 2
                else:
                    o1 = 0; o2 = 1
                t1 = (cur[o1] - origin[o1]) / spacing[o1]
                t2 = (cur[o2] - origin[o2]) / spacing[o2]
                i1 = _cell(t1, dims[o1]); i2 = _cell(t2, dims[o2])
                w1 = t1 - i1; w2 = t2 - i2
                res[k] += _segment(a[ax], ax, dims[ax], i1, i2, w1, w2,
                                   spacing[ax], origin[ax], cur[ax], ends[k, ax])
                cur[ax] = ends[k, ax]
    return out


def gram_schmidt_solve(const double[:, :, ::1] mats, const double[:, ::1] rhs):
    cdef Py_ssize_t P = mats.shape[0], p
    cdef int i, j, d
    cdef double bp[3][3]
    cdef double ab[3]
    cdef double nrm2[3]
    cdef double c
    out = np.zeros((P, 3))
    cdef double[:, ::1] res = out
    with nogil:
        for p in range(P):
            for i in range(3):
                for d in range(3):
                    bp[i][d] = mats[p, d, i]
                ab[i] = rhs[p, i]
                for j in range(i):
                    c = 0.0
                    for d in range(3):
                        c += mats[p, d, i] * bp[j][d]
                    c /= nrm2[j]
                    for d in range(3):
                        bp[i][d] -= c * bp[j][d]
                    ab[i] -= c * ab[j]
                nrm2[i] = bp[i][0] * bp[i][0] + bp[i][1] * bp[i][1] + bp[i][2] * bp[i][2]
            for i in range(3):
                for d in range(3):
                    res[p, d] += ab[i] / nrm2[i] * bp[i][d]
    return out
