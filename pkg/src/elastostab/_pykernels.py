"""Pure NumPy implementations of the hot kernels.

These mirror ``_ckernels.pyx`` exactly (same arithmetic, vectorized over
pairs/points) and are used when the compiled extension is unavailable.
"""
import numpy as np


def _bilinear_lines(arr, coords, spacing, origin):
    # arr: (n, m1, m2); coords: (K, 2) positions along the two trailing axes
    idx, wts = [], []
    for c in range(2):
        n = arr.shape[c + 1]
        t = (coords[:, c] - origin[c]) / spacing[c]
        i = np.clip(np.floor(t).astype(np.int64), 0, n - 2)
        idx.append(i)
        wts.append(t - i)
    i1, i2 = idx
    w1, w2 = wts
    lines = ((1 - w1) * (1 - w2))[:, None] * arr[:, i1, i2].T
    lines += (w1 * (1 - w2))[:, None] * arr[:, i1 + 1, i2].T
    lines += ((1 - w1) * w2)[:, None] * arr[:, i1, i2 + 1].T
    lines += (w1 * w2)[:, None] * arr[:, i1 + 1, i2 + 1].T
    return lines


def _antiderivative(lines, cum, pos, h, o):
    n = lines.shape[1]
    t = (pos - o) / h
    m = np.clip(np.floor(t).astype(np.int64), 0, n - 2)
    f = t - m
    k = np.arange(lines.shape[0])
    lm = lines[k, m]
    return cum[k, m] + h * (f * lm + 0.5 * f * f * (lines[k, m + 1] - lm))


def staircase_integrals(a, spacing, origin, starts, ends, order):
    """Integrals of the trilinear interpolant of ``a`` along staircase paths."""
    cur = starts.copy()
    total = np.zeros(starts.shape[0])
    for ax in order:
        others = [k for k in range(3) if k != ax]
        arr = np.moveaxis(a[ax], ax, 0)
        lines = _bilinear_lines(arr, cur[:, others], spacing[others], origin[others])
        h = spacing[ax]
        cells = 0.5 * h * (lines[:, :-1] + lines[:, 1:])
        cum = np.concatenate([np.zeros((lines.shape[0], 1)), np.cumsum(cells, axis=1)], axis=1)
        total += (_antiderivative(lines, cum, ends[:, ax], h, origin[ax])
                  - _antiderivative(lines, cum, cur[:, ax], h, origin[ax]))
        cur[:, ax] = ends[:, ax]
    return total


def gram_schmidt_solve(mats, rhs):
    """Solve a . b_i = rhs_i pointwise with b_i the columns of ``mats``.

    Gram-Schmidt orthogonalization of the columns turns the system into
    explicit projections: a = sum_i (a . b'_i) / |b'_i|^2 b'_i.
    """
    b = [mats[:, :, i] for i in range(3)]
    bp, ab, nrm2 = [], [], []
    for i in range(3):
        v = b[i].copy()
        s = rhs[:, i].copy()
        for j in range(i):
            c = np.einsum("pk,pk->p", b[i], bp[j]) / nrm2[j]
            v -= c[:, None] * bp[j]
            s -= c * ab[j]
        bp.append(v)
        ab.append(s)
        nrm2.append(np.einsum("pk,pk->p", v, v))
    out = np.zeros_like(rhs)
    for i in range(3):
        out += (ab[i] / nrm2[i])[:, None] * bp[i]
    return out
