"""Regular-grid fields, finite differences, discrete norms and path integrals.

All spatial derivatives use second-order central differences in the interior
and second-order one-sided stencils on the faces (``numpy.gradient`` with
``edge_order=2``). The sparse matrices returned by :func:`diff_matrix`
reproduce exactly the same stencils, so matrix-free and assembled operators
agree to rounding.

Array layout: spatial axes are always the last three axes, ``values[..., i, j, k]``
with ``i`` running along x1. Vector fields carry a leading component axis of
length 3, symmetric tensors one of length 6 in the order (11, 22, 33, 12, 13, 23).
Time-dependent fields put the snapshot axis first.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import ClassVar, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import RegularGridInterpolator

from elastostab import _backend


class GridError(ValueError):
    """Invalid grid, field shape, or point outside the grid."""


# index pairs of the stored symmetric-tensor components
SYM_INDEX = ((0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2))


@dataclass(frozen=True)
class Grid:
    dims: tuple[int, int, int]
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    snapshots: int = 0
    dt: float | None = None

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        spacing = tuple(float(h) for h in self.spacing)
        origin = tuple(float(o) for o in self.origin)
        if len(dims) != 3 or len(spacing) != 3 or len(origin) != 3:
            raise GridError("dims, spacing and origin need three entries")
        if min(dims) < 3:
            raise GridError(f"every axis needs at least 3 points, got {dims}")
        if min(spacing) <= 0:
            raise GridError(f"spacing must be positive, got {spacing}")
        if self.snapshots < 0:
            raise GridError("snapshots must be nonnegative")
        if self.snapshots >= 3 and (self.dt is None or self.dt <= 0):
            raise GridError("a positive dt is required with 3 or more snapshots")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @classmethod
    def unit_cube(cls, n: int, snapshots: int = 0, dt: float | None = None) -> Grid:
        """Grid with ``n`` points per axis covering [0, 1]^3."""
        h = 1.0 / (n - 1)
        return cls((n, n, n), (h, h, h), (0.0, 0.0, 0.0), snapshots, dt)

    @property
    def n_points(self) -> int:
        return int(np.prod(self.dims))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.dims

    @property
    def upper(self) -> np.ndarray:
        return np.asarray(self.origin) + np.asarray(self.spacing) * (np.asarray(self.dims) - 1)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (np.asarray(self.origin) + self.upper)

    @property
    def is_dynamic(self) -> bool:
        return self.snapshots > 0

    def axis(self, k: int) -> np.ndarray:
        return self.origin[k] + self.spacing[k] * np.arange(self.dims[k])

    def mesh(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return tuple(np.meshgrid(self.axis(0), self.axis(1), self.axis(2), indexing="ij"))

    def points(self) -> np.ndarray:
        """All grid nodes as an (N, 3) array in C order."""
        return np.stack([m.ravel() for m in self.mesh()], axis=1)

    def times(self) -> np.ndarray:
        return np.arange(self.snapshots) * (self.dt or 0.0)

    def static(self) -> Grid:
        return Grid(self.dims, self.spacing, self.origin)

    def contains(self, point: Sequence[float], tol: float = 1e-12) -> bool:
        p = np.asarray(point, dtype=float)
        scale = tol * max(1.0, float(np.max(np.abs(self.upper))))
        return bool(np.all(p >= np.asarray(self.origin) - scale) and np.all(p <= self.upper + scale))

    def boundary_mask(self) -> np.ndarray:
        mask = np.ones(self.dims, dtype=bool)
        mask[1:-1, 1:-1, 1:-1] = False
        return mask

    def trapezoid_weights(self) -> np.ndarray:
        """Quadrature weights (cell volume shares) of the composite trapezoid rule."""
        w = [np.full(n, h) for n, h in zip(self.dims, self.spacing)]
        for wk in w:
            wk[0] *= 0.5
            wk[-1] *= 0.5
        return w[0][:, None, None] * w[1][None, :, None] * w[2][None, None, :]

    def same_as(self, other: Grid) -> bool:
        return (
            self.dims == other.dims
            and np.allclose(self.spacing, other.spacing, rtol=1e-12, atol=0)
            and np.allclose(self.origin, other.origin, rtol=1e-12, atol=1e-15)
        )


@dataclass(frozen=True)
class _Field:
    grid: Grid
    values: np.ndarray = field(repr=False)

    ncomp: ClassVar[int] = 1
    kind: ClassVar[str] = "scalar"

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64)
        comp = () if self.ncomp == 1 else (self.ncomp,)
        static_shape = comp + self.grid.dims
        if vals.shape == static_shape:
            pass
        elif self.grid.snapshots and vals.shape == (self.grid.snapshots,) + static_shape:
            pass
        else:
            raise GridError(
                f"{self.kind} field on {self.grid.dims} (snapshots={self.grid.snapshots}) "
                f"cannot hold values of shape {vals.shape}"
            )
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def is_dynamic(self) -> bool:
        comp = 0 if self.ncomp == 1 else 1
        return self.values.ndim == 4 + comp

    @property
    def n_snapshots(self) -> int:
        return self.values.shape[0] if self.is_dynamic else 0

    def at(self, snapshot: int):
        """Static field holding one time snapshot."""
        if not self.is_dynamic:
            return self
        return type(self)(self.grid.static(), self.values[snapshot])

    def with_values(self, values: np.ndarray):
        return type(self)(self.grid, values)

    @classmethod
    def zeros(cls, grid: Grid, dynamic: bool = False):
        comp = () if cls.ncomp == 1 else (cls.ncomp,)
        lead = (grid.snapshots,) if dynamic else ()
        return cls(grid, np.zeros(lead + comp + grid.dims))


class ScalarField(_Field):
    ncomp = 1
    kind = "scalar"

    def sample(self, points: np.ndarray) -> np.ndarray:
        """Trilinear interpolation at (P, 3) physical points."""
        return _interp(self.grid, self.values, points)


class VectorField(_Field):
    ncomp = 3
    kind = "vector"

    def component(self, i: int) -> ScalarField:
        return ScalarField(self.grid, self.values[..., i, :, :, :])

    def norm(self) -> ScalarField:
        return ScalarField(self.grid, np.sqrt(np.sum(self.values**2, axis=-4)))


class SymTensorField(_Field):
    ncomp = 6
    kind = "symtensor"

    def matrix(self) -> np.ndarray:
        """Full matrices with shape (..., 3, 3) over the trailing grid axes moved last."""
        v = np.moveaxis(self.values, -4, -1)
        m = np.empty(v.shape[:-1] + (3, 3))
        for c, (a, b) in enumerate(SYM_INDEX):
            m[..., a, b] = v[..., c]
            m[..., b, a] = v[..., c]
        return m

    @classmethod
    def from_matrix(cls, grid: Grid, m: np.ndarray) -> SymTensorField:
        """Build from an array whose last two axes are 3x3 (symmetrized)."""
        sym = 0.5 * (m + np.swapaxes(m, -1, -2))
        vals = np.stack([sym[..., a, b] for a, b in SYM_INDEX], axis=-1)
        return cls(grid, np.moveaxis(vals, -1, -4))

    def column(self, i: int) -> VectorField:
        rows = [self.values[..., _sym_slot(r, i), :, :, :] for r in range(3)]
        return VectorField(self.grid, np.stack(rows, axis=-4))

    def trace(self) -> ScalarField:
        return ScalarField(self.grid, self.values[..., 0, :, :, :] + self.values[..., 1, :, :, :]
                           + self.values[..., 2, :, :, :])

    def det(self) -> ScalarField:
        return ScalarField(self.grid, np.linalg.det(self.matrix()))


def _sym_slot(a: int, b: int) -> int:
    return SYM_INDEX.index((min(a, b), max(a, b)))


def _interp(grid: Grid, values: np.ndarray, points: np.ndarray) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    lo, hi = np.asarray(grid.origin), grid.upper
    slack = 1e-10 * np.maximum(1.0, np.abs(hi - lo))
    if np.any(pts < lo - slack) or np.any(pts > hi + slack):
        raise GridError("interpolation point outside the grid")
    pts = np.clip(pts, lo, hi)
    interp = RegularGridInterpolator(tuple(grid.axis(k) for k in range(3)), values,
                                     method="linear", bounds_error=False, fill_value=None)
    return interp(pts)


def _require_same_grid(*fields: _Field) -> Grid:
    g = fields[0].grid
    for f in fields[1:]:
        if not g.same_as(f.grid):
            raise GridError("fields live on different grids")
    return g


# ---------------------------------------------------------------------------
# finite differences

def d_axis(values: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Derivative along spatial axis 0/1/2 of an array whose last three axes are spatial."""
    return np.gradient(values, h, axis=values.ndim - 3 + axis, edge_order=2)


def gradient(f: ScalarField) -> VectorField:
    g = f.grid
    parts = [d_axis(f.values, k, g.spacing[k]) for k in range(3)]
    return VectorField(g, np.stack(parts, axis=-4))


def divergence(v: VectorField) -> ScalarField:
    g = v.grid
    vals = sum(d_axis(v.values[..., k, :, :, :], k, g.spacing[k]) for k in range(3))
    return ScalarField(g, vals)


def tensor_divergence(t: SymTensorField) -> VectorField:
    """Column-wise divergence: component i is div of column i."""
    g = t.grid
    out = []
    for i in range(3):
        out.append(sum(d_axis(t.values[..., _sym_slot(j, i), :, :, :], j, g.spacing[j])
                       for j in range(3)))
    return VectorField(g, np.stack(out, axis=-4))


def second_time_derivative(u: VectorField) -> VectorField:
    """Central second difference in time.

    Interior snapshots use (u(t+dt) - 2u(t) + u(t-dt)) / dt^2; the two end
    snapshots use the four-point one-sided second-order formula when at least
    four snapshots exist, otherwise they repeat the neighbouring value.
    """
    if not u.is_dynamic or u.n_snapshots < 3:
        raise GridError("second time derivative needs at least 3 snapshots")
    dt = u.grid.dt
    x = u.values
    out = np.empty_like(x)
    out[1:-1] = (x[2:] - 2.0 * x[1:-1] + x[:-2]) / dt**2
    if x.shape[0] >= 4:
        out[0] = (2.0 * x[0] - 5.0 * x[1] + 4.0 * x[2] - x[3]) / dt**2
        out[-1] = (2.0 * x[-1] - 5.0 * x[-2] + 4.0 * x[-3] - x[-4]) / dt**2
    else:
        out[0] = out[1]
        out[-1] = out[-2]
    return VectorField(u.grid, out)


def diff_matrix_1d(n: int, h: float) -> sp.csr_matrix:
    """Sparse first-derivative matrix with the same stencils as :func:`d_axis`."""
    rows, cols, vals = [], [], []
    for i in range(1, n - 1):
        rows += [i, i]
        cols += [i - 1, i + 1]
        vals += [-0.5 / h, 0.5 / h]
    rows += [0, 0, 0, n - 1, n - 1, n - 1]
    cols += [0, 1, 2, n - 3, n - 2, n - 1]
    vals += [-1.5 / h, 2.0 / h, -0.5 / h, 0.5 / h, -2.0 / h, 1.5 / h]
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def diff_matrix(grid: Grid, axis: int) -> sp.csr_matrix:
    """N x N derivative matrix along ``axis`` acting on C-order flattened nodal values."""
    mats = [sp.identity(n, format="csr") for n in grid.dims]
    mats[axis] = diff_matrix_1d(grid.dims[axis], grid.spacing[axis])
    return sp.kron(sp.kron(mats[0], mats[1]), mats[2], format="csr")


# ---------------------------------------------------------------------------
# norms

def _multi_indices(order: int):
    for k in range(order + 1):
        yield from itertools.combinations_with_replacement(range(3), k)


def sobolev_norm(f: _Field, order: int = 0) -> float:
    """Discrete W^{order,2} norm with trapezoid (cell-volume) weights.

    Sums squared values and all mixed FD derivatives up to ``order`` over
    every component (and snapshot, if time-dependent).
    """
    if order not in (0, 1, 2):
        raise ValueError(f"unsupported Sobolev order {order}; use 0, 1 or 2")
    g = f.grid
    w = g.trapezoid_weights()
    total = 0.0
    for alpha in _multi_indices(order):
        d = f.values
        for ax in alpha:
            d = d_axis(d, ax, g.spacing[ax])
        total += float(np.sum(d**2 * w))
    return float(np.sqrt(total))


# ---------------------------------------------------------------------------
# path integrals

def _check_points(grid: Grid, pts: np.ndarray):
    lo, hi = np.asarray(grid.origin), grid.upper
    slack = 1e-10 * np.maximum(1.0, np.abs(hi - lo))
    if np.any(pts < lo - slack) or np.any(pts > hi + slack):
        raise GridError("path endpoint outside the grid")


def path_integrals(a: VectorField, starts: np.ndarray, ends: np.ndarray,
                   axis_order: Sequence[int] = (0, 1, 2)) -> np.ndarray:
    """Line integrals of ``a`` along axis-aligned staircase paths.

    Each path runs from ``starts[k]`` to ``ends[k]`` one axis at a time in
    ``axis_order``. The integrand is the trilinear interpolant of ``a``; the
    integral along each segment is exact for that interpolant (trapezoid rule
    with breakpoints at the grid planes).
    """
    if a.is_dynamic:
        raise GridError("path integrals need a static vector field")
    g = a.grid
    s = np.atleast_2d(np.asarray(starts, dtype=float))
    e = np.atleast_2d(np.asarray(ends, dtype=float))
    s, e = np.broadcast_arrays(s, e)
    _check_points(g, s)
    _check_points(g, e)
    lo, hi = np.asarray(g.origin), g.upper
    s = np.ascontiguousarray(np.clip(s, lo, hi))
    e = np.ascontiguousarray(np.clip(e, lo, hi))
    order = np.asarray(axis_order, dtype=np.int64)
    if sorted(order.tolist()) != [0, 1, 2]:
        raise ValueError("axis_order must be a permutation of (0, 1, 2)")
    return _backend.staircase_integrals(
        np.ascontiguousarray(a.values), np.asarray(g.spacing), np.asarray(g.origin), s, e, order)


def path_integral(a: VectorField, p: Sequence[float], x: Sequence[float],
                  axis_order: Sequence[int] = (0, 1, 2)) -> float:
    return float(path_integrals(a, np.asarray(p)[None], np.asarray(x)[None], axis_order)[0])
