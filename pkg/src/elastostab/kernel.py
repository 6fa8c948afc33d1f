"""Kernel of the shear-modulus linearization.

When ``div(dmu eps) = 0`` has a positive solution, ``log dmu`` has gradient
``a`` with ``a . eps_i = -div eps_i`` for every strain column ``eps_i``. The
kernel element is then ``exp`` of the line integral of ``a`` from a base
point, normalized to 1 there.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from elastostab import _backend
from elastostab.grid import (
    Grid,
    GridError,
    ScalarField,
    SymTensorField,
    VectorField,
    _require_same_grid,
    path_integrals,
    sobolev_norm,
    tensor_divergence,
)

COND_WARN = 1e8
SINGULAR_TOL = 1e-14


class SingularStrainError(ValueError):
    """Strain is singular at some grid points; ``locations`` lists them."""

    def __init__(self, msg: str, locations: np.ndarray):
        super().__init__(msg)
        self.locations = locations


class NearSingularStrainWarning(RuntimeWarning):
    pass


def kernel_vector_field(eps: SymTensorField) -> VectorField:
    """Pointwise solution of a . eps_i = -div eps_i by Gram-Schmidt on the strain columns.

    Raises :class:`SingularStrainError` where det eps vanishes relative to
    |eps|^3 and warns when the condition number exceeds 1e8.
    """
    if eps.is_dynamic:
        raise GridError("kernel construction needs a static strain")
    g = eps.grid
    mats = eps.matrix().reshape(-1, 3, 3)
    scale = np.abs(mats).max(axis=(1, 2))
    det = np.linalg.det(mats)
    bad = np.abs(det) <= SINGULAR_TOL * np.maximum(scale, 1e-300) ** 3
    if bad.any():
        locs = g.points()[bad]
        raise SingularStrainError(f"strain is singular at {int(bad.sum())} grid points", locs)
    cond = np.linalg.cond(mats)
    if np.any(cond > COND_WARN):
        warnings.warn(f"strain condition number up to {cond.max():.3g} (> {COND_WARN:.0e})",
                      NearSingularStrainWarning, stacklevel=2)
    rhs = -tensor_divergence(eps).values.reshape(3, -1).T
    a = _backend.gram_schmidt_solve(np.ascontiguousarray(mats), np.ascontiguousarray(rhs))
    return VectorField(g, a.T.reshape((3,) + g.dims))


def center_node(grid: Grid) -> np.ndarray:
    """Grid node closest to the box center."""
    idx = tuple(n // 2 for n in grid.dims)
    return np.array([grid.origin[k] + idx[k] * grid.spacing[k] for k in range(3)])


def kernel_element(a: VectorField, p=None) -> ScalarField:
    """exp of the staircase integral of ``a`` from ``p`` to every node; equals 1 at ``p``."""
    g = a.grid
    p = center_node(g) if p is None else np.asarray(p, dtype=float)
    if not g.contains(p):
        raise GridError(f"base point {p} outside the grid")
    pts = g.points()
    vals = path_integrals(a, np.broadcast_to(p, pts.shape), pts)
    return ScalarField(g, np.exp(vals).reshape(g.dims))


def verify_kernel(delta_mu: ScalarField, eps: SymTensorField) -> float:
    """||div(dmu eps)||_0 / (||dmu||_1 ||eps||_1); 0 when dmu vanishes."""
    g = _require_same_grid(delta_mu, eps)
    flux = SymTensorField(g, delta_mu.values * eps.values)
    num = sobolev_norm(tensor_divergence(flux), 0)
    den = sobolev_norm(delta_mu, 1) * sobolev_norm(eps, 1)
    if den == 0:
        return 0.0
    return num / den


def path_independence_defect(a: VectorField, n_pairs: int = 64, seed: int = 0) -> float:
    """Largest gap between axis orders (1,2,3) and (3,2,1) over random node pairs."""
    g = a.grid
    rng = np.random.default_rng(seed)
    pts = g.points()
    i = rng.integers(0, g.n_points, n_pairs)
    j = rng.integers(0, g.n_points, n_pairs)
    fwd = path_integrals(a, pts[i], pts[j], (0, 1, 2))
    rev = path_integrals(a, pts[i], pts[j], (2, 1, 0))
    return float(np.max(np.abs(fwd - rev))) if n_pairs else 0.0


@dataclass
class KernelCertificate:
    a: VectorField
    base_point: np.ndarray
    delta_mu_star: ScalarField
    residual: float
    path_independence_defect: float

    def summary(self) -> dict:
        v = self.delta_mu_star.values
        return {"base_point": self.base_point.tolist(), "residual": self.residual,
                "path_independence_defect": self.path_independence_defect,
                "delta_mu_star_min": float(v.min()), "delta_mu_star_max": float(v.max()),
                "a_max_abs": float(np.abs(self.a.values).max())}


def kernel_certificate(eps: SymTensorField, p=None, n_pairs: int = 64, seed: int = 0) -> KernelCertificate:
    a = kernel_vector_field(eps)
    p = center_node(eps.grid) if p is None else np.asarray(p, dtype=float)
    dmu = kernel_element(a, p)
    return KernelCertificate(a, p, dmu, verify_kernel(dmu, eps),
                             path_independence_defect(a, n_pairs, seed))
