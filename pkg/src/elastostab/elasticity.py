"""Reference states: strain, pressure and a quasi-static isotropic elasticity solver."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from elastostab.grid import (
    SYM_INDEX,
    Grid,
    GridError,
    ScalarField,
    SymTensorField,
    VectorField,
    _require_same_grid,
    d_axis,
    diff_matrix,
    divergence,
    gradient,
    second_time_derivative,
    sobolev_norm,
    tensor_divergence,
)

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Iterative solve failed to reach the requested tolerance."""


class MaterialError(ValueError):
    """Material parameters violate positivity."""


@dataclass(frozen=True)
class MaterialParams:
    lam: ScalarField
    mu: ScalarField
    rho: ScalarField

    def __post_init__(self):
        _require_same_grid(self.lam, self.mu, self.rho)
        if np.any(self.mu.values <= 0):
            raise MaterialError("shear modulus must be positive everywhere")
        if np.any(self.rho.values <= 0):
            raise MaterialError("density must be positive everywhere")
        if np.any(self.lam.values < 0):
            raise MaterialError("first Lame parameter must be nonnegative")

    @property
    def grid(self) -> Grid:
        return self.mu.grid

    @classmethod
    def constant(cls, grid: Grid, lam: float = 0.0, mu: float = 1.0, rho: float = 1.0):
        g = grid.static()
        return cls(*(ScalarField(g, np.full(g.dims, float(v))) for v in (lam, mu, rho)))


def strain(u: VectorField) -> SymTensorField:
    """Symmetric gradient 0.5 (grad u + grad u^T)."""
    g = u.grid
    du = [[d_axis(u.values[..., a, :, :, :], b, g.spacing[b]) for b in range(3)] for a in range(3)]
    comps = [0.5 * (du[a][b] + du[b][a]) for a, b in SYM_INDEX]
    return SymTensorField(g, np.stack(comps, axis=-4))


def pressure(lam: ScalarField, u: VectorField) -> ScalarField:
    """p = lambda * div u, per snapshot for time-dependent u."""
    if not lam.grid.same_as(u.grid):
        raise GridError("lambda and u live on different grids")
    div = divergence(u)
    return ScalarField(u.grid, lam.values * div.values)


def elasticity_operator(lam: ScalarField, mu: ScalarField, u: VectorField) -> VectorField:
    """grad(lambda div u) + 2 div(mu eps(u)) with the shared FD stencils."""
    eps = strain(u)
    stress = SymTensorField(u.grid, 2.0 * mu.values * eps.values)
    out = tensor_divergence(stress).values
    if np.any(lam.values):
        out = out + gradient(ScalarField(u.grid, lam.values * divergence(u).values)).values
    return VectorField(u.grid, out)


def elasticity_matrix(grid: Grid, lam: np.ndarray, mu: np.ndarray) -> sp.csr_matrix:
    """Sparse 3N x 3N matrix of :func:`elasticity_operator` (component-major unknowns)."""
    D = [diff_matrix(grid, k) for k in range(3)]
    M = sp.diags(np.ravel(mu))
    L = sp.diags(np.ravel(lam))
    lap = sum(D[j] @ M @ D[j] for j in range(3))
    blocks = [[None] * 3 for _ in range(3)]
    for i in range(3):
        for k in range(3):
            b = D[k] @ M @ D[i] + D[i] @ L @ D[k]
            blocks[i][k] = b + lap if i == k else b
    return sp.bmat(blocks, format="csr")


def _interior_dofs(grid: Grid) -> np.ndarray:
    inner = ~grid.boundary_mask().ravel()
    return np.concatenate([inner] * 3)


def residual_norm(params: MaterialParams, u: VectorField, F: VectorField) -> float:
    """Order-0 norm of the momentum residual over interior nodes."""
    r = elasticity_operator(params.lam, params.mu, u).values - F.values
    r = np.where(u.grid.boundary_mask(), 0.0, r)
    return sobolev_norm(VectorField(u.grid, r), 0)


def solve_interior(A: sp.csr_matrix, b: np.ndarray, rtol: float, maxiter: int | None = None):
    """Jacobi-preconditioned BiCGSTAB; raises :class:`SolverError` on failure."""
    if not np.any(b):
        return np.zeros_like(b)
    n = A.shape[0]
    diag = A.diagonal()
    if np.any(diag == 0):
        raise SolverError("zero on the diagonal; Jacobi preconditioner undefined")
    inv = 1.0 / diag
    M = spla.LinearOperator(A.shape, matvec=lambda v: inv * v, dtype=float)
    maxiter = maxiter or 20 * n
    x, info = spla.bicgstab(A, b, M=M, rtol=rtol, atol=0.0, maxiter=maxiter)
    if info != 0 or not np.all(np.isfinite(x)):
        raise SolverError(f"BiCGSTAB did not converge (info={info})")
    rel = np.linalg.norm(A @ x - b) / np.linalg.norm(b)
    if rel > rtol:
        raise SolverError(f"relative residual {rel:.3e} above tolerance {rtol:.1e}")
    return x


def solve_quasistatic(params: MaterialParams, F: VectorField, rtol: float = 1e-8,
                      maxiter: int | None = None, boundary: VectorField | None = None) -> VectorField:
    """Solve grad(lambda div u) + 2 div(mu eps(u)) = F with Dirichlet data on the boundary.

    ``boundary`` supplies u at boundary nodes (its interior values are
    ignored); the default is u = 0. Only interior nodes are unknowns. The
    residual is measured at interior nodes, where the equation is imposed.
    """
    g = params.grid
    if not g.same_as(F.grid):
        raise GridError("force and parameters live on different grids")
    if F.is_dynamic:
        raise GridError("quasi-static solve needs a static force field")
    A = elasticity_matrix(g, params.lam.values, params.mu.values)
    dofs = _interior_dofs(g)
    full = np.zeros(3 * g.n_points)
    if boundary is not None:
        if not g.same_as(boundary.grid) or boundary.is_dynamic:
            raise GridError("boundary data must be a static field on the parameter grid")
        mask = np.broadcast_to(g.boundary_mask(), (3,) + g.dims).ravel()
        full[mask] = boundary.values.ravel()[mask]
    b = F.values.ravel()[dofs] - (A[dofs] @ full)
    Aii = A[dofs][:, dofs].tocsr()
    full[dofs] = solve_interior(Aii, b, 0.1 * rtol, maxiter)
    u = VectorField(g, full.reshape((3,) + g.dims))
    fnorm = sobolev_norm(VectorField(g, np.where(g.boundary_mask(), 0.0, F.values)), 0)
    if boundary is not None:
        fnorm = max(fnorm, float(np.linalg.norm(b)) * np.sqrt(np.prod(g.spacing)))
    if fnorm > 0 and residual_norm(params, u, F) > rtol * fnorm:
        raise SolverError("discrete residual above tolerance after solve")
    return u


def deviatoric(eps: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Trace and deviatoric part of (..., 3, 3) matrices."""
    t = np.trace(eps, axis1=-2, axis2=-1)
    return t, eps - (t / 3.0)[..., None, None] * np.eye(3)


def bal_condition(eps1: SymTensorField, eps2: SymTensorField) -> ScalarField:
    """Pointwise det(t2 eps1^D - t1 eps2^D) with t_k = tr eps_k."""
    g = _require_same_grid(eps1, eps2)
    t1, d1 = deviatoric(eps1.matrix())
    t2, d2 = deviatoric(eps2.matrix())
    m = t2[..., None, None] * d1 - t1[..., None, None] * d2
    return ScalarField(g, np.linalg.det(m))


@dataclass(frozen=True)
class ReferenceState:
    """Material parameters plus one displacement field per experiment.

    Strains and pressures are derived on construction. For time-dependent
    displacements the accelerations default to the FD second time derivative.
    """

    params: MaterialParams
    displacements: tuple[VectorField, ...]
    accels: tuple[VectorField | None, ...] | None = None
    strains: tuple[SymTensorField, ...] = field(init=False, repr=False)
    pressures: tuple[ScalarField, ...] = field(init=False, repr=False)

    def __post_init__(self):
        disp = tuple(self.displacements)
        if not disp:
            raise ValueError("a reference state needs at least one displacement field")
        for u in disp:
            if not u.grid.static().same_as(self.params.grid):
                raise GridError("displacement and parameters live on different grids")
        accels = self.accels
        if accels is None:
            accels = tuple(second_time_derivative(u) if u.is_dynamic and u.n_snapshots >= 3 else None
                           for u in disp)
        if len(accels) != len(disp):
            raise ValueError("one acceleration entry per displacement is required")
        object.__setattr__(self, "displacements", disp)
        object.__setattr__(self, "accels", tuple(accels))
        object.__setattr__(self, "strains", tuple(strain(u) for u in disp))
        object.__setattr__(self, "pressures", tuple(pressure(self._lam_for(u), u) for u in disp))

    def _lam_for(self, u: VectorField) -> ScalarField:
        return ScalarField(u.grid, np.broadcast_to(self.params.lam.values, u.values.shape[:-4] + u.grid.dims))

    @property
    def grid(self) -> Grid:
        return self.params.grid

    @property
    def n_measurements(self) -> int:
        return len(self.displacements)

    @property
    def is_dynamic(self) -> bool:
        return any(u.is_dynamic for u in self.displacements)

    def snapshot(self, t: int) -> ReferenceState:
        """Static state holding time snapshot ``t`` of every experiment (accelerations kept)."""
        if not self.is_dynamic:
            return self
        disp = tuple(u.at(t) for u in self.displacements)
        acc = tuple(a.at(t) if a is not None else None for a in self.accels)
        return ReferenceState(self.params, disp, acc)

    def subset(self, k: int) -> ReferenceState:
        """State restricted to the first ``k`` experiments."""
        if not 1 <= k <= self.n_measurements:
            raise ValueError(f"state has {self.n_measurements} experiments, asked for {k}")
        return ReferenceState(self.params, self.displacements[:k], self.accels[:k])
