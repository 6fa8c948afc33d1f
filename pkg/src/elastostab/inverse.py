"""Regularized reconstruction, spectral null-space probes and stability ratios."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from elastostab._spd import SPDSolver
from elastostab.elasticity import MaterialParams, ReferenceState, solve_quasistatic
from elastostab.grid import Grid, ScalarField, SymTensorField, VectorField, diff_matrix, gradient, sobolev_norm, tensor_divergence
from elastostab.linop import DiscreteLinearizedSystem, assemble, normalize_kind
from elastostab.symbols import condition_maps

log = logging.getLogger(__name__)

MAX_SVD_COLUMNS = 30000
KERNEL_GAP = 1e-6


class SizeLimitError(ValueError):
    """System too large for the spectral probe."""


class ReconstructionError(RuntimeError):
    """Least-squares solve failed or the system has empty columns."""


class ConditionError(ValueError):
    """Reference state violates the ellipticity condition of the requested kind."""


# ---------------------------------------------------------------------------
# reconstruction

@dataclass
class ReconstructionResult:
    increments: dict[str, np.ndarray]
    residual: float
    reg_weight: float
    iterations: int
    rel_errors: dict[str, float] = field(default_factory=dict)


def _smoothing_matrix(S: DiscreteLinearizedSystem) -> sp.csr_matrix:
    """First-order differences on every parameter block, zero on du columns."""
    g = S.grid
    G = sp.vstack([diff_matrix(g, a) for a in range(3)], format="csr")
    off, rows = 0, []
    for b in S.param_blocks:
        reps = b.size // g.n_points
        Gb = sp.kron(sp.identity(reps), G, format="csr") if reps > 1 else G
        rows.append((off, b.start, Gb))
        off += Gb.shape[0]
    if not rows:
        return sp.csr_matrix((0, S.shape[1]))
    coo_r, coo_c, coo_v = [], [], []
    for r0, c0, Gb in rows:
        c = Gb.tocoo()
        coo_r.append(c.row + r0)
        coo_c.append(c.col + c0)
        coo_v.append(c.data)
    return sp.csr_matrix((np.concatenate(coo_v), (np.concatenate(coo_r), np.concatenate(coo_c))),
                         shape=(off, S.shape[1]))


def _relative_error(est: np.ndarray, true: np.ndarray, w: np.ndarray, modulo_constant: bool) -> float:
    e, t = est.copy(), np.asarray(true, dtype=float)
    if modulo_constant:
        e = e - np.sum(w * e) / np.sum(w)
        t = t - np.sum(w * t) / np.sum(w)
    den = np.sqrt(np.sum(w * t**2))
    return float(np.sqrt(np.sum(w * (e - t) ** 2)) / den) if den > 0 else float("nan")


class NormalSolver:
    """Preconditioned CG on the scaled normal equations of one assembled system.

    A ridge of ``ridge`` (relative, in the column-equilibrated variables) is
    added so that systems with a kernel stay definite; it selects the
    representative of smallest scaled norm and is far below the smallest
    nonzero eigenvalues met in practice. The preconditioner is a sparse
    Cholesky factor at ``base_weight``; other regularization weights reuse
    it, which costs a few extra CG iterations instead of a new factorization.
    """

    def __init__(self, S: DiscreteLinearizedSystem, base_weight: float = 0.0, ridge: float = 1e-14):
        A = S.matrix.tocsr()
        self.S = S
        self._AtA = (A.T @ A).tocsr()
        G = _smoothing_matrix(S)
        self._GtG = (G.T @ G).tocsr()
        diag = self._AtA.diagonal()
        if np.any(diag == 0):
            raise ReconstructionError(f"{int(np.sum(diag == 0))} unknowns do not enter the system")
        self._d = sp.diags(1.0 / np.sqrt(diag))
        self.ridge = ridge
        self._P = SPDSolver(self._scaled(base_weight)).as_operator()

    def _scaled(self, w: float) -> sp.csr_matrix:
        n = self.S.shape[1]
        return (self._d @ (self._AtA + w**2 * self._GtG) @ self._d + self.ridge * sp.identity(n)).tocsr()

    def solve(self, b: np.ndarray, reg_weight: float, rtol: float = 1e-10, maxiter: int = 500):
        rhs = self._d @ (self.S.matrix.T @ b)
        if not np.any(rhs):
            return np.zeros(self.S.shape[1]), 0
        count = [0]

        def cb(_):
            count[0] += 1

        y, info = spla.cg(self._scaled(reg_weight), rhs, M=self._P, rtol=rtol, maxiter=maxiter, callback=cb)
        if info != 0 or not np.all(np.isfinite(y)):
            raise ReconstructionError(f"normal-equation CG did not converge in {maxiter} iterations")
        return self._d @ y, count[0]


def reconstruct(kind: str, state: ReferenceState, data: list, reg_weight: float,
                truth: dict | None = None, boundary: str = "B",
                solver: NormalSolver | None = None) -> ReconstructionResult:
    """Regularized least-squares solution of the stacked system with interior data ``data``.

    Minimizes |A w - rhs|^2 + reg_weight^2 |D w_param|^2 with D the
    first-order differences. ``truth`` maps parameter names to ground-truth
    arrays; pressure errors are measured modulo constants (the kernel of
    the pressure system). Pass ``solver`` to reuse a factorization.
    """
    if reg_weight < 0:
        raise ValueError("reg_weight must be nonnegative")
    if solver is None:
        S = assemble(kind, state, len(data), boundary)
        solver = NormalSolver(S, reg_weight)
    S = solver.S
    b = S.rhs(data)
    x, itn = solver.solve(b, reg_weight)
    inc = S.split(x)
    resid = float(np.linalg.norm(S.matrix @ x - b))
    errs = {}
    if truth:
        w = state.grid.trapezoid_weights()
        for name, t in truth.items():
            est = inc[name]
            ww = np.broadcast_to(w, est.shape)
            errs[name] = _relative_error(est, t, ww, modulo_constant=(name == "dp"))
    return ReconstructionResult(inc, resid, float(reg_weight), itn, errs)


def reconstruct_sweep(kind: str, state: ReferenceState, data: list, weights, truth: dict,
                      key: str | None = None, boundary: str = "B"):
    """Run :func:`reconstruct` over ``weights`` sharing one factorization.

    Returns (all results, best result by relative error in ``key``).
    """
    weights = sorted(float(w) for w in weights)
    S = assemble(kind, state, len(data), boundary)
    solver = NormalSolver(S, weights[0])
    results = [reconstruct(kind, state, data, w, truth, boundary, solver) for w in weights]
    key = key or next(iter(truth))
    best = min(results, key=lambda r: r.rel_errors[key])
    return results, best


# ---------------------------------------------------------------------------
# spectral probe

@dataclass
class NullspaceProbe:
    singular_values: np.ndarray
    sigma_max: float
    vectors: np.ndarray                 # full unknown vectors, one per column
    param_vectors: dict[str, np.ndarray]  # parameter blocks of each vector (columns)
    kernel_dim: int

    def relative(self) -> np.ndarray:
        return self.singular_values / self.sigma_max


def smallest_singular(A: sp.spmatrix, k: int, seed: int = 0):
    """k smallest singular pairs (sigma, v) of a sparse matrix via shift-invert on A^T A.

    The shift sits slightly below zero so the shifted normal matrix is
    positive definite even when A has a kernel.
    """
    n = A.shape[1]
    k = min(k, n - 1)
    AtA = (A.T @ A).tocsc()
    # fixed start vectors keep the probe reproducible
    v0 = np.random.default_rng(seed).uniform(0.5, 1.5, n)
    smax = float(np.sqrt(spla.eigsh(AtA, k=1, which="LM", return_eigenvectors=False, tol=1e-8, v0=v0)[0]))
    shift = -1e-13 * smax**2
    inv = SPDSolver(AtA - shift * sp.identity(n, format="csc")).as_operator()
    _, vecs = spla.eigsh(AtA, k=k, sigma=shift, which="LM", OPinv=inv, v0=v0)
    sig = np.linalg.norm(A @ vecs, axis=0)
    order = np.argsort(sig)
    return sig[order], vecs[:, order], smax


def nullspace_probe(S: DiscreteLinearizedSystem, k: int = 4, max_columns: int = MAX_SVD_COLUMNS,
                    gap: float = KERNEL_GAP) -> NullspaceProbe:
    """k smallest singular pairs; kernel dimension counts sigma < gap * sigma_max."""
    if S.shape[1] > max_columns:
        raise SizeLimitError(f"{S.shape[1]} unknowns exceed the probe limit of {max_columns}")
    sig, vecs, smax = smallest_singular(S.matrix, k)
    params = {b.name: vecs[b.start:b.stop] for b in S.param_blocks}
    return NullspaceProbe(sig, smax, vecs, params, int(np.sum(sig < gap * smax)))


def correlation(a: np.ndarray, b: np.ndarray) -> float:
    a, b = np.ravel(a), np.ravel(b)
    den = np.linalg.norm(a) * np.linalg.norm(b)
    return float(abs(a @ b) / den) if den > 0 else 0.0


# ---------------------------------------------------------------------------
# stability ratios

def band_limited_field(grid: Grid, rng: np.random.Generator, modes: int = 4) -> np.ndarray:
    """Random combination of the lowest cosine modes per axis, scaled to unit max."""
    xs = [(grid.axis(k) - grid.origin[k]) / (grid.upper[k] - grid.origin[k]) for k in range(3)]
    c = rng.normal(size=(modes,) * 3)
    basis = [np.cos(np.pi * np.arange(modes)[:, None] * x[None]) for x in xs]
    f = np.einsum("abc,ai,bj,ck->ijk", c, *basis)
    return f / np.abs(f).max()


def forward_increment(kind: str, state: ReferenceState, param: np.ndarray, k: int = 0,
                      rtol: float = 1e-10) -> VectorField:
    """du_k solving the quasi-static linearized equation for one parameter increment."""
    kind = normalize_kind(kind)
    g = state.grid
    prm = state.params
    eps = state.strains[k]
    if kind == "A_mu":
        src = tensor_divergence(SymTensorField(g, 2.0 * param * eps.values)).values
        lam = np.zeros(g.dims)
    elif kind == "A_p":
        src = gradient(ScalarField(g, param)).values
        lam = np.zeros(g.dims)
    elif kind == "A_lambda":
        src = gradient(ScalarField(g, param * eps.trace().values)).values
        lam = prm.lam.values
    else:
        raise ValueError(f"quasi-static forward increment not available for {kind}")
    p = MaterialParams(ScalarField(g, lam), prm.mu, prm.rho)
    return solve_quasistatic(p, VectorField(g, -src), rtol=rtol)


def parameter_kernel(kind: str, state: ReferenceState, n_measurements: int | None = None,
                     k: int = 4, gap: float = KERNEL_GAP) -> np.ndarray:
    """Orthonormal basis (columns) of the numerical kernel of the parameter-to-momentum block.

    Kernel vectors of the full system have du = 0 (the data rows are the
    identity on du), so the kernel is that of the parameter columns alone.
    """
    S = assemble(kind, state, n_measurements)
    cols = np.concatenate([np.arange(b.start, b.stop) for b in S.param_blocks])
    Bp = S.matrix[:, cols]
    sig, vecs, smax = smallest_singular(Bp, k)
    return vecs[:, sig < gap * smax]


@dataclass
class StabilityStats:
    ratios: np.ndarray
    kernel_dim: int

    @property
    def max(self) -> float:
        return float(self.ratios.max()) if self.ratios.size else float("nan")

    @property
    def median(self) -> float:
        return float(np.median(self.ratios)) if self.ratios.size else float("nan")


def stability_ratio(kind: str, state: ReferenceState, n_trials: int, seed: int = 0,
                    modes: int = 4, require_condition: bool = True, cond_tol: float = 1e-8) -> StabilityStats:
    """Ratios |dparam|_0 / sum_k |du_k|_1 for random band-limited increments.

    The numerical kernel of the system is projected out first (orthogonal
    projection in the nodal inner product). With ``require_condition`` the
    state must pass the kind's pointwise condition (det eps for the shear
    modulus, div u for the first Lame parameter).
    """
    kind = normalize_kind(kind)
    if kind not in ("A_mu", "A_p", "A_lambda"):
        raise ValueError(f"stability ratios need a quasi-static forward model; {kind} is not supported")
    if require_condition and kind != "A_p":
        rep = condition_maps(state, cond_tol)
        cond = {"A_mu": "mu", "A_lambda": "lambda"}[kind]
        if rep.verdict(cond) != "pass":
            raise ConditionError(f"state fails the {cond} condition at {rep.failing_points(cond)} points")
    if n_trials <= 0:
        return StabilityStats(np.zeros(0), 0)
    g = state.grid
    Kb = parameter_kernel(kind, state)
    rng = np.random.default_rng(seed)
    ratios = []
    for _ in range(n_trials):
        f = band_limited_field(g, rng, modes).ravel()
        if Kb.shape[1]:
            f = f - Kb @ (Kb.T @ f)
        f = f.reshape(g.dims)
        den = sum(sobolev_norm(forward_increment(kind, state, f, k), 1) for k in range(state.n_measurements))
        ratios.append(sobolev_norm(ScalarField(g, f), 0) / den if den > 0 else np.inf)
    return StabilityStats(np.array(ratios), int(Kb.shape[1]))
