"""Covering (Lopatinskii) condition checks.

The generic checker follows the exponential ansatz: profiles ``v e^{lam z}``
along the inward normal solve ``L0(i zeta + nu d/dz) u = 0`` exactly when
``L0(i zeta + nu lam) v = 0``. The condition holds at a boundary frame when
no nonzero combination of decaying profiles (Re lam < 0) is annihilated by
the boundary symbol.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from elastostab.grid import Grid
from elastostab.symbols import BuiltOperator, MatrixDiffOp

SATISFIED, VIOLATED, UNDECIDED = "satisfied", "violated", "undecided"


class FrameError(ValueError):
    """Boundary frame violates |nu| = 1, nu . zeta = 0 or zeta != 0."""


@dataclass(frozen=True)
class BoundaryFrame:
    y: np.ndarray
    nu: np.ndarray
    zeta: np.ndarray

    def __post_init__(self):
        nu = np.asarray(self.nu, dtype=float)
        zeta = np.asarray(self.zeta, dtype=float)
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float))
        object.__setattr__(self, "nu", nu)
        object.__setattr__(self, "zeta", zeta)
        if nu.shape != zeta.shape:
            raise FrameError("nu and zeta must have the same length")
        nz = np.linalg.norm(zeta)
        if nz == 0:
            raise FrameError("zeta must be nonzero")
        if abs(np.linalg.norm(nu) - 1) > 1e-12:
            raise FrameError("nu must be a unit vector")
        if abs(nu @ zeta) > 1e-12 * nz:
            raise FrameError("zeta must be tangential (nu . zeta = 0)")

    @property
    def zeta_s(self) -> np.ndarray:
        return self.zeta[:3]

    @property
    def nu_s(self) -> np.ndarray:
        return self.nu[:3]


def random_frame(rng: np.random.Generator, dim: int = 3, y=None) -> BoundaryFrame:
    """Random unit normal with a random tangential covector.

    For ``dim=4`` the normal is spatial (lateral boundary of a space-time
    cylinder) while the tangential covector may have a time component.
    """
    nu = rng.normal(size=dim)
    if dim == 4:
        nu[3] = 0.0
    nu /= np.linalg.norm(nu)
    z = rng.normal(size=dim)
    z -= (z @ nu) * nu
    z *= rng.uniform(0.2, 3.0) / np.linalg.norm(z)
    return BoundaryFrame(np.zeros(dim) if y is None else y, nu, z)


def box_frames(grid: Grid, n_tangent: int = 8, stride: int = 1):
    """Frames on the faces of the grid box.

    Yields ``(face, flat_index, frame)`` with ``face`` like ``"x1-"``; ``nu``
    is the inward face normal and ``zeta`` runs over ``n_tangent``
    equispaced unit directions in the face plane. Edge and corner nodes are
    attributed to the first face that contains them.
    """
    seen = set()
    pts = grid.points()
    for ax in range(3):
        for side, sign in (("-", 1.0), ("+", -1.0)):
            idx = [slice(None, None, stride)] * 3
            idx[ax] = 0 if side == "-" else grid.dims[ax] - 1
            flat = np.arange(grid.n_points).reshape(grid.dims)[tuple(idx)].ravel()
            nu = np.zeros(3)
            nu[ax] = sign
            t1, t2 = [k for k in range(3) if k != ax]
            for f in flat:
                if f in seen:
                    continue
                seen.add(f)
                for q in range(n_tangent):
                    th = 2 * np.pi * q / n_tangent
                    z = np.zeros(3)
                    z[t1], z[t2] = np.cos(th), np.sin(th)
                    yield f"x{ax + 1}{side}", int(f), BoundaryFrame(pts[f], nu, z)


# ---------------------------------------------------------------------------
# analytic checks

@dataclass
class MuVerdict:
    satisfied: bool | None
    branch: str
    degenerate: bool = False


def check_L_mu(frame: BoundaryFrame, eps_at_y: np.ndarray, tol: float = 1e-12) -> MuVerdict:
    """Covering condition for the shear-modulus operator at one frame.

    With g_j the strain columns, profiles reduce to
    ``g_j . (i zeta + nu d/dz) u = 0``. If every ``g_j . nu`` is nonzero the
    exponents are purely imaginary. If some ``g_j . nu`` vanishes while
    ``g_j . zeta`` does not, the profile is forced to zero. When the strain
    annihilates both ``nu`` and ``zeta`` (e.g. zero strain) neither argument
    applies and the frame is flagged as degenerate with an undecided verdict.
    """
    eps = np.asarray(eps_at_y, dtype=float)
    nu, zeta = frame.nu_s, frame.zeta_s
    scale = max(np.abs(eps).max(), 1e-300)
    gn = eps @ nu
    gz = eps @ zeta / np.linalg.norm(zeta)
    small_n = np.abs(gn) <= tol * scale
    if not small_n.any():
        return MuVerdict(True, "g_j . nu != 0: only oscillating exponents")
    if np.any(small_n & (np.abs(gz) > tol * scale)):
        return MuVerdict(True, "g_j . nu = 0 with g_j . zeta != 0: profile forced to zero")
    if np.all(small_n) and np.all(np.abs(gz) <= tol * scale):
        return MuVerdict(None, "strain annihilates nu and zeta: not covered by either argument", True)
    # some g_j . nu vanish together with g_j . zeta; the remaining rows still give imaginary exponents
    return MuVerdict(True, "g_j . nu != 0 for the nonvanishing rows: only oscillating exponents")


def check_L_rho(frame: BoundaryFrame, u_tt_at_y: np.ndarray, scale: float = 1.0,
                tol: float = 1e-12) -> bool:
    """True iff |u_tt| > tol * scale; a vanishing acceleration leaves the density free."""
    return bool(np.linalg.norm(np.asarray(u_tt_at_y, dtype=float)) > tol * scale)


def check_L_pmu(frame: BoundaryFrame, eps_at_y: np.ndarray, tol_rel: float = 1e-10) -> bool:
    """Sufficient condition for the pressure/shear operator with boundary rows on dp, dmu.

    True when the normal is not an eigenvector of the strain. False means the
    sufficient condition is not met; it is inconclusive, not a proof of failure.
    """
    eps = np.asarray(eps_at_y, dtype=float)
    nu = frame.nu_s
    en = eps @ nu
    resid = en - (nu @ en) * nu
    return bool(np.linalg.norm(resid) > tol_rel * max(np.linalg.norm(eps, 2), 1e-300))


# ---------------------------------------------------------------------------
# explicit linear systems

def nondeg_system(frame: BoundaryFrame, rel_tol: float = 1e-10):
    """9 x 6 matrix of A = 0 in the unknowns (g_j . zeta, g_j . nu).

    Rows are a_pq, b_pq / i, c_pq for (p, q) in (1,2), (1,3), (2,3).
    Returns the matrix and an orthonormal nullspace basis (columns).
    """
    mat = _coefficient_rows(frame.nu_s, frame.zeta_s)
    A = np.concatenate([mat["a"], mat["b"], mat["c"]])
    return A, _nullspace(A, rel_tol)


def _coefficient_rows(nu: np.ndarray, zeta: np.ndarray) -> dict[str, np.ndarray]:
    # linear forms of a_pq, b_pq / i and c_pq in X = (Z_1, Z_2, Z_3, N_1, N_2, N_3),
    # with Z_j = g_j . zeta and N_j = g_j . nu
    rows = {"a": [], "b": [], "c": []}
    for p, q in ((0, 1), (0, 2), (1, 2)):
        a = np.zeros(6)
        a[3 + q] += nu[p]
        a[3 + p] -= nu[q]
        b = np.zeros(6)
        b[3 + q] += zeta[p]
        b[q] += nu[p]
        b[3 + p] -= zeta[q]
        b[p] -= nu[q]
        c = np.zeros(6)
        c[p] += zeta[q]
        c[q] -= zeta[p]
        rows["a"].append(a)
        rows["b"].append(b)
        rows["c"].append(c)
    return {k: np.array(v) for k, v in rows.items()}


def nodouble_system(frame: BoundaryFrame, gamma: float, delta: float, rel_tol: float = 1e-10):
    """6 x 6 matrix of the proportionality relations between the rows of A.

    Rows encode a13 - gamma a12, a23 - delta a12 and the same for b and c,
    in the unknowns (g_j . zeta, g_j . nu). Returns ``(matrix, rank)``.

    Every a_pq, b_pq, c_pq vanishes at (zeta, nu), so that vector lies in the
    kernel for all gamma and delta and the rank is at most 5. Solutions
    then satisfy g_j . nu = kappa nu_j, so nu is a strain eigenvector and the
    hypothesis of the pressure/shear covering result still rules them out.
    """
    r = _coefficient_rows(frame.nu_s, frame.zeta_s)
    rows = []
    for key in ("a", "b", "c"):
        x12, x13, x23 = r[key]
        rows.append(x13 - gamma * x12)
        rows.append(x23 - delta * x12)
    A = np.array(rows)
    sv = np.linalg.svd(A, compute_uv=False)
    rank = int(np.sum(sv > rel_tol * max(sv[0], 1e-300)))
    return A, rank


def stacked_g(eps: np.ndarray, frame: BoundaryFrame) -> np.ndarray:
    """(g_1 . zeta, g_2 . zeta, g_3 . zeta, g_1 . nu, g_2 . nu, g_3 . nu)."""
    eps = np.asarray(eps, dtype=float)
    return np.concatenate([eps.T @ frame.zeta_s, eps.T @ frame.nu_s])


def _nullspace(A: np.ndarray, rel_tol: float) -> np.ndarray:
    u, sv, vh = np.linalg.svd(A)
    top = sv[0] if sv.size else 0.0
    rank = int(np.sum(sv > rel_tol * max(top, 1e-300)))
    return vh[rank:].conj().T


# ---------------------------------------------------------------------------
# generic checker

@dataclass
class GenericVerdict:
    status: str
    decaying_roots: list[complex] = field(default_factory=list)
    reason: str = ""


def _poly_coeffs(P0: MatrixDiffOp, frame: BoundaryFrame, degree: int, radius: float) -> np.ndarray:
    """Matrix coefficients C_k of P(lam) = P0(i zeta + nu lam) = sum_k C_k lam^k."""
    n = 1 << max(1, int(np.ceil(np.log2(degree + 1))))
    w = radius * np.exp(2j * np.pi * np.arange(n) / n)
    d = 1j * frame.zeta[None] + frame.nu[None] * w[:, None]
    samples = P0.evaluate(d)
    c = np.fft.fft(samples, axis=0) / n
    c = c / (radius ** np.arange(n))[:, None, None]
    return c[: degree + 1]


def _polyval(C: np.ndarray, lam: complex) -> np.ndarray:
    return sum(Ck * lam**k for k, Ck in enumerate(C))


def _polyder(C: np.ndarray, lam: complex) -> np.ndarray:
    return sum(k * Ck * lam ** (k - 1) for k, Ck in enumerate(C) if k)


def _cluster(roots: np.ndarray, radius: float) -> list[complex]:
    # merge numerically split multiple roots; their mean is accurate
    out: list[list[complex]] = []
    for r in sorted(roots, key=lambda z: (z.real, z.imag)):
        for grp in out:
            if abs(np.mean(grp) - r) <= radius:
                grp.append(r)
                break
        else:
            out.append([r])
    return [complex(np.mean(g)) for g in out]


def check_generic(L0: MatrixDiffOp, B0: MatrixDiffOp | None, frame: BoundaryFrame,
                  tol: float = 1e-8, repeat_tol: float = 1e-6, seed: int = 0) -> GenericVerdict:
    """Exponential-ansatz covering check at one frame.

    Steps: build P(lam) = L0(i zeta + nu lam) as a matrix polynomial; find
    the roots of det(W P(lam)) for a fixed random m x M mixing W; keep those
    with Re lam < 0 at which P itself loses rank; collect nullspace vectors;
    the condition holds iff the boundary symbol applied to all of them has
    full column rank. A Jordan chain at a decaying root (profiles
    z e^{lam z}) or two distinct decaying roots closer than ``repeat_tol``
    returns undecided.
    """
    L0 = L0.freeze(frame.y)
    if B0 is not None:
        B0 = B0.freeze(frame.y)
    M, m = L0.shape
    if M < m:
        return GenericVerdict(VIOLATED, reason="fewer equations than unknowns")
    colmax = [max((L0.order(i, j) or 0) for i in range(M)) for j in range(m)]
    degree = max(sum(colmax), 1)
    radius = max(1.0, float(np.linalg.norm(frame.zeta)))
    C = _poly_coeffs(L0, frame, max(degree, L0.max_order()), radius)
    rng = np.random.default_rng(seed)

    def rel_smin(P):
        sv = np.linalg.svd(P, compute_uv=False)
        return sv[m - 1] / max(sv[0], 1e-300)

    probe = complex(rng.normal(), rng.normal()) * radius
    if rel_smin(_polyval(C, probe)) < tol:
        return GenericVerdict(VIOLATED, reason="symbol rank-deficient for every lam: a free decaying profile exists")
    W = rng.normal(size=(m, M)) + 1j * rng.normal(size=(m, M))
    n = 1 << max(1, int(np.ceil(np.log2(degree + 1))))
    w = radius * np.exp(2j * np.pi * np.arange(n) / n)
    dets = np.array([np.linalg.det(W @ _polyval(C, z)) for z in w])
    dc = np.fft.fft(dets) / n / radius ** np.arange(n)
    dc = dc[: degree + 1]
    big = np.abs(dc).max()
    nz = np.flatnonzero(np.abs(dc) > 1e-12 * big)
    dc = dc[: nz[-1] + 1] if nz.size else dc[:1]
    roots = np.roots(dc[::-1]) if dc.size > 1 else np.array([])
    cands = _cluster(roots[roots.real < -tol * radius], 1e-4 * radius)
    verified = []
    for lam in cands:
        P = _polyval(C, lam)
        if rel_smin(P) <= 1e-7:
            verified.append(lam)
    if not verified:
        return GenericVerdict(SATISFIED, [], "no decaying profile solves the interior system")
    for a in range(len(verified)):
        for b in range(a + 1, len(verified)):
            if abs(verified[a] - verified[b]) < repeat_tol * radius:
                return GenericVerdict(UNDECIDED, verified, "two decaying roots closer than the resolution")
    cols = []
    for lam in verified:
        P = _polyval(C, lam)
        u, sv, vh = np.linalg.svd(P)
        null = vh[np.sum(sv > 1e-7 * sv[0]):].conj().T
        left = u[:, np.sum(sv > 1e-7 * sv[0]):]
        G = left.conj().T @ _polyder(C, lam) @ null
        gs = np.linalg.svd(G, compute_uv=False) if G.size else np.zeros(0)
        scale = max(np.linalg.norm(_polyder(C, lam)), 1e-300)
        if G.shape[0] < null.shape[1] or (gs.size and gs[-1] < 1e-8 * scale):
            return GenericVerdict(UNDECIDED, verified, f"Jordan chain at lam={lam:.6g}: z e^(lam z) profiles")
        if B0 is None:
            return GenericVerdict(VIOLATED, verified, "decaying profiles and no boundary rows")
        d = 1j * frame.zeta + frame.nu * lam
        cols.append(B0.evaluate(d) @ null)
    Bmat = np.concatenate(cols, axis=1)
    if Bmat.shape[0] < Bmat.shape[1]:
        return GenericVerdict(VIOLATED, verified, "more decaying profiles than boundary conditions")
    sv = np.linalg.svd(Bmat, compute_uv=False)
    top = max(sv[0], 1e-300)
    if sv[-1] / top < tol or sv[0] < tol:
        return GenericVerdict(VIOLATED, verified, "a decaying profile satisfies the boundary conditions")
    return GenericVerdict(SATISFIED, verified, "boundary symbol is injective on decaying profiles")


def check_built(built: BuiltOperator, frame: BoundaryFrame, prime: bool = False, **kw) -> GenericVerdict:
    """:func:`check_generic` for a builder output, using its boundary operator."""
    B0 = None
    if (built.boundary_prime if prime else built.boundary) is not None:
        B0 = built.boundary_principal(frame.nu, prime)
    return check_generic(built.principal, B0, frame, **kw)
