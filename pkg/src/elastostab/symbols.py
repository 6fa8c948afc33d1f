"""Matrix differential operators, Douglis-Nirenberg principal parts and symbols.

An operator is stored entrywise as a list of terms ``coeff * d^alpha`` where
``alpha`` is a multi-index over the independent variables (x1, x2, x3 and
optionally t) and ``coeff`` is a constant or a static :class:`ScalarField`.
Symbols are evaluated by substituting a complex vector ``d`` for the
derivative; the usual principal symbol is the case ``d = i xi``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from elastostab.elasticity import ReferenceState, bal_condition
from elastostab.grid import Grid, GridError, ScalarField, gradient, tensor_divergence

log = logging.getLogger(__name__)

RANK_TOL = 1e-9
KINDS = ("L_p", "L_mu", "L_rho", "L_pmu", "L_pmurho", "L_lambda",
         "helmholtz", "maxwell", "paper_example")


class DNError(ValueError):
    """Douglis-Nirenberg numbers inconsistent with the operator orders."""


class StateError(ValueError):
    """Reference state lacks a field needed by the requested operator."""


# ---------------------------------------------------------------------------
# operators

@dataclass(frozen=True)
class Term:
    alpha: tuple[int, ...]
    coeff: complex | ScalarField

    @property
    def order(self) -> int:
        return int(sum(self.alpha))

    @property
    def is_zero(self) -> bool:
        return not isinstance(self.coeff, ScalarField) and self.coeff == 0


@dataclass(frozen=True)
class MatrixDiffOp:
    """M x m matrix of polynomial differential operators.

    ``entries[i][j]`` is a tuple of :class:`Term`. ``n_vars`` is 3 for purely
    spatial operators, 4 for spatio-temporal ones (t last) and 2 for the
    planar fixtures.
    """

    entries: tuple[tuple[tuple[Term, ...], ...], ...]
    n_vars: int = 3
    row_labels: tuple[str, ...] | None = None
    col_labels: tuple[str, ...] | None = None

    def __post_init__(self):
        ents = tuple(tuple(tuple(t for t in e if not t.is_zero) for e in row) for row in self.entries)
        if not ents or len({len(r) for r in ents}) != 1 or len(ents[0]) == 0:
            raise ValueError("entries must form a non-empty rectangular table")
        for row in ents:
            for e in row:
                for t in e:
                    if len(t.alpha) != self.n_vars or min(t.alpha) < 0:
                        raise ValueError(f"multi-index {t.alpha} invalid for {self.n_vars} variables")
        object.__setattr__(self, "entries", ents)
        grids = [t.coeff.grid for t in self.terms() if isinstance(t.coeff, ScalarField)]
        for g in grids[1:]:
            if not g.same_as(grids[0]):
                raise GridError("coefficient fields live on different grids")
        for t in self.terms():
            if isinstance(t.coeff, ScalarField) and t.coeff.is_dynamic:
                raise GridError("coefficient fields must be static; pick a snapshot first")

    @classmethod
    def from_terms(cls, shape: tuple[int, int], terms: dict, n_vars: int = 3, **labels):
        """Build from ``{(i, j): [(alpha, coeff), ...]}``."""
        M, m = shape
        table = [[[] for _ in range(m)] for _ in range(M)]
        for (i, j), lst in terms.items():
            for alpha, c in lst:
                table[i][j].append(Term(tuple(int(a) for a in alpha), c))
        return cls(tuple(tuple(tuple(e) for e in row) for row in table), n_vars, **labels)

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.entries), len(self.entries[0])

    @property
    def grid(self) -> Grid | None:
        for t in self.terms():
            if isinstance(t.coeff, ScalarField):
                return t.coeff.grid
        return None

    @property
    def is_constant(self) -> bool:
        return self.grid is None

    def terms(self):
        for row in self.entries:
            for e in row:
                yield from e

    def flat_terms(self):
        """(i, j, term) triples."""
        for i, row in enumerate(self.entries):
            for j, e in enumerate(row):
                for t in e:
                    yield i, j, t

    def order(self, i: int, j: int) -> int | None:
        """Highest |alpha| in entry (i, j); None for the zero entry."""
        e = self.entries[i][j]
        return max(t.order for t in e) if e else None

    def max_order(self) -> int:
        return max((t.order for t in self.terms()), default=0)

    def filtered(self, keep: Callable[[int, int, Term], bool]) -> MatrixDiffOp:
        ents = tuple(tuple(tuple(t for t in e if keep(i, j, t)) for j, e in enumerate(row))
                     for i, row in enumerate(self.entries))
        return MatrixDiffOp(ents, self.n_vars, self.row_labels, self.col_labels)

    def freeze(self, x: Sequence[float]) -> MatrixDiffOp:
        """Constant-coefficient operator with every field sampled at ``x``."""
        if self.is_constant:
            return self
        x = np.asarray(x, dtype=float)
        pt = x[:3][None]

        def fix(t: Term) -> Term:
            if isinstance(t.coeff, ScalarField):
                return Term(t.alpha, complex(t.coeff.sample(pt)[0]))
            return t

        ents = tuple(tuple(tuple(fix(t) for t in e) for e in row) for row in self.entries)
        return MatrixDiffOp(ents, self.n_vars, self.row_labels, self.col_labels)

    def coefficient_values(self, flat_idx: np.ndarray | None = None) -> list[np.ndarray | complex]:
        """Coefficient of every term at grid nodes (flat C-order indices)."""
        out = []
        for _, _, t in self.flat_terms():
            if isinstance(t.coeff, ScalarField):
                v = t.coeff.values.ravel()
                out.append(v if flat_idx is None else v[flat_idx])
            else:
                out.append(complex(t.coeff))
        return out

    def evaluate(self, d: np.ndarray, coeffs: list | None = None) -> np.ndarray:
        """Substitute ``d`` (shape (..., n_vars), complex) for the derivative.

        Without ``coeffs`` the operator must be constant. With ``coeffs``
        (from :meth:`coefficient_values`) the leading axis of ``d`` indexes
        points and must match the coefficient arrays.
        """
        d = np.asarray(d, dtype=complex)
        if d.shape[-1] != self.n_vars:
            raise ValueError(f"derivative vector needs {self.n_vars} entries, got {d.shape[-1]}")
        if coeffs is None:
            if not self.is_constant:
                raise ValueError("operator has field coefficients; freeze it or pass coeffs")
            coeffs = self.coefficient_values()
        M, m = self.shape
        out = np.zeros(d.shape[:-1] + (M, m), dtype=complex)
        powers: dict[tuple[int, ...], np.ndarray] = {}
        for (i, j, t), c in zip(self.flat_terms(), coeffs):
            mono = powers.get(t.alpha)
            if mono is None:
                mono = np.ones(d.shape[:-1], dtype=complex)
                for k, a in enumerate(t.alpha):
                    if a:
                        mono = mono * d[..., k] ** a
                powers[t.alpha] = mono
            if np.ndim(c):
                c = np.asarray(c).reshape(c.shape + (1,) * (mono.ndim - 1))
            out[..., i, j] += c * mono
        return out


@dataclass(frozen=True)
class DNNumbers:
    s: tuple[int, ...]
    t: tuple[int, ...]
    sigma: tuple[int, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "s", tuple(int(v) for v in self.s))
        object.__setattr__(self, "t", tuple(int(v) for v in self.t))
        if self.sigma is not None:
            object.__setattr__(self, "sigma", tuple(int(v) for v in self.sigma))
        if any(v > 0 for v in self.s):
            raise DNError("row numbers must satisfy s_i <= 0")

    def check(self, op: MatrixDiffOp):
        M, m = op.shape
        if len(self.s) != M or len(self.t) != m:
            raise DNError(f"need {M} row and {m} column numbers, got {len(self.s)} and {len(self.t)}")
        for i in range(M):
            for j in range(m):
                o = op.order(i, j)
                if o is None:
                    continue
                bound = self.s[i] + self.t[j]
                if bound < 0:
                    raise DNError(f"entry ({i},{j}) must vanish since s_i + t_j = {bound} < 0")
                if o > bound:
                    raise DNError(f"entry ({i},{j}) has order {o} > s_i + t_j = {bound}")


@dataclass(frozen=True)
class SymbolMatrix:
    matrix: np.ndarray
    x: np.ndarray
    xi: np.ndarray

    def rank(self, rel_tol: float = RANK_TOL) -> int:
        sv = np.linalg.svd(self.matrix, compute_uv=False)
        if sv.size == 0 or sv[0] == 0:
            return 0
        return int(np.sum(sv >= rel_tol * sv[0]))


def principal_part(L: MatrixDiffOp, dn: DNNumbers) -> MatrixDiffOp:
    """Keep the terms of exact order s_i + t_j."""
    dn.check(L)
    return L.filtered(lambda i, j, t: t.order == dn.s[i] + dn.t[j])


def compute_sigma(B: MatrixDiffOp, t: Sequence[int], convention: str = "all") -> tuple[int, ...]:
    """Boundary orders sigma_k = max_j (b_kj - t_j).

    With ``convention="all"`` a vanishing entry counts as order 0, which is
    the reading that reproduces the planar worked example. ``"nonzero"``
    takes the maximum over nonvanishing entries only.
    """
    Q, m = B.shape
    if len(t) != m:
        raise DNError(f"need {m} column numbers, got {len(t)}")
    if convention not in ("all", "nonzero"):
        raise ValueError(f"unknown convention {convention!r}")
    out = []
    for k in range(Q):
        orders = [B.order(k, j) for j in range(m)]
        if all(o is None for o in orders):
            raise DNError(f"boundary row {k} is empty")
        if convention == "all":
            out.append(max((o or 0) - tj for o, tj in zip(orders, t)))
        else:
            out.append(max(o - tj for o, tj in zip(orders, t) if o is not None))
    return tuple(out)


def boundary_principal_part(B: MatrixDiffOp, t: Sequence[int], sigma: Sequence[int]) -> MatrixDiffOp:
    """Keep the boundary terms of exact order sigma_k + t_j."""
    return B.filtered(lambda k, j, term: term.order == sigma[k] + t[j])


def eval_symbol(L0: MatrixDiffOp, x: Sequence[float], xi: Sequence[float]) -> SymbolMatrix:
    """L0(x, i xi)."""
    xi = np.asarray(xi, dtype=float)
    if not np.any(xi):
        raise ValueError("covector xi must be nonzero")
    mat = L0.freeze(x).evaluate(1j * xi)
    return SymbolMatrix(mat, np.asarray(x, dtype=float), xi)


# ---------------------------------------------------------------------------
# ellipticity

def sphere_directions(n: int, dim: int = 3) -> np.ndarray:
    """Deterministic, roughly uniform unit vectors.

    Fibonacci lattice on the 2-sphere, equispaced angles on the circle and a
    Kronecker sequence mapped to the 3-sphere for spatio-temporal covectors.
    """
    k = np.arange(n) + 0.5
    if dim == 2:
        th = np.pi * k / n
        return np.stack([np.cos(th), np.sin(th)], axis=1)
    if dim == 3:
        golden = (1 + 5**0.5) / 2
        z = 1 - 2 * k / n
        r = np.sqrt(1 - z**2)
        ph = 2 * np.pi * k / golden
        return np.stack([r * np.cos(ph), r * np.sin(ph), z], axis=1)
    if dim == 4:
        g = 1.2207440846057596  # root of x^4 = x + 1, for a 3d Kronecker sequence
        u = np.mod(k[:, None] * (1.0 / g ** np.arange(1, 4))[None], 1.0)
        a, b = np.sqrt(1 - u[:, 0]), np.sqrt(u[:, 0])
        return np.stack([a * np.sin(2 * np.pi * u[:, 1]), a * np.cos(2 * np.pi * u[:, 1]),
                         b * np.sin(2 * np.pi * u[:, 2]), b * np.cos(2 * np.pi * u[:, 2])], axis=1)
    raise ValueError(f"unsupported dimension {dim}")


@dataclass
class EllipticityResult:
    elliptic: bool
    characteristic: list[np.ndarray]
    min_ratio: float


def _rank_ratios(mats: np.ndarray, m: int) -> np.ndarray:
    if mats.shape[-2] < m:
        return np.zeros(mats.shape[:-2])
    sv = np.linalg.svd(mats, compute_uv=False)
    top = sv[..., 0]
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(top > 0, sv[..., m - 1] / top, 0.0)
    return r


def ellipticity_test(L0: MatrixDiffOp, x: Sequence[float], n_samples: int = 256,
                     candidates: np.ndarray | None = None, rel_tol: float = RANK_TOL) -> EllipticityResult:
    """Check rank L0(x, i xi) = m over sampled and candidate directions."""
    C = L0.freeze(x)
    dirs = sphere_directions(n_samples, L0.n_vars) if n_samples else np.zeros((0, L0.n_vars))
    if candidates is not None and len(candidates):
        cand = np.asarray(candidates, dtype=float).reshape(-1, L0.n_vars)
        cand = cand[np.linalg.norm(cand, axis=1) > 0]
        dirs = np.concatenate([dirs, cand / np.linalg.norm(cand, axis=1, keepdims=True)])
    if len(dirs) == 0:
        raise ValueError("no directions to test")
    ratios = _rank_ratios(C.evaluate(1j * dirs), C.shape[1])
    bad = ratios < rel_tol
    return EllipticityResult(not bool(bad.any()), [dirs[k] for k in np.flatnonzero(bad)],
                             float(ratios.min()))


@dataclass
class EllipticityScan:
    """Pointwise ellipticity over grid nodes."""

    elliptic: np.ndarray          # bool per scanned point
    min_ratio: np.ndarray         # smallest sigma_min / sigma_max over directions
    worst_xi: np.ndarray          # direction attaining min_ratio
    flat_idx: np.ndarray


def ellipticity_scan(built: BuiltOperator, flat_idx: np.ndarray | None = None, n_samples: int = 256,
                     rel_tol: float = RANK_TOL, chunk: int = 256) -> EllipticityScan:
    """Vectorized :func:`ellipticity_test` at grid nodes of the builder's state."""
    L0 = built.principal
    g = L0.grid or (built.state.grid if built.state is not None else None)
    if flat_idx is None:
        if g is None:
            raise ValueError("constant operator: pass the points to scan explicitly")
        flat_idx = np.arange(g.n_points)
    flat_idx = np.asarray(flat_idx, dtype=np.int64)
    base = sphere_directions(n_samples, L0.n_vars)
    m = L0.shape[1]
    P = len(flat_idx)
    ok = np.zeros(P, dtype=bool)
    mins = np.zeros(P)
    worst = np.zeros((P, L0.n_vars))
    for s in range(0, P, chunk):
        idx = flat_idx[s:s + chunk]
        dirs = np.broadcast_to(base, (len(idx),) + base.shape)
        if built.candidates is not None:
            cand = built.candidates(idx)
            nrm = np.linalg.norm(cand, axis=-1, keepdims=True)
            cand = np.where(nrm > 0, cand / np.where(nrm > 0, nrm, 1.0), base[:1][None])
            dirs = np.concatenate([dirs, cand], axis=1)
        coeffs = L0.coefficient_values(idx)
        mats = L0.evaluate(1j * dirs, coeffs)
        r = _rank_ratios(mats, m)
        k = np.argmin(r, axis=1)
        mins[s:s + len(idx)] = r[np.arange(len(idx)), k]
        worst[s:s + len(idx)] = dirs[np.arange(len(idx)), k]
        ok[s:s + len(idx)] = mins[s:s + len(idx)] >= rel_tol
    return EllipticityScan(ok, mins, worst, flat_idx)


# ---------------------------------------------------------------------------
# builders

@dataclass
class BuiltOperator:
    """Operator with its DN numbers and boundary operators.

    ``boundary(nu)`` and ``boundary_prime(nu)`` return the boundary operator
    for inward normal ``nu`` (the fixtures depend on the normal).
    ``candidates(flat_idx)`` gives analytic candidate characteristic
    directions per grid node, shape (P, K, n_vars).
    """

    kind: str
    op: MatrixDiffOp
    dn: DNNumbers
    unknowns: tuple[str, ...]
    boundary: Callable[[np.ndarray], MatrixDiffOp] | None = None
    boundary_prime: Callable[[np.ndarray], MatrixDiffOp] | None = None
    candidates: Callable[[np.ndarray], np.ndarray] | None = None
    state: ReferenceState | None = None
    sigma_convention: str = "nonzero"
    principal: MatrixDiffOp = field(init=False)

    def __post_init__(self):
        self.principal = principal_part(self.op, self.dn)

    def __iter__(self):
        yield self.op
        yield self.dn

    def boundary_principal(self, nu: np.ndarray, prime: bool = False) -> MatrixDiffOp:
        make = self.boundary_prime if prime else self.boundary
        if make is None:
            raise ValueError(f"{self.kind} has no {'primed ' if prime else ''}boundary operator")
        B = make(np.asarray(nu, dtype=float))
        sigma = compute_sigma(B, self.dn.t, self.sigma_convention)
        return boundary_principal_part(B, self.dn.t, sigma)


def _e(k: int, n: int, times: int = 1) -> tuple[int, ...]:
    a = [0] * n
    a[k] += times
    return tuple(a)


def _zero(n: int) -> tuple[int, ...]:
    return (0,) * n


def _sf(grid: Grid, values: np.ndarray) -> ScalarField:
    return ScalarField(grid, np.asarray(values))


def _elastic_block(terms: dict, r0: int, c0: int, n: int, mu: ScalarField,
                   lam: ScalarField | None, rho: ScalarField | None):
    """2 div(mu eps(du)) [+ grad(lam div du)] [- rho du_tt] written as terms."""
    g = mu.grid
    dmu = gradient(mu)
    dlam = gradient(lam) if lam is not None else None
    for i in range(3):
        for k in range(3):
            lst = terms.setdefault((r0 + i, c0 + k), [])
            if i == k:
                for j in range(3):
                    lst.append((_e(j, n, 2), mu))
                    lst.append((_e(j, n), _sf(g, dmu.values[j])))
            lst.append((tuple(a + b for a, b in zip(_e(i, n), _e(k, n))), mu))
            lst.append((_e(i, n), _sf(g, dmu.values[k])))
            if lam is not None:
                lst.append((tuple(a + b for a, b in zip(_e(i, n), _e(k, n))), lam))
                lst.append((_e(k, n), _sf(g, dlam.values[i])))
            if rho is not None and i == k:
                lst.append((_e(3, n, 2), _sf(g, -rho.values)))


def _identity_rows(terms: dict, r0: int, c0: int, n: int):
    for i in range(3):
        terms.setdefault((r0 + i, c0 + i), []).append((_zero(n), 1.0))


def _strain_candidates(strains: list[np.ndarray], n: int) -> Callable[[np.ndarray], np.ndarray]:
    # eigenvectors of each strain are the only possible characteristic directions
    def cand(idx: np.ndarray) -> np.ndarray:
        vecs = []
        for e in strains:
            _, v = np.linalg.eigh(e[idx])
            vecs.append(np.swapaxes(v, -1, -2))
        out = np.concatenate(vecs, axis=1) if vecs else np.zeros((len(idx), 0, 3))
        if n == 4:
            out = np.concatenate([out, np.zeros(out.shape[:-1] + (1,))], axis=-1)
        return out
    return cand


def _select_measurements(state: ReferenceState, measurements: int | None, snapshot: int | None):
    if measurements is None:
        measurements = state.n_measurements
    st = state.subset(measurements)
    if st.is_dynamic:
        st = st.snapshot(st.displacements[0].n_snapshots // 2 if snapshot is None else snapshot)
    return st


def build_operator(kind: str, state: ReferenceState | None = None, *, measurements: int | None = None,
                   snapshot: int | None = None, dynamic: bool | None = None,
                   dn_choice: tuple[int, ...] = (1, 3)) -> BuiltOperator:
    """Linearized elastography operators and the classical fixtures.

    The elastography kinds take their coefficient fields from ``state``
    (one snapshot of a time-dependent state; the middle one by default).
    ``dynamic`` selects the spatio-temporal form with variables
    (x1, x2, x3, t); it defaults to whether accelerations are available and
    is forced for the density kinds. ``dn_choice`` picks the column numbers
    (1, 3) or (1, 2) of the planar worked example.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown operator kind {kind!r}; choose from {', '.join(KINDS)}")
    if kind == "helmholtz":
        return _helmholtz()
    if kind == "maxwell":
        return _maxwell()
    if kind == "paper_example":
        return _planar_example(tuple(dn_choice))
    if state is None:
        raise StateError(f"{kind} needs a reference state")
    st = _select_measurements(state, measurements, snapshot)
    has_acc = all(a is not None for a in st.accels)
    if kind in ("L_rho", "L_pmurho") and dynamic is None:
        dynamic = True
    if dynamic is None:
        dynamic = has_acc
    if dynamic and not has_acc:
        raise StateError(f"{kind} in the dynamic form needs u_tt for every experiment")
    if kind == "L_rho" and not dynamic:
        raise StateError("L_rho needs accelerations (the density drops out when u_tt = 0)")
    return _elastography(kind, st, dynamic)


def _elastography(kind: str, st: ReferenceState, dynamic: bool) -> BuiltOperator:
    n = 4 if dynamic else 3
    g = st.grid
    prm = st.params
    params = {"L_p": ("dp",), "L_mu": ("dmu",), "L_rho": ("drho",), "L_pmu": ("dp", "dmu"),
              "L_pmurho": ("dp", "dmu", "drho") if dynamic else ("dp", "dmu"),
              "L_lambda": ("dlam",)}[kind]
    tnum = {"dp": 1, "dmu": 1, "drho": 0, "dlam": 1}
    K = st.n_measurements
    npar = len(params)
    m = npar + 3 * K
    M = 6 * K
    terms: dict = {}
    strains = []
    for k in range(K):
        r0 = 6 * k
        c0 = npar + 3 * k
        eps = st.strains[k]
        strains.append(eps.matrix().reshape(-1, 3, 3))
        for c, name in enumerate(params):
            for i in range(3):
                lst = terms.setdefault((r0 + i, c), [])
                if name == "dp":
                    lst.append((_e(i, n), 1.0))
                elif name == "dmu":
                    col = eps.matrix()
                    div = tensor_divergence(eps).values
                    for j in range(3):
                        lst.append((_e(j, n), _sf(g, 2.0 * col[..., j, i])))
                    lst.append((_zero(n), _sf(g, 2.0 * div[i])))
                elif name == "drho":
                    lst.append((_zero(n), _sf(g, -st.accels[k].values[i])))
                elif name == "dlam":
                    div_u = _sf(g, np.trace(eps.matrix(), axis1=-2, axis2=-1))
                    dth = gradient(div_u).values
                    lst.append((_e(i, n), div_u))
                    lst.append((_zero(n), _sf(g, dth[i])))
        _elastic_block(terms, r0, c0, n, prm.mu, prm.lam if kind == "L_lambda" else None,
                       prm.rho if dynamic else None)
        _identity_rows(terms, r0 + 3, c0, n)
    labels_c = params + tuple(f"du{k + 1}_{i + 1}" for k in range(K) for i in range(3))
    labels_r = tuple(lab for k in range(K) for lab in
                     [f"F{k + 1}_{i + 1}" for i in range(3)] + [f"U{k + 1}_{i + 1}" for i in range(3)])
    op = MatrixDiffOp.from_terms((M, m), terms, n, row_labels=labels_r, col_labels=labels_c)
    t = tuple(tnum[p] for p in params) + (2,) * (3 * K)
    s = tuple(v for _ in range(K) for v in (0, 0, 0, -2, -2, -2))

    def boundary(nu, prime=False):
        rows = {}
        r = 0
        if prime:
            for c, name in enumerate(params):
                if name in ("dp", "dmu"):
                    rows[(r, c)] = [(_zero(n), 1.0)]
                    r += 1
        for k in range(K):
            for i in range(3):
                rows[(r, npar + 3 * k + i)] = [(_zero(n), 1.0)]
                r += 1
        return MatrixDiffOp.from_terms((r, m), rows, n)

    cand = _strain_candidates(strains, n) if any(p in ("dmu",) for p in params) else None
    return BuiltOperator(kind, op, DNNumbers(s, t), labels_c, boundary,
                         lambda nu: boundary(nu, True), cand, st, "nonzero")


def _helmholtz() -> BuiltOperator:
    n = 3
    terms = {}
    for r, (a, b) in enumerate(((1, 2), (2, 0), (0, 1))):
        # (curl u)_r = d_a u_b - d_b u_a
        terms.setdefault((r, b), []).append((_e(a, n), 1.0))
        terms.setdefault((r, a), []).append((_e(b, n), -1.0))
    for j in range(3):
        terms.setdefault((3, j), []).append((_e(j, n), 1.0))
    op = MatrixDiffOp.from_terms((4, 3), terms, n, col_labels=("u1", "u2", "u3"))

    def boundary(nu):
        return MatrixDiffOp.from_terms((1, 3), {(0, j): [(_zero(n), float(nu[j]))] for j in range(3)}, n)

    return BuiltOperator("helmholtz", op, DNNumbers((0,) * 4, (1, 1, 1)), ("u1", "u2", "u3"),
                         boundary, None, None, None, "all")


def _maxwell(kappa1: float = 1.0, kappa2: float = 1.0) -> BuiltOperator:
    n = 3
    terms: dict = {}
    H, E = 0, 3
    for r, (a, b) in enumerate(((1, 2), (2, 0), (0, 1))):
        terms.setdefault((r, H + b), []).append((_e(a, n), 1.0))
        terms.setdefault((r, H + a), []).append((_e(b, n), -1.0))
        terms.setdefault((r, E + r), []).append((_zero(n), kappa1))
        terms.setdefault((3 + r, E + b), []).append((_e(a, n), 1.0))
        terms.setdefault((3 + r, E + a), []).append((_e(b, n), -1.0))
        terms.setdefault((3 + r, H + r), []).append((_zero(n), -kappa2))
    for j in range(3):
        terms.setdefault((6, H + j), []).append((_e(j, n), 1.0))
        terms.setdefault((7, E + j), []).append((_e(j, n), 1.0))
    labels = ("H1", "H2", "H3", "E1", "E2", "E3")
    op = MatrixDiffOp.from_terms((8, 6), terms, n, col_labels=labels)

    def boundary(nu):
        # normal component of H, tangential component nu x E
        rows = {(0, H + j): [(_zero(n), float(nu[j]))] for j in range(3)}
        for r, (a, b) in enumerate(((1, 2), (2, 0), (0, 1))):
            rows.setdefault((1 + r, E + b), []).append((_zero(n), float(nu[a])))
            rows.setdefault((1 + r, E + a), []).append((_zero(n), -float(nu[b])))
        return MatrixDiffOp.from_terms((4, 6), rows, n)

    return BuiltOperator("maxwell", op, DNNumbers((0,) * 8, (1,) * 6), labels,
                         boundary, None, None, None, "all")


def _planar_example(t: tuple[int, ...]) -> BuiltOperator:
    """u1 + Laplace u2, d1 u1, d2 u1 with boundary rows u1 and grad u2 . nu."""
    if t == (1, 3):
        s = (-1, 0, 0)
    elif t == (1, 2):
        s = (0, 0, 0)
    else:
        raise DNError(f"planar example supports column numbers (1, 3) or (1, 2), got {t}")
    n = 2
    terms = {(0, 0): [((0, 0), 1.0)], (0, 1): [((2, 0), 1.0), ((0, 2), 1.0)],
             (1, 0): [((1, 0), 1.0)], (2, 0): [((0, 1), 1.0)]}
    op = MatrixDiffOp.from_terms((3, 2), terms, n, col_labels=("u1", "u2"))

    def boundary(nu):
        return MatrixDiffOp.from_terms(
            (2, 2), {(0, 0): [((0, 0), 1.0)], (1, 1): [((1, 0), float(nu[0])), ((0, 1), float(nu[1]))]}, n)

    return BuiltOperator("paper_example", op, DNNumbers(s, t), ("u1", "u2"), boundary, None, None,
                         None, "all")


# ---------------------------------------------------------------------------
# condition maps

CONDITIONS = ("mu", "rho", "lambda")


@dataclass
class DiagnosticsReport:
    """Pointwise condition maps for a reference state.

    ``maps`` holds per-experiment fields (``det_eps_k``, ``div_u_k``,
    ``abs_utt_k`` and ``bal`` when two experiments exist). ``passes[c]`` is a
    boolean array (some experiment satisfies condition ``c`` at that node) or
    None when the condition cannot be evaluated.
    """

    grid: Grid
    maps: dict[str, np.ndarray]
    passes: dict[str, np.ndarray | None]
    tol: float

    def verdict(self, cond: str) -> str:
        p = self.passes[cond]
        if p is None:
            return "unavailable"
        return "pass" if bool(np.all(p)) else "fail"

    def failing_points(self, cond: str) -> int | None:
        p = self.passes[cond]
        return None if p is None else int(np.size(p) - np.count_nonzero(p))

    def summary(self) -> dict:
        out = {"tolerance": self.tol, "conditions": {}, "maps": {}}
        for c in CONDITIONS:
            out["conditions"][c] = {"verdict": self.verdict(c), "failing_points": self.failing_points(c),
                                    "total_points": None if self.passes[c] is None else int(np.size(self.passes[c]))}
        for name, v in self.maps.items():
            a = np.abs(v)
            out["maps"][name] = {"min": float(v.min()), "max": float(v.max()), "min_abs": float(a.min())}
        return out


def _passes(vals: list[np.ndarray], tol: float) -> np.ndarray:
    scale = max(float(np.max(np.abs(v))) for v in vals)
    if scale == 0:
        return np.zeros(vals[0].shape, dtype=bool)
    return np.any(np.stack([np.abs(v) > tol * scale for v in vals]), axis=0)


def condition_maps(state: ReferenceState, tol: float = 1e-8) -> DiagnosticsReport:
    """det eps(u_k), |u_tt,k| and div u_k with the at-least-one-experiment rule.

    A node passes a condition when some experiment's criterion exceeds
    ``tol`` times the largest magnitude of that criterion over the grid.
    Time-dependent states are evaluated at every snapshot.
    """
    maps: dict[str, np.ndarray] = {}
    det, div, acc = [], [], []
    for k, (eps, u) in enumerate(zip(state.strains, state.displacements)):
        d = eps.det().values
        t = eps.trace().values
        maps[f"det_eps_{k + 1}"] = d
        maps[f"div_u_{k + 1}"] = t
        det.append(d)
        div.append(t)
        a = state.accels[k]
        if a is not None:
            na = a.norm().values
            maps[f"abs_utt_{k + 1}"] = na
            acc.append(na)
    passes = {"mu": _passes(det, tol), "lambda": _passes(div, tol),
              "rho": _passes(acc, tol) if len(acc) == state.n_measurements else None}
    if state.n_measurements >= 2:
        maps["bal"] = bal_condition(state.strains[0], state.strains[1]).values
    return DiagnosticsReport(state.grid, maps, passes, tol)
