"""Linearized operators and their sparse stacked systems.

Unknown layout: parameter blocks first (``dp``, ``dmu``, ``drho``, ``dlam``
as the kind requires), then ``du`` per experiment. Row layout, per
experiment: momentum rows (3 components at every node and snapshot), then
the interior-data rows ``du = dK``; all boundary rows come last.
Time-dependent unknowns and rows are ordered (snapshot, component, node).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from elastostab.elasticity import ReferenceState, elasticity_matrix, elasticity_operator
from elastostab.grid import (
    Grid,
    GridError,
    ScalarField,
    SymTensorField,
    VectorField,
    diff_matrix,
    gradient,
    second_time_derivative,
    tensor_divergence,
)

PARAMS = {
    "A_p": ("dp",),
    "A_mu": ("dmu",),
    "A_rho": ("drho",),
    "A_pmu": ("dp", "dmu"),
    "A_pmurho": ("dp", "dmu", "drho"),
    "A_lambda": ("dlam",),
}


class UnknownSetError(ValueError):
    """Increments do not match the operator's unknowns."""


def normalize_kind(kind: str) -> str:
    k = kind.replace("L_", "A_")
    if k not in PARAMS:
        raise ValueError(f"unknown operator kind {kind!r}; choose from {', '.join(PARAMS)}")
    return k


def _params_for(kind: str, dynamic: bool) -> tuple[str, ...]:
    p = PARAMS[normalize_kind(kind)]
    if not dynamic:
        p = tuple(q for q in p if q != "drho")
    if not p:
        raise ValueError(f"{kind} needs accelerations (density drops out in the quasi-static case)")
    return p


def _is_dynamic(state: ReferenceState) -> bool:
    return state.is_dynamic


# ---------------------------------------------------------------------------
# matrix-free operators

def _static_scalar(f, grid: Grid) -> np.ndarray:
    v = f.values if isinstance(f, ScalarField) else np.asarray(f, dtype=float)
    return np.broadcast_to(v, grid.dims) if v.ndim == 0 else v


def apply_F_pmurho(state: ReferenceState, dp=None, dmu=None, drho=None, du: VectorField | None = None,
                   k: int = 0, dlam=None, include_lambda: bool = False) -> VectorField:
    """grad dp + 2 div(dmu eps(u)) + 2 div(mu eps(du)) - drho u_tt - rho du_tt.

    Missing increments count as zero. For time-dependent states ``dp`` and
    ``du`` carry snapshots while ``dmu`` and ``drho`` are static.
    ``dlam`` adds grad(dlam div u); ``include_lambda`` adds grad(lam div du).
    """
    u = state.displacements[k]
    g = state.grid
    T = u.n_snapshots
    shape = ((T,) if T else ()) + (3,) + g.dims
    out = np.zeros(shape)
    eps = state.strains[k]
    prm = state.params
    if dp is not None:
        out += gradient(ScalarField(u.grid, dp.values if isinstance(dp, ScalarField) else dp)).values
    if dmu is not None:
        m = _static_scalar(dmu, g)
        out += tensor_divergence(SymTensorField(u.grid, 2.0 * m * eps.values)).values
    if dlam is not None:
        lam = _static_scalar(dlam, g)
        out += gradient(ScalarField(u.grid, lam * eps.trace().values)).values
    if drho is not None:
        if state.accels[k] is None:
            raise GridError("density increment needs u_tt")
        r = _static_scalar(drho, g)
        out -= r * state.accels[k].values
    if du is not None:
        lam = prm.lam if include_lambda else ScalarField(g, np.zeros(g.dims))
        out += elasticity_operator(lam, prm.mu, du).values
        if du.is_dynamic:
            out -= prm.rho.values * second_time_derivative(du).values
    return VectorField(u.grid, out)


def apply_L(kind: str, state: ReferenceState, increments: dict, k: int = 0):
    """(momentum residual, du) for experiment ``k``; ``increments`` maps unknown names to fields.

    Parameter names are ``dp``, ``dmu``, ``drho``, ``dlam``; the displacement
    increment is ``du`` (or ``du{k+1}`` for a specific experiment).
    """
    kind = normalize_kind(kind)
    params = _params_for(kind, _is_dynamic(state))
    du = increments.get(f"du{k + 1}", increments.get("du"))
    given = {n for n in increments if not n.startswith("du")}
    if given != set(params) or du is None:
        raise UnknownSetError(f"{kind} expects {params} plus du, got {sorted(increments)}")
    kw = {p: increments[p] for p in params}
    F = apply_F_pmurho(state, du=du, k=k, include_lambda=(kind == "A_lambda"), **kw)
    return F, du


# ---------------------------------------------------------------------------
# assembly

@dataclass
class Block:
    name: str
    start: int
    size: int
    shape: tuple[int, ...]

    @property
    def stop(self) -> int:
        return self.start + self.size


@dataclass
class DiscreteLinearizedSystem:
    kind: str
    matrix: sp.csr_matrix
    columns: list[Block]
    rows: list[Block]
    grid: Grid
    n_measurements: int
    boundary: str
    boundary_nodes: np.ndarray = field(repr=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    def column(self, name: str) -> Block:
        for b in self.columns:
            if b.name == name:
                return b
        raise KeyError(name)

    def row(self, name: str) -> Block:
        for b in self.rows:
            if b.name == name:
                return b
        raise KeyError(name)

    @property
    def param_blocks(self) -> list[Block]:
        return [b for b in self.columns if not b.name.startswith("du")]

    @property
    def n_param(self) -> int:
        return sum(b.size for b in self.param_blocks)

    def pack(self, values: dict) -> np.ndarray:
        x = np.zeros(self.matrix.shape[1])
        for b in self.columns:
            if b.name in values:
                v = values[b.name]
                v = v.values if hasattr(v, "values") else np.asarray(v)
                x[b.start:b.stop] = np.ravel(v)
        return x

    def split(self, x: np.ndarray) -> dict[str, np.ndarray]:
        return {b.name: np.asarray(x[b.start:b.stop]).reshape(b.shape) for b in self.columns}

    def rhs(self, data: list) -> np.ndarray:
        """Right side with interior data dK_k in the data rows and zeros elsewhere."""
        if len(data) != self.n_measurements:
            raise ValueError(f"need {self.n_measurements} data fields, got {len(data)}")
        b = np.zeros(self.matrix.shape[0])
        for k, d in enumerate(data):
            r = self.row(f"data{k + 1}")
            v = d.values if hasattr(d, "values") else np.asarray(d)
            b[r.start:r.stop] = np.ravel(v)
        return b

    def export_coo(self, path) -> None:
        """Write ``row col value`` lines with a size header."""
        A = self.matrix.tocoo()
        with open(path, "w") as fh:
            fh.write(f"% {A.shape[0]} {A.shape[1]} {A.nnz}\n")
            for r, c, v in zip(A.row, A.col, A.data):
                fh.write(f"{r} {c} {v:.17g}\n")


def _dtt_matrix(T: int, dt: float) -> sp.csr_matrix:
    # same stencils as grid.second_time_derivative
    D = sp.lil_matrix((T, T))
    for i in range(1, T - 1):
        D[i, i - 1], D[i, i], D[i, i + 1] = 1, -2, 1
    if T >= 4:
        D[0, :4] = [2, -5, 4, -1]
        D[T - 1, T - 4:] = [-1, 4, -5, 2]
    else:
        D[0, :3] = [1, -2, 1]
        D[T - 1, T - 3:] = [1, -2, 1]
    return (D / dt**2).tocsr()


def _dt0_row(T: int, dt: float) -> np.ndarray:
    r = np.zeros(T)
    r[:3] = np.array([-3.0, 4.0, -1.0]) / (2 * dt)
    return r


def assemble(kind: str, state: ReferenceState, n_measurements: int | None = None,
             boundary: str = "B") -> DiscreteLinearizedSystem:
    """Sparse matrix of the stacked system for ``n_measurements`` experiments.

    ``boundary="B"`` adds ``du = 0`` at boundary nodes (and zero initial
    displacement and velocity for time-dependent states); ``"B_prime"``
    also pins ``dp`` and ``dmu`` on the boundary.
    """
    kind = normalize_kind(kind)
    if boundary not in ("B", "B_prime"):
        raise ValueError("boundary must be 'B' or 'B_prime'")
    K = state.n_measurements if n_measurements is None else int(n_measurements)
    if not 1 <= K <= state.n_measurements:
        raise ValueError(f"state has {state.n_measurements} experiments, asked for {K}")
    g = state.grid
    N = g.n_points
    dyn = _is_dynamic(state)
    T = state.displacements[0].n_snapshots if dyn else 1
    dt = state.displacements[0].grid.dt
    params = _params_for(kind, dyn)
    prm = state.params
    D = [diff_matrix(g, a) for a in range(3)]
    It = sp.identity(T, format="csr")

    cols: list[Block] = []
    off = 0
    for p in params:
        size = N * T if (p == "dp" and dyn) else N
        shp = ((T,) if (p == "dp" and dyn) else ()) + g.dims
        cols.append(Block(p, off, size, shp))
        off += size
    for k in range(K):
        shp = ((T,) if dyn else ()) + (3,) + g.dims
        cols.append(Block(f"du{k + 1}", off, 3 * N * T, shp))
        off += 3 * N * T
    n_cols = off

    lam = prm.lam.values if kind == "A_lambda" else np.zeros(g.dims)
    E = elasticity_matrix(g, lam, prm.mu.values)
    if dyn:
        E = sp.kron(It, E, format="csr") - sp.kron(_dtt_matrix(T, dt), sp.kron(
            sp.identity(3), sp.diags(prm.rho.values.ravel())), format="csr")

    row_blocks: list[Block] = []
    pieces = []
    roff = 0
    for k in range(K):
        nF = 3 * N * T
        blk = {}
        eps = state.strains[k].matrix()
        for p in params:
            c = cols[[b.name for b in cols].index(p)]
            if p == "dp":
                G = sp.vstack(D, format="csr")
                blk[p] = sp.kron(It, G, format="csr") if dyn else G
            elif p == "dmu":
                mats = []
                for t in range(T):
                    e = eps[t] if dyn else eps
                    mats.append(sp.vstack([sum(D[j] @ sp.diags(2.0 * e[..., j, i].ravel()) for j in range(3))
                                           for i in range(3)], format="csr"))
                blk[p] = sp.vstack(mats, format="csr")
            elif p == "drho":
                acc = state.accels[k]
                if acc is None:
                    raise GridError("density increment needs u_tt")
                blk[p] = sp.vstack([sp.diags(-acc.values.reshape(-1, N)[r]) for r in range(3 * T)],
                                   format="csr")
            elif p == "dlam":
                mats = []
                for t in range(T):
                    tr = np.trace(eps[t] if dyn else eps, axis1=-2, axis2=-1).ravel()
                    mats.append(sp.vstack([D[i] @ sp.diags(tr) for i in range(3)], format="csr"))
                blk[p] = sp.vstack(mats, format="csr")
            blk[p] = (c, blk[p])
        du = cols[len(params) + k]
        # momentum rows
        parts = [(blk[p][0].start, blk[p][1]) for p in params] + [(du.start, E)]
        pieces.append((roff, nF, parts))
        row_blocks.append(Block(f"F{k + 1}", roff, nF, ((T,) if dyn else ()) + (3,) + g.dims))
        roff += nF
        pieces.append((roff, nF, [(du.start, sp.identity(nF, format="csr"))]))
        row_blocks.append(Block(f"data{k + 1}", roff, nF, ((T,) if dyn else ()) + (3,) + g.dims))
        roff += nF

    bmask = g.boundary_mask().ravel()
    bnodes = np.flatnonzero(bmask)
    Nb = len(bnodes)
    S = sp.csr_matrix((np.ones(Nb), (np.arange(Nb), bnodes)), shape=(Nb, N))
    if boundary == "B_prime":
        for p in ("dp", "dmu"):
            if p in params:
                c = cols[params.index(p)]
                Sp = sp.kron(It, S, format="csr") if c.size == N * T and dyn else S
                pieces.append((roff, Sp.shape[0], [(c.start, Sp)]))
                row_blocks.append(Block(f"bnd_{p}", roff, Sp.shape[0], (Sp.shape[0],)))
                roff += Sp.shape[0]
    for k in range(K):
        du = cols[len(params) + k]
        Su = sp.kron(sp.kron(It, sp.identity(3)), S, format="csr")
        pieces.append((roff, Su.shape[0], [(du.start, Su)]))
        row_blocks.append(Block(f"bnd_du{k + 1}", roff, Su.shape[0], (Su.shape[0],)))
        roff += Su.shape[0]
        if dyn:
            e0 = sp.csr_matrix(np.eye(T)[:1])
            I0 = sp.kron(e0, sp.identity(3 * N), format="csr")
            V0 = sp.kron(sp.csr_matrix(_dt0_row(T, dt)[None]), sp.identity(3 * N), format="csr")
            for name, Mx in (("init_du", I0), ("init_vel", V0)):
                pieces.append((roff, Mx.shape[0], [(du.start, Mx)]))
                row_blocks.append(Block(f"{name}{k + 1}", roff, Mx.shape[0], (Mx.shape[0],)))
                roff += Mx.shape[0]

    rows, cols_i, vals = [], [], []
    for r0, _, parts in pieces:
        for c0, Mx in parts:
            Mc = Mx.tocoo()
            rows.append(Mc.row + r0)
            cols_i.append(Mc.col + c0)
            vals.append(Mc.data)
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols_i))),
                      shape=(roff, n_cols))
    A.sum_duplicates()
    return DiscreteLinearizedSystem(kind, A, cols, row_blocks, g, K, boundary, bnodes)
