"""Sparse symmetric positive definite solves: CHOLMOD when available, SuperLU otherwise."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

try:
    from cvxopt import cholmod, matrix, spmatrix
except ImportError:  # pragma: no cover - exercised only without cvxopt
    cholmod = None


class FactorizationError(ArithmeticError):
    pass


class SPDSolver:
    """Factor a sparse SPD matrix once and solve repeatedly.

    ``ridge`` (relative to the largest diagonal entry) is added before
    factoring; it is retried ten times larger, up to three times, if the
    factorization reports a non-positive pivot.
    """

    def __init__(self, A: sp.spmatrix, ridge: float = 0.0):
        A = sp.csc_matrix(A)
        n = A.shape[0]
        self.shape = A.shape
        scale = float(np.abs(A.diagonal()).max()) if n else 1.0
        for attempt in range(4):
            Ar = A + (ridge * scale) * sp.identity(n, format="csc") if ridge > 0 else A
            try:
                self._factor(Ar)
                self.ridge = ridge
                return
            except (ArithmeticError, RuntimeError) as exc:
                err = exc
                ridge = max(ridge * 10.0, 1e-14)
        raise FactorizationError(f"matrix is not numerically positive definite: {err}")

    def _factor(self, A):
        if cholmod is not None:
            L = sp.tril(A).tocoo()
            M = spmatrix(L.data.tolist(), L.row.tolist(), L.col.tolist(), size=A.shape)
            opts = cholmod.options
            opts["supernodal"] = 2
            F = cholmod.symbolic(M, uplo="L")
            cholmod.numeric(M, F)
            self._F, self._lu = F, None
        else:
            self._F, self._lu = None, spla.splu(A)

    def solve(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if self._lu is not None:
            return self._lu.solve(v)
        r = matrix(v.reshape(v.shape[0], -1))
        cholmod.solve(self._F, r)
        return np.array(r).reshape(v.shape)

    def as_operator(self) -> spla.LinearOperator:
        return spla.LinearOperator(self.shape, matvec=self.solve, dtype=float)
