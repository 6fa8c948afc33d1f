"""Linearized stability theory of quantitative elastography, made numerical."""
import os as _os

# ELASTOSTAB_THREADS caps BLAS/OpenMP threads; it must be set before numpy loads.
_threads = _os.environ.get("ELASTOSTAB_THREADS")
if _threads and _threads.isdigit() and int(_threads) > 0:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

from elastostab._backend import BACKEND  # noqa: E402
from elastostab.grid import Grid, ScalarField, SymTensorField, VectorField  # noqa: E402

__all__ = ["BACKEND", "Grid", "ScalarField", "SymTensorField", "VectorField"]
__version__ = "0.1.0"
