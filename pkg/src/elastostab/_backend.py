"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the NumPy fallback.
Set ``ELASTOSTAB_BACKEND=python`` to force the fallback.
"""
import os

from elastostab import _pykernels

BACKEND = "python"
staircase_integrals = _pykernels.staircase_integrals
gram_schmidt_solve = _pykernels.gram_schmidt_solve

if os.environ.get("ELASTOSTAB_BACKEND", "").lower() != "python":
    try:
        from elastostab import _ckernels
    except ImportError:
        pass
    else:
        BACKEND = "cython"
        staircase_integrals = _ckernels.staircase_integrals
        gram_schmidt_solve = _ckernels.gram_schmidt_solve
