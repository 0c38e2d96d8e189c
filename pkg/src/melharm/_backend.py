"""Kernel backend selection.

Hot loops (Viterbi, GA population fitness) ship two implementations: a
loop-style kernel compiled with numba ``@njit`` and a vectorized pure-numpy
path. Set ``MELHARM_BACKEND=numpy`` to force the numpy path; numba is used by
default whenever it imports cleanly.
"""
from __future__ import annotations

import os

BACKEND_ENV = "MELHARM_BACKEND"

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAVE_NUMBA = False


def _requested() -> str:
    value = os.environ.get(BACKEND_ENV, "numba").strip().lower()
    if value not in ("numba", "numpy"):
        raise ValueError(f"{BACKEND_ENV} must be 'numba' or 'numpy', got {value!r}")
    return value


USE_NUMBA = HAVE_NUMBA and _requested() == "numba"


def njit(func):
    """``numba.njit(cache=True)`` when numba is importable, else identity."""
    if HAVE_NUMBA:
        return numba.njit(cache=True)(func)
    return func


def backend_name() -> str:
    return "numba" if USE_NUMBA else "numpy"
