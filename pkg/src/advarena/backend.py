"""Kernel backend selection.

ADVARENA_BACKEND chooses the implementation of the hot kernels:

* ``numba`` (default when numba imports): @njit compiled loops
* ``numpy``: pure-numpy fallback, no compilation

Both backends agree numerically to tight tolerance; bit-level
reproducibility claims hold within one backend.
"""

from __future__ import annotations

import os

from . import _kernels_numpy

_CHOICES = ("numba", "numpy")


def _select():
    requested = os.environ.get("ADVARENA_BACKEND", "").strip().lower()
    if requested and requested not in _CHOICES:
        raise RuntimeError(
            f"ADVARENA_BACKEND={requested!r} is not one of {_CHOICES}")
    if requested == "numpy":
        return _kernels_numpy, "numpy"
    try:
        from . import _kernels_numba
        return _kernels_numba, "numba"
    except ImportError:
        if requested == "numba":
            raise RuntimeError("ADVARENA_BACKEND=numba but numba is not importable")
        return _kernels_numpy, "numpy"


kernels, BACKEND = _select()


def backend_name() -> str:
    return BACKEND
