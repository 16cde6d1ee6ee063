"""Selects between numba-compiled kernels and the pure numpy path.

Set ``SUPERRES_NO_NUMBA=1`` to force the numpy implementations, e.g. for
debugging or on platforms without a working numba install.
"""

import os

_DISABLED = os.environ.get("SUPERRES_NO_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    if _DISABLED:
        raise ImportError("numba disabled by SUPERRES_NO_NUMBA")
    import numba as _nb
except ImportError:
    _nb = None

HAVE_NUMBA = _nb is not None
USE_NUMBA = HAVE_NUMBA and not _DISABLED


def njit(func):
    """``numba.njit(cache=True)`` when numba is in use, else the function unchanged."""
    if _nb is None:
        return func
    return _nb.njit(cache=True, nogil=True)(func)


def backend_name():
    return "numba" if USE_NUMBA else "numpy"
