"""Backend selection for the numeric kernels.

Kernels are compiled with numba when it is importable and not disabled.
Set ``MOMENTUM_WORKBENCH_DISABLE_NUMBA=1`` to force the pure-numpy path.
"""

import os

_FALSEY = {"", "0", "false", "no", "off"}


def _numba_disabled():
    return os.environ.get("MOMENTUM_WORKBENCH_DISABLE_NUMBA", "").strip().lower() not in _FALSEY


try:
    if _numba_disabled():
        raise ImportError("numba disabled by environment")
    import numba

    HAVE_NUMBA = True
except ImportError:
    numba = None
    HAVE_NUMBA = False


def njit(func):
    """Compile ``func`` with numba in nopython mode, or return it unchanged."""
    if HAVE_NUMBA:
        return numba.njit(cache=True, nogil=True)(func)
    return func


def backend_name():
    return "numba" if HAVE_NUMBA else "numpy"
