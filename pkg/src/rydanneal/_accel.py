"""Numba switch.

Set ``RYDANNEAL_DISABLE_NUMBA=1`` to force the pure-numpy code paths. When
numba is not importable the numpy paths are used automatically.
"""

import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is an optional accelerator
    numba = None

HAVE_NUMBA = numba is not None
USE_NUMBA = HAVE_NUMBA and os.environ.get("RYDANNEAL_DISABLE_NUMBA", "0") not in ("1", "true", "yes")


def njit(fn):
    """Compile ``fn`` with numba if available, otherwise return it unchanged."""
    if not HAVE_NUMBA:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


def jitable(fn):
    """Helper callable from both plain Python and compiled kernels."""
    if not HAVE_NUMBA:
        return fn
    from numba.extending import register_jitable

    return register_jitable(fn)
