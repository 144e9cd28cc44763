"""Optional numba acceleration.

Set ``SSBLAB_DISABLE_NUMBA=1`` before import to force the pure-numpy paths.
"""
import os

_DISABLED = os.environ.get("SSBLAB_DISABLE_NUMBA", "").strip().lower() in ("1", "true", "yes", "on")

try:
    if _DISABLED:
        raise ImportError("numba disabled by SSBLAB_DISABLE_NUMBA")
    from numba import njit as _njit

    HAVE_NUMBA = True
except ImportError:
    _njit = None
    HAVE_NUMBA = False


def njit(*args, **kwargs):
    """``numba.njit`` when available, otherwise an identity decorator."""
    if HAVE_NUMBA:
        return _njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]

    def decorate(func):
        return func

    return decorate


def backend():
    return "numba" if HAVE_NUMBA else "numpy"
