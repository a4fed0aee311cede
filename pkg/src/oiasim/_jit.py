"""Optional numba acceleration.

Hot kernels are written twice: an ``@njit`` loop version and a vectorised
numpy version.  Setting ``OIASIM_DISABLE_NUMBA=1`` (or running without numba
installed) selects the numpy path everywhere.
"""
import os

try:
    import numba as nb

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in CI
    nb = None
    HAVE_NUMBA = False

_FLAG = "OIASIM_DISABLE_NUMBA"


def numba_enabled():
    """True when the numba kernels should be used."""
    return HAVE_NUMBA and os.environ.get(_FLAG, "0").strip().lower() not in ("1", "true", "yes")


def njit(*args, **kwargs):
    if HAVE_NUMBA:
        return nb.njit(*args, **kwargs)
    if len(args) == 1 and callable(args[0]) and not kwargs:
        return args[0]
    return lambda func: func
