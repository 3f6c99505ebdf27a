"""Numba switch.

Kernels in :mod:`homemoe.kernels` come in two flavours: a loop version that is
compiled with ``numba.njit`` and a vectorised numpy version. Which one is used
is decided once at import time:

* ``HOMEMOE_DISABLE_NUMBA=1`` forces the numpy path,
* a missing numba install falls back to numpy silently.
"""

import os

try:
    import numba
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAS_NUMBA = False


def _env_disabled():
    return os.environ.get("HOMEMOE_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}


USE_NUMBA = HAS_NUMBA and not _env_disabled()


def try_njit(fn=None, **kwargs):
    """``numba.njit`` when numba is importable, identity otherwise.

    Works both bare (``@try_njit``) and with options (``@try_njit(cache=True)``).
    The decorated function is compiled regardless of ``USE_NUMBA`` so the
    benchmark can compare both paths in one process.
    """
    def wrap(f):
        if not HAS_NUMBA:
            return f
        return numba.njit(**kwargs)(f)

    if fn is not None:
        return wrap(fn)
    return wrap
