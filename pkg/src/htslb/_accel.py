"""JIT switch for the hot kernels.

Set ``HTSLB_DISABLE_JIT=1`` before import to run every kernel as plain
Python over numpy arrays. Results are bit-identical either way because all
randomness is drawn outside the kernels.
"""
import os

JIT_DISABLED = os.environ.get("HTSLB_DISABLE_JIT", "0").lower() in ("1", "true", "yes")

try:
    import numba

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover
    NUMBA_AVAILABLE = False

USE_NUMBA = NUMBA_AVAILABLE and not JIT_DISABLED


def njit(*args, **kwargs):
    """``numba.njit`` when enabled, identity decorator otherwise.

    The fallback keeps a ``py_func`` attribute so callers can always reach
    the uncompiled body.
    """
    if USE_NUMBA:
        kwargs.setdefault("cache", True)
        return numba.njit(*args, **kwargs)

    def wrap(func):
        func.py_func = func
        return func

    if len(args) == 1 and callable(args[0]) and not kwargs:
        return wrap(args[0])
    return wrap
