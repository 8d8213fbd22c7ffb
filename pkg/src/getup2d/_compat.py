"""Numba shim.

The hot dynamics kernels are plain Python/numpy functions decorated with
``njit``. Setting ``GETUP2D_DISABLE_NUMBA=1`` (or running without numba
installed) turns the decorator into a passthrough, so the exact same code runs
interpreted. Both paths execute the same statements in the same order.
"""

import os

DISABLE = os.environ.get("GETUP2D_DISABLE_NUMBA", "").strip() in ("1", "true", "yes")

if not DISABLE:
    try:
        from numba import njit

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - exercised via env flag instead
        DISABLE = True

if DISABLE:
    NUMBA_ENABLED = False

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]

        def wrap(func):
            return func

        return wrap


def py_func(kernel):
    """Return the uncompiled version of a kernel (itself when numba is off)."""
    return getattr(kernel, "py_func", kernel)
