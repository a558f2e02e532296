"""
JIT switch for the numeric kernels.

Every hot kernel in the package is written in the subset of numpy that numba
understands and decorated with :func:`njit` from this module. Setting the
environment variable ``ARRAYINS_DISABLE_JIT=1`` before import (or running
without numba installed) leaves the kernels as plain numpy functions, which is
slower but bit-for-bit the same algorithm.
"""

from __future__ import annotations

import os

_FLAG = "ARRAYINS_DISABLE_JIT"


def _jit_requested() -> bool:
    return os.environ.get(_FLAG, "").strip().lower() not in {"1", "true", "yes", "on"}


try:
    if not _jit_requested():
        raise ImportError
    import numba as _numba

    JIT_ENABLED = True
except ImportError:
    _numba = None
    JIT_ENABLED = False


def njit(func=None, **kwargs):
    """
    Compile ``func`` with ``numba.njit(cache=True)`` when JIT is enabled,
    otherwise return it untouched.
    """
    if func is None:
        return lambda f: njit(f, **kwargs)
    if not JIT_ENABLED:
        return func
    kwargs.setdefault("cache", True)
    return _numba.njit(**kwargs)(func)
