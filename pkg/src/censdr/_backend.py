"""Kernel backend selection.

The hot numeric kernels (normal CDF, bivariate normal CDF) exist twice:
jit-compiled in `_kernels_numba` and vectorized numpy in `_kernels_numpy`.
The env var CENSDR_BACKEND picks one ("numba" or "numpy"); default is numba
when importable, numpy otherwise. `benchmarks/bench_backends.py` compares
the two.
"""

import os
import warnings

from . import _kernels_numpy

_BACKEND = None
_BACKEND_NAME = None


def _load(name):
    if name == "numpy":
        return _kernels_numpy, "numpy"
    if name == "numba":
        from . import _kernels_numba

        return _kernels_numba, "numba"
    raise ValueError(f"unknown backend {name!r} (expected 'numba' or 'numpy')")


def set_backend(name):
    """Force a backend; mainly for tests and benchmarks."""
    global _BACKEND, _BACKEND_NAME
    _BACKEND, _BACKEND_NAME = _load(name)
    return _BACKEND


def backend():
    """Return the active kernel module, initializing it on first use."""
    global _BACKEND, _BACKEND_NAME
    if _BACKEND is not None:
        return _BACKEND
    requested = os.environ.get("CENSDR_BACKEND", "").strip().lower()
    if requested:
        if requested == "numba":
            try:
                return set_backend("numba")
            except ImportError:
                warnings.warn("numba requested but not importable; using numpy kernels")
                return set_backend("numpy")
        return set_backend(requested)
    try:
        return set_backend("numba")
    except ImportError:
        return set_backend("numpy")


def backend_name():
    backend()
    return _BACKEND_NAME
