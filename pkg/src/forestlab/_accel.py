"""Backend selection for the numeric kernels.

Every hot kernel in :mod:`forestlab.kernels` exists twice: a loop version
compiled with numba and a vectorised numpy version.  The default backend is
numba when it imports; set ``FORESTLAB_BACKEND=numpy`` to force the numpy
path (useful for debugging and for the benchmark comparison).
"""
import os

try:
    import numba
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

_VALID = ("numba", "numpy")

_backend = os.environ.get("FORESTLAB_BACKEND", "numba").strip().lower()
if _backend not in _VALID:
    raise ImportError(f"FORESTLAB_BACKEND must be one of {_VALID}, got {_backend!r}")
if _backend == "numba" and not HAVE_NUMBA:
    _backend = "numpy"


def get_backend():
    return _backend


def set_backend(name):
    """Switch backend at runtime; returns the previous one."""
    global _backend
    name = name.lower()
    if name not in _VALID:
        raise ValueError(f"unknown backend {name!r}")
    if name == "numba" and not HAVE_NUMBA:
        raise RuntimeError("numba is not importable")
    previous, _backend = _backend, name
    return previous


def njit(*args, **kwargs):
    """``numba.njit`` with on-disk caching, or identity without numba."""
    if not HAVE_NUMBA:
        if args and callable(args[0]):
            return args[0]
        return lambda fn: fn
    kwargs.setdefault("cache", True)
    return numba.njit(*args, **kwargs)
