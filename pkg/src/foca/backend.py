"""Numeric backend selection.

The hot per-sample network kernels exist twice: a numba ``@njit`` build in
:mod:`foca._kernels` and a vectorized pure-numpy build in :mod:`foca.nn_core`.
Both compute identical quantities; they differ only in speed and in floating
point summation order. Selection happens once at import from the environment
variable ``FOCA_BACKEND``:

* unset or ``auto``  - numba when importable, numpy otherwise
* ``numba``          - require the jitted kernels, fail loudly if unavailable
* ``numpy``          - force the pure-numpy fallback

Tests and benchmarks switch paths at runtime with :func:`use`.
"""

from __future__ import annotations

import contextlib
import os

try:
    import numba  # noqa: F401
    NUMBA_AVAILABLE = True
except ImportError:
    NUMBA_AVAILABLE = False

_VALID = ("auto", "numba", "numpy")


def _from_env() -> str:
    raw = os.environ.get("FOCA_BACKEND", "auto").strip().lower() or "auto"
    if raw not in _VALID:
        raise ValueError(
            f"FOCA_BACKEND must be one of {_VALID}, got {raw!r}"
        )
    if raw == "numba" and not NUMBA_AVAILABLE:
        raise ImportError("FOCA_BACKEND=numba but numba is not importable")
    if raw == "auto":
        return "numba" if NUMBA_AVAILABLE else "numpy"
    return raw


_active = _from_env()


def active() -> str:
    """Name of the backend currently in effect, ``numba`` or ``numpy``."""
    return _active


@contextlib.contextmanager
def use(name: str):
    """Temporarily force a backend; mainly for tests and benchmarks."""
    global _active
    if name not in ("numba", "numpy"):
        raise ValueError(f"backend must be 'numba' or 'numpy', got {name!r}")
    if name == "numba" and not NUMBA_AVAILABLE:
        raise ImportError("numba backend requested but numba is not importable")
    previous = _active
    _active = name
    try:
        yield
    finally:
        _active = previous


def kernels():
    """Import and return the jitted kernel module (compiles on first use)."""
    from foca import _kernels
    return _kernels
