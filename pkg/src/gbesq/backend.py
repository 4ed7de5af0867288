"""Backend selection for the hot kernels.

The Monte Carlo summary kernel and the PDE time-steppers exist twice: a
numba ``@njit`` version and a pure-numpy version with identical semantics.
``GBESQ_BACKEND`` picks one:

    GBESQ_BACKEND=auto    use numba if importable, else numpy (default)
    GBESQ_BACKEND=numba   require numba, error if unavailable
    GBESQ_BACKEND=numpy   never import numba

``benchmarks/compare_backends.py`` times the two side by side.
"""

from __future__ import annotations

import importlib
import os
from contextlib import contextmanager

__all__ = ["kernels", "backend_name", "set_backend", "use_backend"]

_ENV_VAR = "GBESQ_BACKEND"
_forced: str | None = None
_cache: dict[str, object] = {}


def _resolve() -> str:
    choice = _forced or os.environ.get(_ENV_VAR, "auto").strip().lower()
    if choice not in ("auto", "numba", "numpy"):
        raise ValueError(f"{_ENV_VAR} must be auto, numba or numpy (got {choice!r})")
    if choice == "numpy":
        return "numpy"
    if choice == "numba":
        importlib.import_module("numba")
        return "numba"
    try:
        importlib.import_module("numba")
        return "numba"
    except ImportError:
        return "numpy"


def backend_name() -> str:
    """Name of the backend that kernels() would return."""
    return _resolve()


def kernels():
    """The active kernel module (gbesq.kernels_nb or gbesq.kernels_np)."""
    name = _resolve()
    if name not in _cache:
        mod = "gbesq.kernels_nb" if name == "numba" else "gbesq.kernels_np"
        _cache[name] = importlib.import_module(mod)
    return _cache[name]


def set_backend(name: str | None) -> None:
    """Force a backend programmatically (None restores the env default)."""
    global _forced
    if name is not None and name not in ("auto", "numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}")
    _forced = name


@contextmanager
def use_backend(name: str):
    """Temporarily force a backend (used by tests and the benchmark)."""
    global _forced
    prev = _forced
    set_backend(name)
    try:
        yield kernels()
    finally:
        _forced = prev
