"""Backend selection for the batched stepping kernels.

The compiled extension is used when it imports; otherwise the numpy
implementation is used. ``SEMITAMED_BACKEND=python`` forces the fallback and
``SEMITAMED_BACKEND=cython`` makes a missing extension an error.
"""

import os

from . import _kernels_py

BACKEND_ENV = "SEMITAMED_BACKEND"


def _select(choice):
    if choice not in ("", "auto", "python", "cython"):
        raise ImportError(f"{BACKEND_ENV} must be 'python', 'cython' or 'auto', got {choice!r}")
    if choice == "python":
        return _kernels_py, "python"
    try:
        from . import _kernels
    except ImportError:
        if choice == "cython":
            raise
        return _kernels_py, "python"
    return _kernels, "cython"


_NAMES = ("matvec", "gdw", "row_norm", "lu_solve", "tame", "direct_step", "dual_step")


def _install(module, name):
    global impl, BACKEND
    impl, BACKEND = module, name
    globals().update({n: getattr(module, n) for n in _NAMES})


def set_backend(name: str) -> str:
    """Switch the active backend at runtime ('python' or 'cython'); returns the
    previous one. Meant for tests and benchmarks."""
    previous = BACKEND
    _install(*_select(name))
    if BACKEND != name:
        raise ImportError(f"backend {name!r} is not available")
    return previous


_install(*_select(os.environ.get(BACKEND_ENV, "auto").lower()))

__all__ = ["BACKEND", "impl", "set_backend", *_NAMES]
