"""Backend selection for the hot kernels.

The compiled Cython core is preferred when it imported cleanly; the
NumPy implementation is the fallback.  POLYSMOOTH_BACKEND=py|c forces a
choice (forcing "c" raises if the extension is missing).
"""

from __future__ import annotations

import os

from . import _kernels_py

try:
    from . import _ckernels
    _HAVE_C = True
except ImportError:
    _ckernels = None
    _HAVE_C = False

ChainResult = _kernels_py.ChainResult


def available_backends():
    names = ["numpy"]
    if _HAVE_C:
        names.insert(0, "cython")
    return names


def _resolve():
    choice = os.environ.get("POLYSMOOTH_BACKEND", "auto").lower()
    if choice in ("py", "numpy", "python"):
        return _kernels_py
    if choice in ("c", "cython", "ext"):
        if not _HAVE_C:
            raise ImportError(
                "POLYSMOOTH_BACKEND requested the compiled backend but "
                "polysmooth._ckernels is not built")
        return _ckernels
    return _ckernels if _HAVE_C else _kernels_py


_active = _resolve()


def backend():
    return _active


def backend_name() -> str:
    return _active.BACKEND_NAME


def use(name: str):
    """Switch backend at runtime (mainly for the benchmark and tests)."""
    global _active
    if name in ("py", "numpy", "python"):
        _active = _kernels_py
    elif name in ("c", "cython", "ext"):
        if not _HAVE_C:
            raise ImportError("compiled backend not available")
        _active = _ckernels
    elif name == "auto":
        _active = _ckernels if _HAVE_C else _kernels_py
    else:
        raise ValueError(f"unknown backend {name!r}")
    return _active
