"""Backend selection for the sphere kernel.

The compiled extension is used when it imports; ``CHOIBINGHAM_PURE_PYTHON=1``
forces the pure-Python fallback.
"""
import os

from . import _sphere_py

try:
    if os.environ.get("CHOIBINGHAM_PURE_PYTHON") == "1":
        raise ImportError("pure-Python backend requested")
    from . import _sphere_ext
except ImportError:
    _sphere_ext = None

BACKENDS = {"python": _sphere_py}
if _sphere_ext is not None:
    BACKENDS["cython"] = _sphere_ext

BACKEND = "cython" if _sphere_ext is not None else "python"


def get_kernel(backend=None):
    name = BACKEND if backend is None else backend
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} unavailable; have {sorted(BACKENDS)}") from None
