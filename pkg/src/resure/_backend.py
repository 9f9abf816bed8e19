"""Kernel backend selection.

The compiled extension is used when it was built; otherwise the pure-Python
kernels are loaded. Set ``RESURE_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _pykernels

BACKEND = "python"
kernels = _pykernels

if not os.environ.get("RESURE_PURE_PYTHON"):
    try:
        from . import _kernels as _compiled
    except ImportError:
        pass
    else:
        kernels = _compiled
        BACKEND = "cython"


def available_backends():
    """Return ``{name: module}`` for every importable kernel backend."""
    out = {"python": _pykernels}
    try:
        from . import _kernels as _compiled
    except ImportError:
        return out
    out["cython"] = _compiled
    return out
