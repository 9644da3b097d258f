"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise, or when the
environment sets ``GREATSCORE_PURE=1``, the numpy fallback is used.
``BACKEND`` names the active implementation.
"""
import os

from . import _pykernels

if os.environ.get("GREATSCORE_PURE", "") not in ("", "0"):
    _impl = _pykernels
    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels
        BACKEND = "python"

local_scores = _impl.local_scores
grid_means = _impl.grid_means


def backends():
    """Map of every importable backend name to its module."""
    found = {"python": _pykernels}
    try:
        from . import _ckernels
        found["cython"] = _ckernels
    except ImportError:
        pass
    return found
