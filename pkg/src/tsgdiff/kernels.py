"""Kernel backend selection.

The compiled extension is used when it imports; set ``TSGDIFF_PURE_PYTHON=1``
to force the numpy fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"
if os.environ.get("TSGDIFF_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
else:
    _impl = _kernels_py

detect_periods = _impl.detect_periods
adjacency = _impl.adjacency
degree_entropy = _impl.degree_entropy
edit_similarity = _impl.edit_similarity


def backends():
    """Map backend name -> kernel module for every backend importable here."""
    found = {"python": _kernels_py}
    try:
        from . import _kernels

        found["cython"] = _kernels
    except ImportError:
        pass
    return found
