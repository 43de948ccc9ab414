"""Kernel backend selection.

The compiled Cython kernels are used when the extension was built;
otherwise, or when ``GRASSHJ_PURE_PYTHON`` is set to a non-empty value,
the pure-Python kernels are used. Both expose identical functions.
"""
import os

from . import _pykernels

if os.environ.get("GRASSHJ_PURE_PYTHON"):
    kernels = _pykernels
else:
    try:
        from . import _ckernels as kernels
    except ImportError:
        kernels = _pykernels

BACKEND = kernels.NAME

OK = _pykernels.OK
GUARD = _pykernels.GUARD
NONFINITE = _pykernels.NONFINITE
NOCONVERGE = _pykernels.NOCONVERGE
UNDERFLOW = _pykernels.UNDERFLOW


def compiled_kernels():
    """Return the compiled kernel module, or None when it is not built."""
    try:
        from . import _ckernels
    except ImportError:
        return None
    return _ckernels
