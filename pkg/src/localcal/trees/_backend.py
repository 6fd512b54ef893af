"""Kernel backend chosen at import time.

The compiled extension is used when it imports cleanly; setting
``LOCALCAL_PURE_PYTHON=1`` forces the numpy fallback.
"""

import os

from . import _pykernels

BACKEND = "python"
kernels = _pykernels

if os.environ.get("LOCALCAL_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        pass
    else:
        kernels = _compiled
        BACKEND = "cython"


def get_kernels(name=None):
    """Return the kernel module ``name`` ('cython' or 'python'), or the active one."""
    if name is None:
        return kernels
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _kernels as compiled
        return compiled
    raise ValueError(f"unknown kernel backend {name!r}")
