"""Selects the compiled extension core or the pure-Python fallback.

The compiled core (memsde._core, Cython wrapping C kernels) accelerates
the counter-based Gaussian stream and the fused 1-D trajectory loops.
Set MEMSDE_PURE_PYTHON=1 to force the numpy fallback.
"""

import os

_core = None
if os.environ.get("MEMSDE_PURE_PYTHON", "") != "1":
    try:
        from . import _core as _core_mod
        _core = _core_mod
    except ImportError:
        _core = None

HAVE_COMPILED = _core is not None


def core():
    return _core


def backend_name() -> str:
    return "compiled" if HAVE_COMPILED else "python"
