"""Kernel selection: the compiled extension when importable, else the numpy fallback.

Set ``GCR_PURE_PYTHON=1`` to force the fallback.
"""
from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "python"
accumulate_next = _kernels_py.accumulate_next
sweep = _kernels_py.sweep

if os.environ.get("GCR_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None
    if _compiled is not None:
        BACKEND = "cython"
        accumulate_next = _compiled.accumulate_next
        sweep = _compiled.sweep
