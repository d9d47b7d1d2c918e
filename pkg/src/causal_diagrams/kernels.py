"""Kernel selection: the compiled module when built, numpy otherwise.

Set ``CAUSAL_DIAGRAMS_PURE=1`` to force the numpy fallback.
"""
from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "numpy"
run_program = _kernels_py.run_program

if os.environ.get("CAUSAL_DIAGRAMS_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels  # type: ignore[attr-defined]
    except ImportError:
        pass
    else:
        run_program = _kernels.run_program
        BACKEND = "cython"
