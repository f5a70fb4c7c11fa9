"""Stepping-engine selection.

The compiled Cython core is used when importable; otherwise the NumPy engine.
Set HITGEN_BACKEND=python or HITGEN_BACKEND=cython to force one (forcing
cython raises if the extension is missing).  Both engines implement the same
`advance_block` contract; a fixed backend is bit-reproducible, and the two
agree to floating-point rounding per step.
"""
from __future__ import annotations

import os

_requested = os.environ.get("HITGEN_BACKEND", "").strip().lower()

if _requested not in ("", "python", "cython"):
    raise RuntimeError(f"HITGEN_BACKEND must be 'python' or 'cython', got {_requested!r}")

if _requested == "python":
    from ._engine_py import ENGINE_NAME, advance_block  # noqa: F401
else:
    try:
        from ._engine_cy import ENGINE_NAME, advance_block  # noqa: F401
    except ImportError:
        if _requested == "cython":
            raise RuntimeError(
                "HITGEN_BACKEND=cython but the compiled engine is not built; "
                "reinstall with a working C compiler") from None
        from ._engine_py import ENGINE_NAME, advance_block  # noqa: F401


def engine_name() -> str:
    return ENGINE_NAME
