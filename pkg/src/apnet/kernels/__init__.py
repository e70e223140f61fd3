"""Hot-loop backends: compiled extension when built, numpy fallback otherwise.

Set APNET_BACKEND=numpy (or =compiled) to force a choice; default prefers
the compiled kernel. The two implementations share one signature and are
held to agreement by the test suite.
"""
from __future__ import annotations

import os

from . import numpy_backend

try:
    from . import _speedups  # type: ignore[attr-defined]

    HAVE_COMPILED = True
except ImportError:
    _speedups = None
    HAVE_COMPILED = False


def select_backend(name: str | None = None):
    """Return (backend_name, advance_block) honoring the override chain."""
    choice = name or os.environ.get("APNET_BACKEND", "auto")
    if choice == "numpy":
        return "numpy", numpy_backend.advance_block
    if choice == "compiled":
        if not HAVE_COMPILED:
            raise RuntimeError("compiled kernel requested but the extension is not built")
        return "compiled", _speedups.advance_block
    if HAVE_COMPILED:
        return "compiled", _speedups.advance_block
    return "numpy", numpy_backend.advance_block


BACKEND_NAME, advance_block = select_backend()
