"""Hot-kernel backend selection.

The compiled extension (_native, built from _native.pyx) and the numpy
fallback (_fallback) implement the same four functions with bitwise
identical results.  The extension is preferred when importable; set
MASKPOSE_KERNELS=fallback (or =native) to force a backend.
"""

from __future__ import annotations

import os

from . import _fallback

_choice = os.environ.get("MASKPOSE_KERNELS", "auto").strip().lower()
if _choice not in ("auto", "native", "fallback"):
    raise ValueError(f"MASKPOSE_KERNELS must be auto|native|fallback, got {_choice!r}")

_impl = None
if _choice in ("auto", "native"):
    try:
        from . import _native as _impl  # type: ignore[no-redef]
    except ImportError:
        if _choice == "native":
            raise
if _impl is None:
    _impl = _fallback

BACKEND: str = "fallback" if _impl is _fallback else "native"

im2col = _impl.im2col
col2im = _impl.col2im
fill_mask = _impl.fill_mask
fill_shaded = _impl.fill_shaded


def available_backends() -> dict[str, object]:
    """Importable kernel modules by name (for tests and benchmarks)."""
    found: dict[str, object] = {"fallback": _fallback}
    try:
        from . import _native

        found["native"] = _native
    except ImportError:
        pass
    return found
