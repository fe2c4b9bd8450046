"""Kernel backend selection.

The compiled extension is used when it is available; otherwise the
pure-Python reference kernel takes over.  ``HEAPFACTS_PURE=1`` in the
environment forces the fallback (useful for benchmarking and parity
tests).
"""

from __future__ import annotations

import os

from . import scan_py

_active = scan_py
if not os.environ.get("HEAPFACTS_PURE"):
    try:
        from . import _scan_cy as _compiled

        _active = _compiled
    except ImportError:
        pass

TYPE_SIZES = scan_py.TYPE_SIZES


def set_backend(name: str) -> str:
    """Switch backend ("pure" or "compiled"); returns the active name."""
    global _active
    if name == "pure":
        _active = scan_py
    elif name == "compiled":
        from . import _scan_cy as _compiled

        _active = _compiled
    else:
        raise ValueError(f"unknown kernel backend {name!r}")
    return _active.BACKEND


def backend_name() -> str:
    return _active.BACKEND


def scan_heap_segment(data: bytes, id_size: int):
    return _active.scan_heap_segment(data, id_size)


def decode_values(data: bytes, types: bytes, id_size: int):
    return _active.decode_values(data, types, id_size)
