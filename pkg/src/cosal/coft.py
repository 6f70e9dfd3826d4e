"""COFT activation-tensor files: the seam between feature exporters and this engine.

Layout (all little-endian): magic "COFT", u32 version=1, u32 height, u32 width,
u32 channels, then height*width*channels float32 values, channel index fastest.
"""

from __future__ import annotations

import struct

import numpy as np

from .core import CosalError, FeatureStack

MAGIC = b"COFT"
VERSION = 1
_HEADER = struct.Struct("<4sIIII")


class CoftFormatError(CosalError):
    """A COFT file violates the format contract."""


def write_coft(values, path) -> None:
    """Write an (h, w, k) activation grid; values are stored as float32."""
    v = np.ascontiguousarray(values, dtype=np.float32)
    if v.ndim != 3 or min(v.shape) < 1:
        raise ValueError(f"expected a non-empty (h, w, k) grid, got shape {v.shape}")
    if not np.isfinite(v).all():
        raise ValueError("refusing to write non-finite activations")
    h, w, k = v.shape
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, h, w, k))
        f.write(v.astype("<f4", copy=False).tobytes(order="C"))


def _parse(path):
    with open(path, "rb") as f:
        header = f.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise CoftFormatError(f"{path}: truncated header")
        magic, version, h, w, k = _HEADER.unpack(header)
        if magic != MAGIC:
            raise CoftFormatError(f"{path}: bad magic {magic!r}")
        if version != VERSION:
            raise CoftFormatError(f"{path}: unsupported version {version}")
        if h < 1 or w < 1 or k < 1:
            raise CoftFormatError(f"{path}: zero dimension in header ({h}x{w}x{k})")
        payload = f.read()
    expected = h * w * k * 4
    if len(payload) != expected:
        raise CoftFormatError(
            f"{path}: payload length mismatch (expected {expected} bytes, got {len(payload)})"
        )
    flat = np.frombuffer(payload, dtype="<f4")
    if not np.isfinite(flat).all():
        raise CoftFormatError(f"{path}: non-finite values in payload")
    return flat.reshape(h, w, k)


def verify_coft(path) -> tuple[int, int, int]:
    """Validate a COFT file and return its (height, width, channels)."""
    arr = _parse(path)
    return arr.shape


def read_coft(path) -> FeatureStack:
    """Read a COFT file into a float64 FeatureStack."""
    return FeatureStack(_parse(path).astype(np.float64))
