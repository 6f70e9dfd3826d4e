"""Shared map/mask primitives: types, resampling, normalization, thresholding, PNG IO.

All grids are float64 internally; 8-bit (or 16-bit for instance masks) only at
the file boundary. Every function here is pure and safe to call from parallel
workers.
"""

from __future__ import annotations

import numpy as np
from PIL import Image


class CosalError(Exception):
    """Base class for toolbox errors."""


class ShapeMismatchError(CosalError):
    """Two grids that must share dimensions do not."""


def as_scalar_values(m) -> np.ndarray:
    """Coerce a ScalarMap or array-like to a float64 (h, w) array in [0, 1]."""
    if isinstance(m, ScalarMap):
        return m.values
    v = np.asarray(m, dtype=np.float64)
    if v.ndim != 2:
        raise ValueError(f"expected a 2-d grid, got shape {v.shape}")
    return v


def as_mask_values(m) -> np.ndarray:
    """Coerce a LabelMask or array-like to a non-negative integer (h, w) array."""
    if isinstance(m, LabelMask):
        return m.labels
    a = np.asarray(m)
    if a.ndim != 2:
        raise ValueError(f"expected a 2-d mask, got shape {a.shape}")
    if a.dtype == bool:
        return a.astype(np.int32)
    a = a.astype(np.int64, copy=False)
    if a.size and a.min() < 0:
        raise ValueError("mask labels must be non-negative")
    return a


class ScalarMap:
    """H×W grid of unit-interval reals (saliency, attention, GT-probability)."""

    __slots__ = ("values",)

    def __init__(self, values):
        v = np.ascontiguousarray(values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ValueError(f"ScalarMap needs a non-empty 2-d grid, got shape {v.shape}")
        if not np.isfinite(v).all():
            raise ValueError("ScalarMap values must be finite")
        if v.min() < 0.0 or v.max() > 1.0:
            raise ValueError("ScalarMap values must lie in [0, 1]")
        v.flags.writeable = False
        self.values = v

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape


class LabelMask:
    """H×W grid of instance labels: 0 background, k>0 instance k, no gaps."""

    __slots__ = ("labels",)

    def __init__(self, labels):
        a = np.ascontiguousarray(labels)
        if a.dtype == bool:
            a = a.astype(np.int32)
        if not np.issubdtype(a.dtype, np.integer):
            raise ValueError("LabelMask labels must be integers")
        a = np.ascontiguousarray(a, dtype=np.int32)
        if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
            raise ValueError(f"LabelMask needs a non-empty 2-d grid, got shape {a.shape}")
        present = np.unique(a)
        if present.size and present[0] < 0:
            raise ValueError("LabelMask labels must be non-negative")
        positive = present[present > 0]
        if positive.size and not np.array_equal(positive, np.arange(1, positive.size + 1)):
            raise ValueError("LabelMask labels must be contiguous 1..m; use from_raw_labels")
        a.flags.writeable = False
        self.labels = a

    @classmethod
    def from_raw_labels(cls, labels) -> "LabelMask":
        """Relabel arbitrary non-negative labels to contiguous {0} ∪ {1..m}."""
        a = as_mask_values(labels)
        present = np.unique(a)
        positive = present[present > 0]
        lut = np.zeros(int(present[-1]) + 1 if present.size else 1, dtype=np.int32)
        for new, old in enumerate(positive, start=1):
            lut[old] = new
        return cls(lut[a])

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def shape(self):
        return self.labels.shape

    @property
    def n_instances(self) -> int:
        return int(self.labels.max())

    def binary(self) -> np.ndarray:
        """Object-level collapse: True where any instance is present."""
        return self.labels > 0


class FeatureStack:
    """H'×W'×K activation grid; the per-image input of group projection."""

    __slots__ = ("values",)

    def __init__(self, values):
        v = np.ascontiguousarray(values, dtype=np.float64)
        if v.ndim != 3 or min(v.shape) < 1:
            raise ValueError(f"FeatureStack needs a (h, w, k) grid, got shape {v.shape}")
        if not np.isfinite(v).all():
            raise ValueError("FeatureStack values must be finite")
        v.flags.writeable = False
        self.values = v

    @property
    def fheight(self) -> int:
        return self.values.shape[0]

    @property
    def fwidth(self) -> int:
        return self.values.shape[1]

    @property
    def channels(self) -> int:
        return self.values.shape[2]


def _sample_positions(n_in: int, n_out: int) -> np.ndarray:
    # corner-aligned: output corners hit input corners exactly
    if n_out == 1:
        return np.array([0.5 * (n_in - 1)])
    return np.arange(n_out, dtype=np.float64) * ((n_in - 1) / (n_out - 1))


def resize_bilinear(m, out_h: int, out_w: int) -> np.ndarray:
    """Corner-aligned bilinear resample of a unit-interval grid.

    Output values never leave [min(input), max(input)]; resizing to the input
    dimensions returns a bit-identical copy.
    """
    v = as_scalar_values(m)
    if out_h < 1 or out_w < 1:
        raise ValueError("output dimensions must be >= 1")
    h, w = v.shape
    if (out_h, out_w) == (h, w):
        return v.copy()
    rows = _sample_positions(h, out_h)
    cols = _sample_positions(w, out_w)
    i0 = np.floor(rows).astype(np.int64)
    i0 = np.minimum(i0, h - 1)
    i1 = np.minimum(i0 + 1, h - 1)
    fy = rows - i0
    j0 = np.floor(cols).astype(np.int64)
    j0 = np.minimum(j0, w - 1)
    j1 = np.minimum(j0 + 1, w - 1)
    fx = cols - j0
    a = v[i0, :] + fy[:, None] * (v[i1, :] - v[i0, :])
    out = a[:, j0] + fx[None, :] * (a[:, j1] - a[:, j0])
    np.clip(out, v.min(), v.max(), out=out)
    return out


def area_average_resize(m, out_h: int, out_w: int) -> np.ndarray:
    """Box-average resample: each output cell is the mean of its (fractional)
    input footprint. Used for lattice downsampling; exact on constant maps."""
    v = as_scalar_values(m)
    if out_h < 1 or out_w < 1:
        raise ValueError("output dimensions must be >= 1")
    h, w = v.shape
    if (out_h, out_w) == (h, w):
        return v.copy()
    out = _overlap_matrix(h, out_h) @ v @ _overlap_matrix(w, out_w).T
    np.clip(out, v.min(), v.max(), out=out)
    return out


def _overlap_matrix(n_in: int, n_out: int) -> np.ndarray:
    scale = n_in / n_out
    M = np.zeros((n_out, n_in))
    for r in range(n_out):
        lo = r * scale
        hi = (r + 1) * scale
        i0 = int(np.floor(lo))
        i1 = min(int(np.ceil(hi)), n_in)
        for i in range(i0, i1):
            M[r, i] = min(hi, i + 1.0) - max(lo, float(i))
    M /= M.sum(axis=1, keepdims=True)
    return M


def minmax_normalize(grid) -> np.ndarray:
    """Affine rescale of a finite real grid to [0, 1].

    A constant grid maps to all-zero: a zero-variance signal carries no
    evidence and must not masquerade as full confidence.
    """
    v = np.asarray(grid, dtype=np.float64)
    if not np.isfinite(v).all():
        raise ValueError("cannot normalize non-finite values")
    lo = v.min()
    hi = v.max()
    if hi == lo:
        return np.zeros_like(v)
    return (v - lo) / (hi - lo)


def binarize(m, threshold: float) -> np.ndarray:
    """Threshold a map to a 0/1 mask; ties go to foreground (>=)."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError("threshold must lie in [0, 1]")
    v = as_scalar_values(m)
    return (v >= threshold).astype(np.uint8)


def adaptive_threshold(m) -> float:
    """Twice the map mean, clamped to 1."""
    v = as_scalar_values(m)
    return float(min(1.0, 2.0 * v.mean()))


# --- PNG boundary -----------------------------------------------------------

def load_scalar_map(path) -> np.ndarray:
    """Read an 8-bit grayscale PNG as float64 byte/255 values."""
    with Image.open(path) as img:
        if img.mode != "L":
            img = img.convert("L")
        arr = np.asarray(img, dtype=np.float64)
    return arr / 255.0


def save_scalar_map(m, path) -> None:
    """Write a unit-interval grid as an 8-bit grayscale PNG (round(v*255))."""
    v = as_scalar_values(m)
    if v.min() < 0.0 or v.max() > 1.0:
        raise ValueError("scalar map values must lie in [0, 1]")
    Image.fromarray(np.rint(v * 255.0).astype(np.uint8), mode="L").save(path, format="PNG")


def load_label_mask(path) -> LabelMask:
    """Read an 8/16-bit single-channel PNG as a LabelMask (relabeled on load)."""
    with Image.open(path) as img:
        arr = np.asarray(img)
    if arr.ndim == 3:
        # tolerate RGB-saved masks when all channels agree
        if not (arr[..., 0] == arr[..., 1]).all() or not (arr[..., 0] == arr[..., 2]).all():
            raise ValueError(f"{path}: mask PNG must be single-channel")
        arr = arr[..., 0]
    if arr.dtype not in (np.uint8, np.uint16, np.int32):
        raise ValueError(f"{path}: unsupported mask depth {arr.dtype}")
    return LabelMask.from_raw_labels(arr)


def save_label_mask(mask, path) -> None:
    """Write a LabelMask as an 8-bit PNG, or 16-bit when labels exceed 255."""
    labels = as_mask_values(mask)
    hi = int(labels.max()) if labels.size else 0
    if hi > 65535:
        raise ValueError("label values exceed 16-bit PNG range")
    if hi <= 255:
        Image.fromarray(labels.astype(np.uint8), mode="L").save(path, format="PNG")
    else:
        Image.fromarray(labels.astype(np.uint16)).save(path, format="PNG")
