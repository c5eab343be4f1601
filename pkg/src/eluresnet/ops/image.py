"""Spatial padding, cropping and mirroring used by data augmentation."""
from __future__ import annotations

import numpy as np

from eluresnet.tensor import ShapeError


def pad_crop_flip(image: np.ndarray, pad: int, crop: int, flip: bool,
                  offsets: tuple[int, int]) -> np.ndarray:
    """Zero-pad by ``pad`` on every side, cut a ``crop`` x ``crop`` window whose
    top-left corner sits at ``offsets`` (row, col) in the padded frame, and
    optionally mirror it left-right.
    """
    if image.ndim != 4:
        raise ShapeError(f"expected NCHW image batch, got {image.shape}")
    h, w = image.shape[2], image.shape[3]
    if pad < 0:
        raise ValueError("pad must be non-negative")
    if crop > h + 2 * pad or crop > w + 2 * pad:
        raise ShapeError(f"crop {crop} larger than padded {h + 2 * pad}x{w + 2 * pad}")
    top, left = offsets
    if not (0 <= top <= h + 2 * pad - crop and 0 <= left <= w + 2 * pad - crop):
        raise ValueError(f"offsets {offsets} out of range for crop {crop}")
    padded = np.pad(image, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else image
    out = padded[:, :, top:top + crop, left:left + crop]
    if flip:
        out = out[:, :, :, ::-1]
    return np.ascontiguousarray(out)
