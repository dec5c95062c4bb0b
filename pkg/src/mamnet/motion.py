"""Boundary-motion labels and the motion prediction head."""
from __future__ import annotations

import warnings
from typing import List, Tuple

import numpy as np

from .autodiff import Tensor, ops
from .params import ParamBuilder, Params


def _as_binary(y, name: str) -> np.ndarray:
    y = np.asarray(y)
    if not np.all((y == 0) | (y == 1)):
        raise ValueError(f"{name} must be strictly binary (0/1)")
    return y.astype(bool)


def motion_label(y_t, y_next) -> np.ndarray:
    """Per-pixel XOR of two consecutive binary masks, as uint8 {0, 1}."""
    a = _as_binary(y_t, "y_t")
    b = _as_binary(y_next, "y_next")
    if a.shape != b.shape:
        raise ValueError(f"mask shapes differ: {a.shape} vs {b.shape}")
    return np.logical_xor(a, b).astype(np.uint8)


def clip_motion_pairs(length: int) -> List[Tuple[int, int]]:
    """Consecutive (t, t+1) index pairs of a clip, 0-based."""
    if length < 2:
        warnings.warn(f"clip of length {length} has no motion pairs; motion term skipped",
                      stacklevel=2)
        return []
    return [(t, t + 1) for t in range(length - 1)]


def init_motion(pb: ParamBuilder, c: int) -> None:
    pb.conv("motion.predict", 1, 6 * c, 3, gain=0.1)


def predict_motion(d_t: Tensor, d_next: Tensor, params: Params, out_size: Tuple[int, int]) -> Tensor:
    """Motion probability map from the stacked decoder features of frames t and t+1."""
    if d_t.shape != d_next.shape:
        raise ValueError(f"decoder features differ in shape: {d_t.shape} vs {d_next.shape}")
    w = params["motion.predict.weight"]
    logits = ops.conv2d(ops.concat([d_t, d_next], axis=1), w, params["motion.predict.bias"],
                        padding=w.shape[-1] // 2)
    return ops.sigmoid(ops.bilinear_resize(logits, *out_size))
