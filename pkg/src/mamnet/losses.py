"""Training objective: BCE + SSIM + IoU on saliency, BCE on motion."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .autodiff import Tensor, as_tensor, ops

BCE_EPS = 1e-7
IOU_EPS = 1e-8
SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2
SSIM_WINDOW = 11


def _label(label, pred: Tensor, check_binary: bool = False) -> Tensor:
    data = label.data if isinstance(label, Tensor) else np.asarray(label)
    if check_binary and not np.all((data == 0) | (data == 1)):
        raise ValueError("label must be binary")
    if data.shape != pred.shape:
        raise ValueError(f"label shape {data.shape} differs from prediction {pred.shape}")
    return Tensor(data, dtype=pred.dtype)


def bce_loss(pred: Tensor, label) -> Tensor:
    """Mean per-pixel binary cross entropy; ``pred`` is clamped away from 0 and 1."""
    y = _label(label, pred, check_binary=True)
    p = ops.clamp(pred, BCE_EPS, 1 - BCE_EPS)
    pos = ops.mul(y, ops.log(p))
    neg = ops.mul(ops.sub(1.0, y), ops.log(ops.sub(1.0, p)))
    return ops.neg(ops.mean(ops.add(pos, neg)))


def _window(h: int, w: int):
    kh, kw = min(SSIM_WINDOW, h), min(SSIM_WINDOW, w)
    if (kh, kw) != (SSIM_WINDOW, SSIM_WINDOW):
        warnings.warn(f"image {h}x{w} smaller than the SSIM window; using {kh}x{kw}", stacklevel=3)
    return kh, kw


def ssim_map(pred: Tensor, label) -> Tensor:
    """SSIM of every valid uniform window, shape [B, 1, H-k+1, W-k+1]."""
    y = _label(label, pred)
    if pred.ndim != 4 or pred.shape[1] != 1:
        raise ValueError(f"expected [B,1,H,W] maps, got {pred.shape}")
    kh, kw = _window(*pred.shape[2:])
    box = Tensor(np.full((1, 1, kh, kw), 1.0 / (kh * kw)), dtype=pred.dtype)

    def avg(t):
        return ops.conv2d(t, box)

    mu_x, mu_y = avg(pred), avg(y)
    mu_xx, mu_yy, mu_xy = ops.square(mu_x), ops.square(mu_y), ops.mul(mu_x, mu_y)
    var_x = ops.sub(avg(ops.square(pred)), mu_xx)
    var_y = ops.sub(avg(ops.square(y)), mu_yy)
    cov = ops.sub(avg(ops.mul(pred, y)), mu_xy)
    num = ops.mul(ops.add(ops.scale(mu_xy, 2.0), SSIM_C1), ops.add(ops.scale(cov, 2.0), SSIM_C2))
    den = ops.mul(ops.add(ops.add(mu_xx, mu_yy), SSIM_C1), ops.add(ops.add(var_x, var_y), SSIM_C2))
    return ops.div(num, den)


def ssim_loss(pred: Tensor, label) -> Tensor:
    """1 - mean SSIM over all valid 11x11 windows (and the batch)."""
    return ops.sub(1.0, ops.mean(ssim_map(pred, label)))


def iou_loss(pred: Tensor, label) -> Tensor:
    """Soft IoU loss per image, averaged over the batch."""
    y = _label(label, pred)
    axes = tuple(range(1, pred.ndim))
    inter = ops.sum(ops.mul(pred, y), axis=axes)
    union = ops.sum(ops.sub(ops.add(pred, y), ops.mul(pred, y)), axis=axes)
    ratio = ops.div(inter, ops.add(union, IOU_EPS))
    return ops.mean(ops.sub(1.0, ratio))


@dataclass
class LossBreakdown:
    l_bce: Tensor
    l_ssim: Tensor
    l_iou: Tensor
    l_motion: Tensor
    l_total: Tensor

    def values(self) -> dict:
        return {k: float(getattr(self, k).data) for k in
                ("l_bce", "l_ssim", "l_iou", "l_motion", "l_total")}


def total_loss(saliency: Tensor, labels, motion: Optional[Tensor] = None,
               motion_labels=None, stage: int = 2) -> LossBreakdown:
    """Sum of the saliency terms and, in stage 2, the motion BCE.

    ``saliency`` stacks every frame of every clip along the batch axis, so the
    mean-reduced terms already average over frames.  ``motion`` stacks every
    (t, t+1) pair likewise.
    """
    if stage not in (1, 2):
        raise ValueError(f"stage must be 1 or 2, got {stage}")
    l_bce = bce_loss(saliency, labels)
    l_ssim = ssim_loss(saliency, labels)
    l_iou = iou_loss(saliency, labels)
    total = ops.add(ops.add(l_bce, l_ssim), l_iou)
    if stage == 2 and motion is not None and motion.shape[0] > 0:
        l_motion = bce_loss(motion, motion_labels)
        total = ops.add(total, l_motion)
    else:
        if stage == 2 and motion is not None:
            warnings.warn("no motion pairs available; motion term is 0", stacklevel=2)
        l_motion = Tensor(0.0, dtype=saliency.dtype)
    return LossBreakdown(l_bce, l_ssim, l_iou, l_motion, total)
