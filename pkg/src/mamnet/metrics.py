"""Saliency evaluation: MAE, max F-measure, S-measure."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Sequence

import numpy as np

BETA2 = 0.3
ALPHA = 0.5
EPS = 1e-8
N_THRESHOLDS = 256


def _pair(pred, gt):
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"prediction shape {pred.shape} differs from ground truth {gt.shape}")
    return pred, gt > 0.5


def mae(pred, gt) -> float:
    pred, gt = _pair(pred, gt)
    return float(np.mean(np.abs(pred - gt)))


def precision_recall_curve(pred, gt):
    """Precision and recall at the thresholds i/255, i = 0..255 (binarise with >=)."""
    pred, gt = _pair(pred, gt)
    thresholds = np.arange(N_THRESHOLDS) / (N_THRESHOLDS - 1)
    flat = pred.ravel()
    fg = gt.ravel()
    all_sorted = np.sort(flat)
    fg_sorted = np.sort(flat[fg])
    # count of values >= t is n - (index of first value >= t)
    pos = (all_sorted.size - np.searchsorted(all_sorted, thresholds, side="left")).astype(np.float64)
    tp = (fg_sorted.size - np.searchsorted(fg_sorted, thresholds, side="left")).astype(np.float64)
    n_fg = float(fg.sum())
    precision = np.divide(tp, pos, out=np.zeros_like(tp), where=pos > 0)
    recall = tp / n_fg if n_fg > 0 else np.zeros_like(tp)
    return precision, recall


def max_f(preds: Sequence, gts: Sequence, beta2: float = BETA2) -> float:
    """Max over thresholds of F computed from dataset-mean precision and recall."""
    if len(preds) == 0:
        raise ValueError("max_f needs at least one prediction")
    if len(preds) != len(gts):
        raise ValueError(f"{len(preds)} predictions but {len(gts)} ground-truth maps")
    curves = [precision_recall_curve(p, g) for p, g in zip(preds, gts)]
    p_mean = np.mean([c[0] for c in curves], axis=0)
    r_mean = np.mean([c[1] for c in curves], axis=0)
    den = beta2 * p_mean + r_mean
    f = np.divide((1 + beta2) * p_mean * r_mean, den, out=np.zeros_like(den), where=den > 0)
    return float(f.max())


def _object_score(x: np.ndarray) -> float:
    if x.size == 0:
        return 0.0
    mu = x.mean()
    sigma = x.std(ddof=1) if x.size > 1 else 0.0
    return float(2 * mu / (mu * mu + 1 + 2 * sigma + EPS))


def s_object(pred: np.ndarray, gt: np.ndarray) -> float:
    mu = gt.mean()
    o_fg = _object_score(pred[gt])
    o_bg = _object_score(1 - pred[~gt])
    return float(mu * o_fg + (1 - mu) * o_bg)


def centroid(gt: np.ndarray):
    """Integer block split (row, col) at the foreground centroid.

    Rows and columns at or before the centroid go to the first block, so a
    mirrored map splits at the mirrored position unless the centroid sits
    exactly on a pixel centre.
    """
    rows, cols = np.nonzero(gt)
    return int(np.floor(rows.mean())) + 1, int(np.floor(cols.mean())) + 1


def _block_similarity(x: np.ndarray, y: np.ndarray) -> float:
    n = x.size
    mx, my = x.mean(), y.mean()
    if n > 1:
        vx = ((x - mx) ** 2).sum() / (n - 1)
        vy = ((y - my) ** 2).sum() / (n - 1)
        cxy = ((x - mx) * (y - my)).sum() / (n - 1)
    else:
        vx = vy = cxy = 0.0
    num = 4 * mx * my * cxy
    den = (mx * mx + my * my) * (vx + vy)
    if num == 0 and den == 0:
        return 1.0
    if num == 0:
        return 0.0
    return float(num / (den + EPS))


def s_region(pred: np.ndarray, gt: np.ndarray) -> float:
    h, w = gt.shape
    cy, cx = centroid(gt)
    total = 0.0
    for rs in (slice(0, cy), slice(cy, h)):
        for cs in (slice(0, cx), slice(cx, w)):
            x, y = pred[rs, cs], gt[rs, cs].astype(np.float64)
            if x.size == 0:
                continue
            total += (x.size / (h * w)) * _block_similarity(x, y)
    return total


def s_measure(pred, gt, alpha: float = ALPHA) -> float:
    pred, gt = _pair(pred, gt)
    fg = gt.mean()
    if fg == 0:
        return float(np.clip(1 - pred.mean(), 0, 1))
    if fg == 1:
        return float(np.clip(pred.mean(), 0, 1))
    s = alpha * s_object(pred, gt) + (1 - alpha) * s_region(pred, gt)
    return float(np.clip(s, 0, 1))


@dataclass
class MetricsReport:
    frame_ids: List[tuple] = field(default_factory=list)
    frame_mae: List[float] = field(default_factory=list)
    mae: float = 0.0
    max_f: float = 0.0
    s_measure: float = 0.0

    @property
    def n_frames(self) -> int:
        return len(self.frame_mae)

    def to_csv(self) -> str:
        lines = ["video,frame,mae"]
        lines += [f"{v},{f},{m:.6f}" for (v, f), m in zip(self.frame_ids, self.frame_mae)]
        lines.append(f"ALL,-,{self.mae:.6f},{self.max_f:.6f},{self.s_measure:.6f}")
        return "\n".join(lines) + "\n"


def evaluate(preds: Sequence, gts: Sequence, frame_ids: Sequence[tuple] = ()) -> MetricsReport:
    if len(preds) == 0:
        raise ValueError("nothing to evaluate")
    ids = list(frame_ids) or [("-", i) for i in range(len(preds))]
    per_frame = [mae(p, g) for p, g in zip(preds, gts)]
    return MetricsReport(
        frame_ids=ids,
        frame_mae=per_frame,
        mae=float(np.mean(per_frame)),
        max_f=max_f(preds, gts),
        s_measure=float(np.mean([s_measure(p, g) for p, g in zip(preds, gts)])),
    )
