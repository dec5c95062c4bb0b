"""Optimiser, schedule and the two-stage training loop."""
from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .autodiff import Tensor, backward
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import ModelConfig
from .data.clips import augment, hflip, sample_clip, stack_clips, valid_starts
from .losses import LossBreakdown, total_loss
from .model import forward_clips, init_params
from .motion import motion_label
from .params import Params

log = logging.getLogger(__name__)

LOG_FIELDS = ("step", "l_bce", "l_ssim", "l_iou", "l_motion", "l_total")


@dataclass
class TrainConfig:
    stage: int = 2
    epochs: int = 20
    batch_size: int = 4
    lr: float = 1e-4
    halving_period: int = 8
    seed: int = 0
    clip_len: int = 4
    augment: bool = True
    clip_grad: Optional[float] = None
    pretrained_lr_scale: float = 0.1
    out_dir: str = "runs/default"
    resume: Optional[str] = None

    def validate(self) -> None:
        if self.stage not in (1, 2):
            raise ValueError(f"stage must be 1 or 2, got {self.stage}")
        if self.stage == 2 and self.clip_len < 2:
            raise ValueError("stage 2 needs clips of at least 2 frames")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")


# ---------------------------------------------------------------- optimiser

@dataclass
class AdamState:
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Params, state: AdamState, lr: float, lr_scale: Optional[Dict[str, float]] = None,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
              clip_grad: Optional[float] = None) -> None:
    """One bias-corrected Adam update in place, using each parameter's ``.grad``.

    Parameters without a gradient are left untouched.  A non-finite gradient
    aborts the step before anything is modified.
    """
    grads = {k: p.grad for k, p in params.items() if p.grad is not None}
    for k, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {k!r}; step aborted")
    if clip_grad is not None:
        norm = float(np.sqrt(sum(float(np.sum(g.astype(np.float64) ** 2)) for g in grads.values())))
        if norm > clip_grad:
            grads = {k: g * np.float32(clip_grad / norm) for k, g in grads.items()}
    state.step += 1
    t = state.step
    c1 = 1 - beta1 ** t
    c2 = 1 - beta2 ** t
    for k, g in grads.items():
        p = params[k]
        m = state.m.get(k)
        if m is None:
            m = state.m[k] = np.zeros_like(p.data)
            state.v[k] = np.zeros_like(p.data)
        v = state.v[k]
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * g * g
        step_lr = lr * (lr_scale.get(k, 1.0) if lr_scale else 1.0)
        p.data -= (step_lr * (m / c1) / (np.sqrt(v / c2) + eps)).astype(p.dtype)


def lr_at(epoch: int, base: float, period: int = 8) -> float:
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return base * 0.5 ** (epoch // period)


# ---------------------------------------------------------------- batches

def _epoch_rng(seed: int, epoch: int) -> np.random.Generator:
    # derived per epoch so a resumed run replays the exact same batches
    return np.random.default_rng([seed, epoch, 7919])


def stage1_batches(videos: Sequence, cfg: TrainConfig, epoch: int) -> List[tuple]:
    """Single-frame batches covering every (video, frame) once per epoch."""
    rng = _epoch_rng(cfg.seed, epoch)
    items = [(vi, t) for vi, v in enumerate(videos) for t in range(len(v))]
    order = rng.permutation(len(items))
    batches = []
    for s in range(0, len(order), cfg.batch_size):
        clips = []
        for j in order[s:s + cfg.batch_size]:
            vi, t = items[j]
            clip = sample_clip(videos[vi], 1, t)
            if cfg.augment and rng.random() < 0.5:
                clip = hflip(clip)
            clips.append(clip)
        batches.append(stack_clips(clips))
    return batches


def stage2_batches(videos: Sequence, cfg: TrainConfig, epoch: int) -> List[tuple]:
    """Each video contributes len // T clips at random starts per epoch."""
    rng = _epoch_rng(cfg.seed, epoch)
    clips = []
    for v in videos:
        starts = valid_starts(len(v), cfg.clip_len)
        if len(starts) == 0:
            continue
        for _ in range(max(len(v) // cfg.clip_len, 1)):
            clip = sample_clip(v, cfg.clip_len, int(rng.choice(starts)))
            clips.append(augment(clip, rng) if cfg.augment else clip)
    order = rng.permutation(len(clips))
    return [stack_clips([clips[j] for j in order[s:s + cfg.batch_size]])
            for s in range(0, len(order), cfg.batch_size)]


# ---------------------------------------------------------------- step

def loss_on_batch(frames: np.ndarray, masks: np.ndarray, clip_len: int, params: Params,
                  model_cfg: ModelConfig, stage: int) -> LossBreakdown:
    use_motion = stage == 2 and model_cfg.use_motion and clip_len >= 2
    out = forward_clips(frames, clip_len, params, model_cfg, with_motion=use_motion)
    dtype = out.saliency.dtype
    labels = masks[:, None].astype(dtype)
    m_labels = None
    if out.motion is not None:
        m_labels = np.stack([motion_label(masks[a], masks[b]) for a, b in out.pairs])[:, None].astype(dtype)
    return total_loss(out.saliency, labels, out.motion, m_labels, stage=stage if use_motion else 1)


@dataclass
class TrainResult:
    params: Params
    history: List[dict]
    checkpoint_path: str


def _lr_scales_from_stage1(params: Params, ck: Checkpoint, factor: float) -> Dict[str, float]:
    return {k: factor for k in params if k in ck.params and not k.startswith("motion.")}


def train(cfg: TrainConfig, model_cfg: ModelConfig, videos: Sequence,
          on_epoch=None) -> TrainResult:
    """Train for ``cfg.epochs`` epochs (counted from 0, or from the resumed epoch).

    Writes ``train_log.csv`` and ``checkpoint.mmnc`` (after every epoch) into
    ``cfg.out_dir``.
    """
    cfg.validate()
    model_cfg.validate()
    fp = model_cfg.fingerprint()
    params = init_params(model_cfg, cfg.seed)
    state = AdamState()
    lr_scale: Dict[str, float] = {}
    start_epoch = 0
    if cfg.resume:
        ck = load_checkpoint(cfg.resume)
        if ck.fingerprint != fp:
            raise ValueError(f"checkpoint fingerprint {ck.fingerprint} does not match model {fp}")
        missing = set(params) - set(ck.params)
        if missing:
            raise ValueError(f"checkpoint lacks parameters {sorted(missing)}")
        for k, p in params.items():
            p.data = ck.params[k].astype(p.dtype).copy()
        if ck.stage == cfg.stage:
            state = AdamState(ck.step, {k: v.copy() for k, v in ck.opt_m.items()},
                              {k: v.copy() for k, v in ck.opt_v.items()})
            lr_scale = dict(ck.lr_scale)
            start_epoch = ck.epoch
        elif ck.stage == 1 and cfg.stage == 2:
            lr_scale = _lr_scales_from_stage1(params, ck, cfg.pretrained_lr_scale)
        else:
            raise ValueError(f"cannot resume stage {cfg.stage} from a stage-{ck.stage} checkpoint")

    os.makedirs(cfg.out_dir, exist_ok=True)
    log_path = os.path.join(cfg.out_dir, "train_log.csv")
    ck_path = os.path.join(cfg.out_dir, "checkpoint.mmnc")
    new_log = not (cfg.resume and start_epoch > 0 and os.path.exists(log_path))
    clip_len = 1 if cfg.stage == 1 else cfg.clip_len
    history: List[dict] = []
    with open(log_path, "w" if new_log else "a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=LOG_FIELDS)
        if new_log:
            writer.writeheader()
        for epoch in range(start_epoch, start_epoch + cfg.epochs):
            lr = lr_at(epoch, cfg.lr, cfg.halving_period)
            batches = (stage1_batches if cfg.stage == 1 else stage2_batches)(videos, cfg, epoch)
            for frames, masks in batches:
                for p in params.values():
                    p.grad = None
                losses = loss_on_batch(frames, masks, clip_len, params, model_cfg, cfg.stage)
                backward(losses.l_total)
                adam_step(params, state, lr, lr_scale, clip_grad=cfg.clip_grad)
                row = {"step": state.step, **losses.values()}
                writer.writerow({k: (row[k] if k == "step" else f"{row[k]:.8g}") for k in LOG_FIELDS})
                history.append(row)
            fh.flush()
            save_checkpoint(ck_path, Checkpoint(
                params={k: p.data for k, p in params.items()}, fingerprint=fp, step=state.step,
                epoch=epoch + 1, stage=cfg.stage, opt_m=state.m, opt_v=state.v, lr_scale=lr_scale))
            log.info("epoch %d done, step %d, lr %.3g, last loss %.4f", epoch + 1, state.step, lr,
                     history[-1]["l_total"] if history else float("nan"))
            if on_epoch is not None:
                on_epoch(epoch, params)
    return TrainResult(params, history, ck_path)


def params_from_checkpoint(ck: Checkpoint, model_cfg: ModelConfig) -> Params:
    if ck.fingerprint != model_cfg.fingerprint():
        raise ValueError(f"checkpoint fingerprint {ck.fingerprint} does not match model "
                         f"{model_cfg.fingerprint()}")
    return {k: Tensor(v, requires_grad=True, dtype=np.float32) for k, v in ck.params.items()}
