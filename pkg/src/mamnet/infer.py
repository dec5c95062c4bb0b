"""Batched inference over video directories and writing of maps to disk."""
from __future__ import annotations

import json
import os
from dataclasses import asdict
from typing import Dict, List, Optional

import numpy as np

from .checkpoint import load_checkpoint
from .config import ModelConfig
from .data.pnm import write_pnm
from .data.synthetic import list_videos, load_video
from .model import predict_video
from .params import Params
from .train import params_from_checkpoint

CONFIG_NAME = "model_config.json"


def save_model_config(cfg: ModelConfig, out_dir: str) -> str:
    path = os.path.join(out_dir, CONFIG_NAME)
    os.makedirs(out_dir, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(asdict(cfg), fh, indent=2, sort_keys=True)
    return path


def load_model_config(checkpoint_path: str) -> Optional[ModelConfig]:
    """The config written next to a checkpoint by ``train``, if present."""
    path = os.path.join(os.path.dirname(os.path.abspath(checkpoint_path)), CONFIG_NAME)
    if not os.path.exists(path):
        return None
    with open(path) as fh:
        return ModelConfig(**json.load(fh))


def load_model(checkpoint_path: str, cfg: Optional[ModelConfig] = None):
    cfg = cfg or load_model_config(checkpoint_path) or ModelConfig()
    return params_from_checkpoint(load_checkpoint(checkpoint_path), cfg), cfg


def map_path(out_root: str, video_id: str, t: int, sub: str = "") -> str:
    """1-indexed ``%05d.pgm`` under ``<out>/<video_id>[/<sub>]``."""
    return os.path.join(out_root, video_id, sub, f"{t + 1:05d}.pgm")


def infer_video(frames: np.ndarray, params: Params, cfg: ModelConfig, batch: int = 1,
                emit_motion: bool = False):
    h, w = frames.shape[2:]
    if (h, w) != tuple(cfg.backbone.input_size):
        raise ValueError(f"frames are {h}x{w} but the model expects {cfg.backbone.input_size}")
    return predict_video(frames, params, cfg, batch=batch, emit_motion=emit_motion)


def infer_dir(videos_root: str, out_root: str, params: Params, cfg: ModelConfig, batch: int = 1,
              emit_motion: bool = False) -> Dict[str, int]:
    """Write one saliency graymap per frame (and T-1 motion maps) for every video.

    Returns the number of frames written per video id.
    """
    written = {}
    ids = list_videos(videos_root)
    if not ids:
        raise FileNotFoundError(f"no videos under {videos_root}")
    for vid in ids:
        video = load_video(videos_root, vid, need_masks=False)
        out = infer_video(video.frames, params, cfg, batch, emit_motion)
        sal, motion = out if emit_motion else (out, None)
        for t in range(sal.shape[0]):
            write_pnm(map_path(out_root, vid, t), sal[t])
        if motion is not None:
            for t in range(motion.shape[0]):
                write_pnm(map_path(out_root, vid, t, "motion"), motion[t])
        written[vid] = sal.shape[0]
    return written


def batch_invariance(frames: np.ndarray, params: Params, cfg: ModelConfig,
                     batches: List[int] = (1, 8)) -> float:
    """Largest per-pixel difference between runs at different batch sizes."""
    outs = [predict_video(frames, params, cfg, batch=b) for b in batches]
    return float(max(np.abs(o - outs[0]).max() for o in outs[1:]))
