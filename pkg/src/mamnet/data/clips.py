"""Clip sampling, augmentation and temporal neighbour indexing.

Frame indices are 0-based throughout.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import List, Sequence, Tuple

import numpy as np


@dataclass
class VideoClip:
    frames: np.ndarray   # [T, 3, H, W]
    masks: np.ndarray    # [T, H, W]
    video_id: str = ""
    start: int = 0

    def __post_init__(self):
        if self.frames.shape[0] < 1:
            raise ValueError("a clip needs at least one frame")
        if self.masks is not None and self.masks.shape[0] != self.frames.shape[0]:
            raise ValueError(f"{self.frames.shape[0]} frames but {self.masks.shape[0]} masks")

    def __len__(self) -> int:
        return self.frames.shape[0]


def sample_clip(video, length: int, start: int) -> VideoClip:
    n = len(video)
    if length < 1 or start < 0 or start + length > n:
        raise ValueError(f"clip [{start}, {start + length}) out of range for a {n}-frame video")
    sl = slice(start, start + length)
    masks = video.masks[sl] if video.masks is not None else None
    return VideoClip(video.frames[sl], masks, video.video_id, start)


def valid_starts(n_frames: int, length: int) -> range:
    return range(0, max(n_frames - length + 1, 0))


def hflip(clip: VideoClip) -> VideoClip:
    masks = clip.masks[..., ::-1].copy() if clip.masks is not None else None
    return replace(clip, frames=clip.frames[..., ::-1].copy(), masks=masks)


def reverse(clip: VideoClip) -> VideoClip:
    masks = clip.masks[::-1].copy() if clip.masks is not None else None
    return replace(clip, frames=clip.frames[::-1].copy(), masks=masks)


def augment(clip: VideoClip, rng) -> VideoClip:
    """Horizontal flip and temporal inversion, each with probability 0.5.

    ``rng`` is a Generator or an int seed.  Both coins are always drawn so the
    generator advances identically regardless of outcome.
    """
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    do_flip, do_rev = rng.random(2) < 0.5
    if do_flip:
        clip = hflip(clip)
    if do_rev:
        clip = reverse(clip)
    return clip


def neighbor_indices(t: int, length: int) -> Tuple[int, int]:
    """(prev, next) memory frames for query ``t``; a missing side copies the other."""
    if not 0 <= t < length:
        raise ValueError(f"frame {t} out of range for length {length}")
    if length == 1:
        warnings.warn("single-frame clip: memory degenerates to the query frame", stacklevel=2)
        return 0, 0
    prev = t - 1 if t > 0 else t + 1
    nxt = t + 1 if t < length - 1 else t - 1
    return prev, nxt


def memory_indices(t: int, length: int, n: int = 2) -> List[int]:
    """Memory frame indices ordered (t-k..t-1, t+1..t+k) with k = n // 2.

    An out-of-range offset is mirrored to the other side; if that is out of
    range too the nearest in-range non-query frame is used.
    """
    if n == 2:
        return list(neighbor_indices(t, length))
    if length == 1:
        return [0] * n
    k = n // 2
    offsets = list(range(-k, 0)) + list(range(1, k + 1))
    out = []
    for off in offsets:
        for cand in (t + off, t - off):
            if 0 <= cand < length:
                out.append(cand)
                break
        else:
            out.append(t - 1 if t > 0 else t + 1)
    return out


def stack_clips(clips: Sequence[VideoClip]) -> Tuple[np.ndarray, np.ndarray]:
    """Frames [B*T, 3, H, W] and masks [B*T, H, W], clip-major."""
    frames = np.concatenate([c.frames for c in clips]).astype(np.float32)
    masks = np.concatenate([c.masks for c in clips]) if clips[0].masks is not None else None
    return frames, masks
