"""Deterministic synthetic videos: one moving salient shape over a smooth
background with static distractor shapes."""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .pnm import read_pnm, write_mask, write_pnm

SHAPE_KINDS = ("ellipse", "rectangle", "triangle")
TRAJECTORY_KINDS = ("linear", "sinusoidal")


@dataclass
class SyntheticConfig:
    videos: int = 40
    frames_per_video: int = 16
    size: Tuple[int, int] = (64, 64)
    shape_kinds: Tuple[str, ...] = SHAPE_KINDS
    trajectory_kinds: Tuple[str, ...] = TRAJECTORY_KINDS
    distractors: int = 2
    background_smoothness: float = 2.0   # highest spatial frequency, cycles per frame
    shift_prob: float = 0.0
    seed: int = 0
    salient_radius: Tuple[float, float] = (0.12, 0.2)    # fraction of min(H, W)
    distractor_scale: Tuple[float, float] = (0.5, 0.8)   # relative to the salient radius
    max_distractor_area: float = 0.5                     # relative to the salient pixel area
    speed: Tuple[float, float] = (1.5, 3.0)              # pixels per frame
    min_contrast: float = 0.2
    noise: float = 0.05


@dataclass
class Shape:
    kind: str
    center: np.ndarray        # (y, x)
    radii: Tuple[float, float]  # (ry, rx)
    color: np.ndarray
    angle: float = 0.0

    def __post_init__(self):
        if self.kind not in SHAPE_KINDS:
            raise ValueError(f"unknown shape kind {self.kind!r}")
        if min(self.radii) <= 0:
            raise ValueError(f"shape radii must be positive, got {self.radii}")

    def vertices(self, center=None) -> np.ndarray:
        cy, cx = self.center if center is None else center
        th = self.angle + 2 * np.pi * np.arange(3) / 3
        return np.stack([cy + self.radii[0] * np.sin(th), cx + self.radii[1] * np.cos(th)], axis=1)

    def support(self, shape_hw, center=None) -> np.ndarray:
        h, w = shape_hw
        cy, cx = self.center if center is None else center
        yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
        ry, rx = self.radii
        if self.kind == "ellipse":
            return ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
        if self.kind == "rectangle":
            return (np.abs(yy - cy) <= ry) & (np.abs(xx - cx) <= rx)
        v = self.vertices((cy, cx))
        signs = []
        for i in range(3):
            (y0, x0), (y1, x1) = v[i], v[(i + 1) % 3]
            signs.append((x1 - x0) * (yy - y0) - (y1 - y0) * (xx - x0))
        s = np.stack(signs)
        return np.all(s >= 0, axis=0) | np.all(s <= 0, axis=0)

    def perimeter(self) -> float:
        ry, rx = self.radii
        if self.kind == "ellipse":
            return math.pi * (3 * (rx + ry) - math.sqrt((3 * rx + ry) * (rx + 3 * ry)))
        if self.kind == "rectangle":
            return 4.0 * (rx + ry) + 4.0  # pixel-inclusive extent is 2r + 1 per side
        v = self.vertices()
        return float(sum(np.linalg.norm(v[i] - v[(i + 1) % 3]) for i in range(3)))

    def extent(self) -> Tuple[float, float]:
        if self.kind == "triangle":
            v = self.vertices((0.0, 0.0))
            return float(np.abs(v[:, 0]).max()), float(np.abs(v[:, 1]).max())
        return self.radii


@dataclass
class Trajectory:
    kind: str
    start: np.ndarray
    velocity: np.ndarray      # linear: px/frame; sinusoidal: peak px/frame
    lo: np.ndarray
    hi: np.ndarray
    phase: float = 0.0
    omega: float = 0.5

    def position(self, t: float) -> np.ndarray:
        if self.kind == "linear":
            raw = self.start + self.velocity * t
        else:
            amp = self.velocity / self.omega
            raw = self.start + amp * (np.sin(self.omega * t + self.phase) - np.sin(self.phase))
        return _fold(raw, self.lo, self.hi)


def _fold(x: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """Reflect ``x`` into [lo, hi] (bouncing off the borders)."""
    span = np.maximum(hi - lo, 1e-9)
    r = np.mod(x - lo, 2 * span)
    return lo + np.where(r > span, 2 * span - r, r)


@dataclass
class Video:
    video_id: str
    frames: np.ndarray          # [T, 3, H, W] float32 in [0, 1]
    masks: np.ndarray           # [T, H, W] uint8 {0, 1}
    centers: Optional[np.ndarray] = None   # [T, 2] salient centre per frame
    salient: List[Shape] = field(default_factory=list)  # salient shape per frame
    shift_frame: Optional[int] = None

    def __len__(self) -> int:
        return self.frames.shape[0]


def background(rng: np.random.Generator, h: int, w: int, smoothness: float) -> np.ndarray:
    """Sum of three low-frequency cosine fields per channel, centred on 0.5."""
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    out = np.empty((3, h, w))
    for c in range(3):
        field_ = np.full((h, w), rng.uniform(0.3, 0.7))
        for _ in range(3):
            fy, fx = rng.uniform(0, smoothness, size=2)
            amp = rng.uniform(0.03, 0.1)
            phase = rng.uniform(0, 2 * np.pi)
            field_ += amp * np.cos(2 * np.pi * (fy * yy / h + fx * xx / w) + phase)
        out[c] = field_
    return np.clip(out, 0.0, 1.0)


def _random_shape(rng, cfg: SyntheticConfig, radius: float, bg: np.ndarray, kind=None) -> Shape:
    h, w = cfg.size
    kind = kind or cfg.shape_kinds[rng.integers(len(cfg.shape_kinds))]
    aspect = rng.uniform(0.7, 1.3)
    radii = (max(radius * aspect, 2.0), max(radius / aspect, 2.0))
    shape = Shape(kind, np.zeros(2), radii, np.zeros(3), angle=rng.uniform(0, 2 * np.pi))
    ey, ex = shape.extent()
    shape.center = np.array([rng.uniform(ey + 1, h - ey - 2), rng.uniform(ex + 1, w - ex - 2)])
    support = shape.support((h, w))
    if not support.any():
        raise ValueError(f"shape {kind} with radii {radii} has empty pixel support")
    local = bg[:, support].mean(axis=1)
    for _ in range(100):
        color = rng.uniform(0, 1, size=3)
        if np.abs(color - local).mean() >= cfg.min_contrast:
            break
    else:
        color = np.where(local > 0.5, 0.0, 1.0)
    shape.color = color
    return shape


def _distractor(rng, cfg: SyntheticConfig, r: float, bg: np.ndarray, salient_area: int) -> Shape:
    """A static shape whose pixel area stays below the salient one's by a fixed ratio."""
    shape = _random_shape(rng, cfg, r * rng.uniform(*cfg.distractor_scale), bg)
    while shape.support(cfg.size).sum() > cfg.max_distractor_area * salient_area and max(shape.radii) > 2.0:
        shape.radii = tuple(max(0.9 * x, 2.0) for x in shape.radii)
    return shape


def _trajectory(rng, cfg: SyntheticConfig, shape: Shape) -> Trajectory:
    h, w = cfg.size
    ey, ex = shape.extent()
    lo = np.array([ey + 1, ex + 1])
    hi = np.array([h - ey - 2, w - ex - 2])
    kind = cfg.trajectory_kinds[rng.integers(len(cfg.trajectory_kinds))]
    speed = rng.uniform(*cfg.speed)
    theta = rng.uniform(0, 2 * np.pi)
    vel = speed * np.array([np.sin(theta), np.cos(theta)])
    return Trajectory(kind, shape.center.copy(), vel, lo, hi,
                      phase=rng.uniform(0, 2 * np.pi), omega=rng.uniform(0.3, 0.6))


def generate_video(cfg: SyntheticConfig, index: int) -> Video:
    rng = np.random.default_rng([cfg.seed, index])
    h, w = cfg.size
    n = cfg.frames_per_video
    bg = background(rng, h, w, cfg.background_smoothness)
    r = rng.uniform(*cfg.salient_radius) * min(h, w)
    salient = _random_shape(rng, cfg, r, bg)
    area = salient.support((h, w)).sum()
    distractors = [_distractor(rng, cfg, r, bg, area) for _ in range(cfg.distractors)]
    traj = _trajectory(rng, cfg, salient)

    shift = None
    if cfg.distractors > 0 and n >= 3 and rng.random() < cfg.shift_prob:
        shift = int(rng.integers(n // 3, max(n // 3 + 1, 2 * n // 3)))
    new_traj = _trajectory(rng, cfg, distractors[0]) if shift is not None else None

    frames = np.empty((n, 3, h, w), dtype=np.float32)
    masks = np.empty((n, h, w), dtype=np.uint8)
    centers = np.empty((n, 2))
    per_frame: List[Shape] = []
    for t in range(n):
        img = bg.copy()
        if shift is None or t < shift:
            layers = [(d, d.center) for d in distractors] + [(salient, traj.position(t))]
            top = salient
        else:
            frozen = traj.position(shift - 1)
            layers = [(salient, frozen)] + [(d, d.center) for d in distractors[1:]]
            layers.append((distractors[0], new_traj.position(t - shift)))
            top = distractors[0]
        for shp, c in layers:
            img[:, shp.support((h, w), c)] = shp.color[:, None]
        img += rng.uniform(-cfg.noise / 2, cfg.noise / 2, size=img.shape)
        frames[t] = np.clip(img, 0, 1)
        centers[t] = layers[-1][1]
        masks[t] = top.support((h, w), centers[t])
        per_frame.append(top)
    return Video(f"{index:04d}", frames, masks, centers, per_frame, shift)


def generate_dataset(cfg: SyntheticConfig) -> List[Video]:
    return [generate_video(cfg, i) for i in range(cfg.videos)]


def frame_path(root, video_id: str, t: int, kind: str = "frames") -> str:
    ext = "ppm" if kind == "frames" else "pgm"
    return os.path.join(root, video_id, kind, f"{t + 1:05d}.{ext}")


def save_video(video: Video, root) -> None:
    for t in range(len(video)):
        write_pnm(frame_path(root, video.video_id, t), video.frames[t])
        write_mask(frame_path(root, video.video_id, t, "masks"), video.masks[t])


def gen_synthetic_dataset(cfg: SyntheticConfig, outdir) -> List[Video]:
    videos = generate_dataset(cfg)
    for v in videos:
        save_video(v, outdir)
    return videos


def _indexed(dirpath: str, ext: str) -> List[str]:
    if not os.path.isdir(dirpath):
        return []
    return sorted(f for f in os.listdir(dirpath) if f.endswith(ext))


def load_video(root, video_id: str, need_masks: bool = True) -> Video:
    vdir = os.path.join(root, video_id)
    names = _indexed(os.path.join(vdir, "frames"), ".ppm")
    if not names:
        raise FileNotFoundError(f"no frames under {vdir}/frames")
    idx = [int(os.path.splitext(n)[0]) for n in names]
    missing = sorted(set(range(1, max(idx) + 1)) - set(idx))
    if missing:
        raise FileNotFoundError(f"video {video_id}: missing frame indices {missing}")
    frames = np.stack([read_pnm(os.path.join(vdir, "frames", n)) for n in names])
    masks = None
    if need_masks:
        masks = np.stack([
            (read_pnm(frame_path(root, video_id, t, "masks")) > 0.5).astype(np.uint8)
            for t in range(len(names))])
    return Video(video_id, frames, masks)


def list_videos(root) -> List[str]:
    return sorted(d for d in os.listdir(root) if os.path.isdir(os.path.join(root, d, "frames")))


def load_dataset(root, need_masks: bool = True) -> List[Video]:
    return [load_video(root, v, need_masks) for v in list_videos(root)]
