"""Full network: shared encoder, memory read, two-branch decoder, heads."""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import astm, backbone, decoder, motion
from .autodiff import Tensor, no_grad, ops
from .config import ModelConfig
from .data.clips import VideoClip, memory_indices
from .params import ParamBuilder, Params


def init_params(cfg: ModelConfig, seed: int = 0, dtype=np.float32) -> Params:
    cfg.validate()
    pb = ParamBuilder(seed, dtype)
    backbone.init_backbone(pb, cfg.backbone)
    if cfg.use_astm:
        astm.init_astm(pb, cfg.backbone.channels[4], cfg.ck)
    decoder.init_decoder(pb, cfg)
    motion.init_motion(pb, cfg.decoder_width)
    return pb.params


@dataclass
class Output:
    saliency: Tensor                  # [Q, 1, H, W]
    stacked: Tensor                   # [Q, 3c, H/4, W/4]
    state: decoder.DecoderState
    motion: Optional[Tensor] = None   # [P, 1, H, W]
    pairs: Sequence[Tuple[int, int]] = ()


def forward(frames: Tensor, queries: Sequence[int], memories: Sequence[Sequence[int]],
            params: Params, cfg: ModelConfig) -> Output:
    """Decode the frames at ``queries``; ``memories[i]`` lists the memory frames of query i.

    All indices point into ``frames``.  Each frame is encoded once and its
    features are shared between query and memory roles.
    """
    h, w = frames.shape[2:]
    pyr = backbone.encode(frames, params, cfg.backbone)
    q_idx = list(queries)
    all_q = q_idx == list(range(frames.shape[0]))
    query_pyr = pyr if all_q else [ops.index_select(f, q_idx) for f in pyr]

    e_t = mem_low = None
    if cfg.use_astm:
        mem = np.asarray(memories, dtype=np.int64)
        n = mem.shape[1]
        k = n // 2
        q_kv = astm.embed(query_pyr[4], "query", params)
        m_all = astm.embed(pyr[4], "memory", params)
        flat = mem.reshape(-1)
        bank = astm.make_bank(astm.KeyValuePair(ops.index_select(m_all.key, flat),
                                                ops.index_select(m_all.value, flat)), n)
        e_t = astm.memory_read(q_kv, bank, cfg.scale_logits)
        prev, nxt = mem[:, k - 1], mem[:, k]
        mem_low = [None] * 5
        for lv in decoder.STAGE_LEVELS:
            f = pyr[lv - 1]
            mem_low[lv - 1] = decoder.concat_memory_lowlevel(ops.index_select(f, prev),
                                                             ops.index_select(f, nxt))
    sal, state = decoder.decode(query_pyr, e_t, mem_low, params, cfg, (h, w))
    return Output(sal, state.stacked, state)


def clip_memories(n_clips: int, length: int, n_memory: int) -> List[List[int]]:
    return [[b * length + m for m in memory_indices(t, length, n_memory)]
            for b in range(n_clips) for t in range(length)]


def clip_pairs(n_clips: int, length: int) -> List[Tuple[int, int]]:
    return [(b * length + t, b * length + t + 1) for b in range(n_clips) for t in range(length - 1)]


def forward_clips(frames: np.ndarray, length: int, params: Params, cfg: ModelConfig,
                  with_motion: bool = True) -> Output:
    """Forward ``B`` clips of ``length`` frames stacked clip-major as [B*T, 3, H, W]."""
    total = frames.shape[0]
    if total % length:
        raise ValueError(f"{total} frames do not form clips of length {length}")
    b = total // length
    x = Tensor(frames, dtype=next(iter(params.values())).dtype)
    out = forward(x, range(total), clip_memories(b, length, cfg.memory_frames), params, cfg)
    if with_motion and length >= 2:
        pairs = clip_pairs(b, length)
        d_t = ops.index_select(out.stacked, [p[0] for p in pairs])
        d_n = ops.index_select(out.stacked, [p[1] for p in pairs])
        out.motion = motion.predict_motion(d_t, d_n, params, frames.shape[2:])
        out.pairs = pairs
    return out


def forward_frame(clip: VideoClip, t: int, params: Params, cfg: ModelConfig) -> Tuple[Tensor, Tensor]:
    """Saliency map [1,1,H,W] and stacked decoder feature of frame ``t`` of ``clip``."""
    if not 0 <= t < len(clip):
        raise ValueError(f"frame index {t} out of range for a {len(clip)}-frame clip")
    mem = memory_indices(t, len(clip), cfg.memory_frames)
    needed = sorted(set([t] + mem))
    pos = {f: i for i, f in enumerate(needed)}
    x = Tensor(clip.frames[needed], dtype=next(iter(params.values())).dtype)
    out = forward(x, [pos[t]], [[pos[m] for m in mem]], params, cfg)
    return out.saliency, out.stacked


def predict_video(frames: np.ndarray, params: Params, cfg: ModelConfig, batch: int = 1,
                  emit_motion: bool = False):
    """Saliency maps [T, H, W] for a whole video, ``batch`` query frames at a time.

    Memory frames come from the whole video via the neighbour rule.  With
    ``emit_motion`` also returns motion maps [T-1, H, W] for pairs (t, t+1).
    """
    if batch < 1:
        raise ValueError("batch must be >= 1")
    n = frames.shape[0]
    dtype = next(iter(params.values())).dtype
    sal = np.empty((n,) + frames.shape[2:], dtype=np.float32)
    stacked = [None] * n
    with no_grad():
        for s in range(0, n, batch):
            qs = list(range(s, min(s + batch, n)))
            mems = [memory_indices(t, n, cfg.memory_frames) for t in qs]
            needed = sorted(set(qs).union(*mems))
            pos = {f: i for i, f in enumerate(needed)}
            out = forward(Tensor(frames[needed], dtype=dtype), [pos[t] for t in qs],
                          [[pos[m] for m in ms] for ms in mems], params, cfg)
            sal[qs] = out.saliency.data[:, 0]
            if emit_motion:
                for i, t in enumerate(qs):
                    stacked[t] = out.stacked.data[i:i + 1]
        motions = None
        if emit_motion and n >= 2:
            motions = np.empty((n - 1,) + frames.shape[2:], dtype=np.float32)
            for s in range(0, n - 1, batch):
                ts = list(range(s, min(s + batch, n - 1)))
                d_t = Tensor(np.concatenate([stacked[t] for t in ts]), dtype=dtype)
                d_n = Tensor(np.concatenate([stacked[t + 1] for t in ts]), dtype=dtype)
                motions[ts] = motion.predict_motion(d_t, d_n, params, frames.shape[2:]).data[:, 0]
    return (sal, motions) if emit_motion else sal
