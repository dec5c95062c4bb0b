"""Two-branch decoder with the feature fusion strategy (FFS).

Both branches fuse a higher-level feature ``h`` into a lower-level feature
``l`` at res4, res3 and res2 resolution.  Stage 1 takes ``h`` from res5 (spatial)
and from the memory read (temporal); later stages take the previous stage
output ``D_{i-1}`` in both branches.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

from .autodiff import Tensor, ops
from .config import ModelConfig
from .params import ParamBuilder, Params

STAGE_LEVELS = (4, 3, 2)  # pyramid level (1-based) fused at stage 1, 2, 3


@dataclass
class DecoderState:
    d0: Optional[Tensor] = None
    f_s: List[Tensor] = field(default_factory=list)
    f_t: List[Tensor] = field(default_factory=list)
    d: List[Tensor] = field(default_factory=list)
    stacked: Optional[Tensor] = None  # concat(D1, D2, D3) at stage-3 resolution


def init_decoder(pb: ParamBuilder, cfg: ModelConfig) -> None:
    c = cfg.decoder_width
    ch = cfg.backbone.channels
    pb.conv("decoder.reduce.s5", c, ch[4], 1)
    for lv in STAGE_LEVELS:
        pb.conv(f"decoder.reduce.s{lv}", c, ch[lv - 1], 1)
    if cfg.use_astm:
        pb.conv("decoder.reduce.t5", c, 4 * cfg.ck, 1)
        for lv in STAGE_LEVELS:
            pb.conv(f"decoder.reduce.t{lv}", c, 2 * ch[lv - 1], 1)
    branches = ("s", "t") if cfg.use_astm else ("s",)
    for i in range(1, 4):
        for br in branches:
            if cfg.use_ffs:
                init_ffs(pb, f"decoder.ffs.{br}{i}", c)
            else:
                pb.conv(f"decoder.fuse.{br}{i}", c, 2 * c, 1)
        pb.conv(f"decoder.stage{i}", c, 3 * c, 3)
    pb.conv("decoder.predict", 1, 3 * c, 3, gain=GATE_GAIN)


GATE_GAIN = 0.1


def init_ffs(pb: ParamBuilder, prefix: str, c: int) -> None:
    # the attention map and channel weights multiply features; starting them
    # near 1 and 0 keeps activation scale from compounding across stages
    pb.conv(f"{prefix}.up", c, c, 3)
    pb.conv(f"{prefix}.att", 1, c, 3, gain=GATE_GAIN, bias_value=1.0)
    pb.conv(f"{prefix}.content", c, c, 3)
    pb.linear(f"{prefix}.fc", c, c, gain=GATE_GAIN)


def _conv(x: Tensor, params: Params, name: str, padding: Optional[int] = None) -> Tensor:
    w = params[f"{name}.weight"]
    pad = w.shape[-1] // 2 if padding is None else padding
    return ops.conv2d(x, w, params.get(f"{name}.bias"), padding=pad)


def reduce_channels(feature: Tensor, params: Params, name: str) -> Tensor:
    """1x1 projection to the decoder width."""
    return _conv(feature, params, f"decoder.reduce.{name}")


def concat_memory_lowlevel(f_prev: Tensor, f_next: Tensor) -> Tensor:
    if f_prev.shape != f_next.shape:
        raise ValueError(f"memory features differ in shape: {f_prev.shape} vs {f_next.shape}")
    return ops.concat([f_prev, f_next], axis=1)


def _check_double(h: Tensor, l: Tensor) -> None:
    if l.shape[2] != 2 * h.shape[2] or l.shape[3] != 2 * h.shape[3]:
        raise ValueError(f"low-level feature {l.shape[2:]} is not exactly 2x of {h.shape[2:]}")


def ffs_spatial(h: Tensor, l: Tensor, params: Params, prefix: str) -> Tensor:
    """S = conv_{c->1}(conv(up2(h))) * conv_{c->c}(l), attention broadcast over channels."""
    _check_double(h, l)
    h_up = _conv(ops.upsample(h, 2), params, f"{prefix}.up")
    attention = _conv(h_up, params, f"{prefix}.att")
    content = _conv(l, params, f"{prefix}.content")
    return ops.mul(attention, content)


def ffs_channel(s: Tensor, params: Params, prefix: str, gate: bool = False) -> Tensor:
    """F = S + cvec * S with cvec = fc(GAP(S)), one weight per channel."""
    cvec = _conv(ops.global_avg_pool(s), params, f"{prefix}.fc", padding=0)
    if gate:
        cvec = ops.sigmoid(cvec)
    return ops.add(s, ops.mul(cvec, s))


def ffs(h: Tensor, l: Tensor, params: Params, prefix: str, gate: bool = False) -> Tensor:
    return ffs_channel(ffs_spatial(h, l, params, prefix), params, prefix, gate)


def concat_fuse(h: Tensor, l: Tensor, params: Params, name: str) -> Tensor:
    """Baseline fusion: upsample, concatenate, 1x1 convolution."""
    _check_double(h, l)
    return _conv(ops.concat([ops.upsample(h, 2), l], axis=1), params, name, padding=0)


def decode_stage(f_s: Tensor, f_t: Tensor, d_prev: Tensor, params: Params, i: int) -> Tensor:
    d_up = ops.upsample(d_prev, 2)
    if d_up.shape[2:] != f_s.shape[2:] or f_t.shape[2:] != f_s.shape[2:]:
        raise ValueError(f"stage {i}: resolutions differ {f_s.shape[2:]}, {f_t.shape[2:]}, {d_up.shape[2:]}")
    return ops.relu(_conv(ops.concat([f_s, f_t, d_up], axis=1), params, f"decoder.stage{i}"))


def stack_stages(d1: Tensor, d2: Tensor, d3: Tensor) -> Tensor:
    h, w = d3.shape[2:]
    return ops.concat([ops.bilinear_resize(d1, h, w), ops.bilinear_resize(d2, h, w), d3], axis=1)


def predict_saliency(stacked: Tensor, params: Params, out_size: Tuple[int, int]) -> Tensor:
    # resize logits, not probabilities: a sigmoid after upsampling can still
    # place sharp boundaries between low-resolution samples
    logits = ops.bilinear_resize(_conv(stacked, params, "decoder.predict"), *out_size)
    return ops.sigmoid(logits)


def decode(query: List[Tensor], e_t: Optional[Tensor], memory_low: Optional[List[Tensor]],
           params: Params, cfg: ModelConfig, out_size: Tuple[int, int]) -> Tuple[Tensor, DecoderState]:
    """Run both branches and the prediction head.

    ``query`` is the query-frame pyramid; ``memory_low`` maps pyramid index to
    the (prev, next)-concatenated memory feature.  With ASTM disabled the
    temporal branch reuses the spatial branch features.
    """
    state = DecoderState()
    d_prev = reduce_channels(query[4], params, "s5")
    state.d0 = d_prev
    h_s = d_prev
    h_t = reduce_channels(e_t, params, "t5") if cfg.use_astm else None
    for i, lv in enumerate(STAGE_LEVELS, start=1):
        l_s = reduce_channels(query[lv - 1], params, f"s{lv}")
        f_s = _fuse(h_s, l_s, params, cfg, f"s{i}")
        if cfg.use_astm:
            l_t = reduce_channels(memory_low[lv - 1], params, f"t{lv}")
            f_t = _fuse(h_t, l_t, params, cfg, f"t{i}")
        else:
            f_t = f_s
        d_prev = decode_stage(f_s, f_t, d_prev, params, i)
        state.f_s.append(f_s)
        state.f_t.append(f_t)
        state.d.append(d_prev)
        h_s = h_t = d_prev
    state.stacked = stack_stages(*state.d)
    return predict_saliency(state.stacked, params, out_size), state


def _fuse(h: Tensor, l: Tensor, params: Params, cfg: ModelConfig, tag: str) -> Tensor:
    if cfg.use_ffs:
        return ffs(h, l, params, f"decoder.ffs.{tag}", cfg.channel_gate)
    return concat_fuse(h, l, params, f"decoder.fuse.{tag}")
