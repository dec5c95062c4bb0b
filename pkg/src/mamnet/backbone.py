"""Five-level convolutional encoder (conv1, res2..res5 analogues)."""
from __future__ import annotations

from typing import List

from .autodiff import Tensor, ops
from .config import BackboneConfig
from .params import ParamBuilder, Params

LEVEL_NAMES = ("conv1", "res2", "res3", "res4", "res5")


def init_backbone(pb: ParamBuilder, cfg: BackboneConfig) -> None:
    cin = 3
    for level, cout in enumerate(cfg.channels, start=1):
        pb.conv(f"backbone.l{level}.down", cout, cin, 3)
        for blk in range(1, cfg.blocks_per_level):
            pb.conv(f"backbone.l{level}.block{blk}", cout, cout, 3)
        cin = cout


def encode(frames: Tensor, params: Params, cfg: BackboneConfig) -> List[Tensor]:
    """Return the feature pyramid ``[level1, ..., level5]`` for ``frames``.

    Level k has stride 2**k.  The same weights encode query and memory frames.
    """
    if frames.ndim != 4 or frames.shape[1] != 3:
        raise ValueError(f"frames must be [B,3,H,W], got {frames.shape}")
    h, w = frames.shape[2:]
    if h % 32 or w % 32:
        raise ValueError(f"frame size {(h, w)} is not divisible by 32")
    x = ops.sub(frames, 0.5)
    pyramid = []
    for level in range(1, len(cfg.channels) + 1):
        p = f"backbone.l{level}"
        x = ops.relu(ops.conv2d(x, params[f"{p}.down.weight"], params[f"{p}.down.bias"],
                                stride=2, padding=1))
        for blk in range(1, cfg.blocks_per_level):
            y = ops.conv2d(x, params[f"{p}.block{blk}.weight"], params[f"{p}.block{blk}.bias"],
                           padding=1)
            x = ops.add(x, ops.relu(y))
        pyramid.append(x)
    return pyramid
