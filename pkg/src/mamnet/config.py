"""Configuration dataclasses."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Tuple


@dataclass
class BackboneConfig:
    input_size: Tuple[int, int] = (64, 64)
    channels: Tuple[int, ...] = (16, 24, 32, 48, 64)
    blocks_per_level: int = 2

    def validate(self) -> None:
        h, w = self.input_size
        if h % 32 or w % 32:
            raise ValueError(f"input size {self.input_size} must be divisible by 32")
        if len(self.channels) != 5 or any(c < 1 for c in self.channels):
            raise ValueError(f"need 5 positive channel counts, got {self.channels}")
        if any(b < a for a, b in zip(self.channels, self.channels[1:])):
            raise ValueError(f"channels must be non-decreasing, got {self.channels}")
        if self.blocks_per_level < 1:
            raise ValueError("blocks_per_level must be >= 1")


@dataclass
class ModelConfig:
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    decoder_width: int = 32
    key_channels: Optional[int] = None
    memory_frames: int = 2
    use_ffs: bool = True
    use_astm: bool = True
    use_motion: bool = True
    scale_logits: bool = False
    channel_gate: bool = False

    def __post_init__(self):
        if isinstance(self.backbone, dict):
            bb = dict(self.backbone)
            bb["input_size"] = tuple(bb["input_size"])
            bb["channels"] = tuple(bb["channels"])
            self.backbone = BackboneConfig(**bb)

    @property
    def ck(self) -> int:
        return self.key_channels or math.ceil(self.backbone.channels[4] / 4)

    def validate(self) -> None:
        self.backbone.validate()
        if self.decoder_width < 8:
            raise ValueError(f"decoder width must be >= 8, got {self.decoder_width}")
        if self.memory_frames not in (2, 4):
            raise ValueError(f"memory_frames must be 2 or 4, got {self.memory_frames}")

    def fingerprint(self) -> str:
        """Hash of everything that determines the parameter set and forward math.

        ``use_motion`` is excluded: it only toggles a loss term.
        """
        d = asdict(self)
        d.pop("use_motion")
        d["key_channels"] = self.ck
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]
