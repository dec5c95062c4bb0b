"""Binary checkpoint format.

Layout (little-endian): b"MMNC", u32 version (=1), u32 tensor count, then per
tensor: u32 name length, UTF-8 name, u32 rank, u32 dims[rank], float32 payload
in row-major order.  Optimizer state uses names prefixed "opt."; scalars such
as the step counter are stored as 1-element tensors under "meta.".
"""
from __future__ import annotations

import os
import struct
from dataclasses import dataclass, field
from typing import Dict

import numpy as np

MAGIC = b"MMNC"
VERSION = 1
FINGERPRINT_PREFIX = "meta.fingerprint."


class CheckpointError(ValueError):
    def __init__(self, msg: str, offset: int):
        super().__init__(f"{msg} (byte offset {offset})")
        self.offset = offset


@dataclass
class Checkpoint:
    params: Dict[str, np.ndarray]
    fingerprint: str = ""
    step: int = 0
    epoch: int = 0
    stage: int = 1
    opt_m: Dict[str, np.ndarray] = field(default_factory=dict)
    opt_v: Dict[str, np.ndarray] = field(default_factory=dict)
    lr_scale: Dict[str, float] = field(default_factory=dict)

    def tensors(self) -> Dict[str, np.ndarray]:
        out = dict(self.params)
        one = lambda x: np.array([x], dtype=np.float32)  # noqa: E731
        out["meta.step"] = one(self.step)
        out["meta.epoch"] = one(self.epoch)
        out["meta.stage"] = one(self.stage)
        out[FINGERPRINT_PREFIX + self.fingerprint] = one(0)
        for k, v in self.opt_m.items():
            out[f"opt.m.{k}"] = v
        for k, v in self.opt_v.items():
            out[f"opt.v.{k}"] = v
        for k, v in self.lr_scale.items():
            out[f"opt.lr_scale.{k}"] = one(v)
        return out

    @classmethod
    def from_tensors(cls, tensors: Dict[str, np.ndarray]) -> "Checkpoint":
        ck = cls(params={})
        for name, arr in tensors.items():
            if name.startswith(FINGERPRINT_PREFIX):
                ck.fingerprint = name[len(FINGERPRINT_PREFIX):]
            elif name == "meta.step":
                ck.step = int(arr[0])
            elif name == "meta.epoch":
                ck.epoch = int(arr[0])
            elif name == "meta.stage":
                ck.stage = int(arr[0])
            elif name.startswith("opt.m."):
                ck.opt_m[name[6:]] = arr
            elif name.startswith("opt.v."):
                ck.opt_v[name[6:]] = arr
            elif name.startswith("opt.lr_scale."):
                ck.lr_scale[name[13:]] = float(arr[0])
            else:
                ck.params[name] = arr
        return ck


def encode_tensors(tensors: Dict[str, np.ndarray]) -> bytes:
    parts = [MAGIC, struct.pack("<II", VERSION, len(tensors))]
    for name, arr in tensors.items():
        raw = name.encode("utf-8")
        arr = np.ascontiguousarray(arr, dtype="<f4")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
        parts.append(struct.pack("<I", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def decode_tensors(buf: bytes) -> Dict[str, np.ndarray]:
    pos = 0

    def take(n: int, what: str) -> bytes:
        nonlocal pos
        if pos + n > len(buf):
            raise CheckpointError(f"truncated while reading {what}", pos)
        chunk = buf[pos:pos + n]
        pos += n
        return chunk

    if take(4, "magic") != MAGIC:
        raise CheckpointError("bad magic", 0)
    version, count = struct.unpack("<II", take(8, "header"))
    if version != VERSION:
        raise CheckpointError(f"unsupported version {version}", 4)
    out: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<I", take(4, "name length"))
        name_at = pos
        try:
            name = take(nlen, "name").decode("utf-8")
        except UnicodeDecodeError:
            raise CheckpointError("tensor name is not valid UTF-8", name_at) from None
        (rank,) = struct.unpack("<I", take(4, f"rank of {name}"))
        dims = struct.unpack(f"<{rank}I", take(4 * rank, f"dims of {name}"))
        n = int(np.prod(dims)) if rank else 1
        data = np.frombuffer(take(4 * n, f"payload of {name}"), dtype="<f4")
        out[name] = data.reshape(dims).astype(np.float32)
    if pos != len(buf):
        raise CheckpointError(f"{len(buf) - pos} trailing bytes", pos)
    return out


def save_checkpoint(path, ck: Checkpoint) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(encode_tensors(ck.tensors()))
    os.replace(tmp, path)


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as f:
        return Checkpoint.from_tensors(decode_tensors(f.read()))
