"""Adjacent space-time memory: key/value embedding and the memory read."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, ops
from .params import ParamBuilder, Params

ROLES = ("query", "memory")


@dataclass
class KeyValuePair:
    key: Tensor    # [B, Ck, h, w]
    value: Tensor  # [B, 2Ck, h, w]


@dataclass
class MemoryBank:
    """Keys [B, N, Ck, h, w] and values [B, N, 2Ck, h, w] of the memory frames."""

    keys: Tensor
    values: Tensor

    @property
    def n(self) -> int:
        return self.keys.shape[1]


def init_astm(pb: ParamBuilder, c5: int, ck: int) -> None:
    for role in ROLES:
        pb.conv(f"astm.{role}.key", ck, c5, 3)
        pb.conv(f"astm.{role}.value", 2 * ck, c5, 3)


def embed(res5: Tensor, role: str, params: Params) -> KeyValuePair:
    if role not in ROLES:
        raise ValueError(f"role must be one of {ROLES}, got {role!r}")
    wk = params[f"astm.{role}.key.weight"]
    if res5.shape[1] != wk.shape[1]:
        raise ValueError(f"embed: feature has {res5.shape[1]} channels, embedding expects {wk.shape[1]}")
    key = ops.conv2d(res5, wk, params[f"astm.{role}.key.bias"], padding=1)
    value = ops.conv2d(res5, params[f"astm.{role}.value.weight"],
                       params[f"astm.{role}.value.bias"], padding=1)
    return KeyValuePair(key, value)


def make_bank(memory: KeyValuePair, n: int) -> MemoryBank:
    """Regroup memory embeddings of shape [B*N, ...] (frame-major per item) into a bank."""
    bn, ck, h, w = memory.key.shape
    if n < 1:
        raise ValueError("memory bank needs at least one frame")
    if bn % n:
        raise ValueError(f"{bn} memory embeddings cannot be split into groups of {n}")
    b = bn // n
    keys = ops.reshape(memory.key, (b, n, ck, h, w))
    values = ops.reshape(memory.value, (b, n, memory.value.shape[1], h, w))
    return MemoryBank(keys, values)


def attention_weights(q: KeyValuePair, m: MemoryBank, scale_logits: bool = False) -> Tensor:
    """Softmax-normalised similarity [B, h*w, N*h*w] of query to memory locations."""
    if m.n == 0:
        raise ValueError("memory bank is empty")
    b, ck, h, w = q.key.shape
    _, n, mck, mh, mw = m.keys.shape
    if mck != ck:
        raise ValueError(f"key channels differ: query {ck}, memory {mck}")
    qk = ops.transpose(ops.reshape(q.key, (b, ck, h * w)), (0, 2, 1))          # [B, hw, Ck]
    mk = ops.reshape(ops.transpose(m.keys, (0, 2, 1, 3, 4)), (b, ck, n * mh * mw))  # [B, Ck, Nhw]
    logits = ops.matmul(qk, mk)
    if scale_logits:
        logits = ops.scale(logits, 1.0 / np.sqrt(ck))
    return ops.softmax(logits, axis=-1)


def memory_read(q: KeyValuePair, m: MemoryBank, scale_logits: bool = False) -> Tensor:
    """Retrieve memory values for every query location and append the query value.

    Returns the temporal feature [B, 4Ck, h, w] = [retrieved, V_Q].
    """
    attn = attention_weights(q, m, scale_logits)
    b, ck, h, w = q.key.shape
    _, n, cv, mh, mw = m.values.shape
    mv = ops.reshape(ops.transpose(m.values, (0, 1, 3, 4, 2)), (b, n * mh * mw, cv))  # [B, Nhw, 2Ck]
    retrieved = ops.matmul(attn, mv)                                              # [B, hw, 2Ck]
    retrieved = ops.reshape(ops.transpose(retrieved, (0, 2, 1)), (b, cv, h, w))
    return ops.concat([retrieved, q.value], axis=1)
