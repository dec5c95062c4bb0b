"""Binary PGM (P5) / PPM (P6) reading and writing, maxval 255 only."""
from __future__ import annotations

import os
from typing import Tuple

import numpy as np


class PNMError(ValueError):
    def __init__(self, msg: str, offset: int):
        super().__init__(f"{msg} (byte offset {offset})")
        self.offset = offset


def _token(buf: bytes, pos: int) -> Tuple[bytes, int]:
    n = len(buf)
    while pos < n:
        if buf[pos:pos + 1] == b"#":
            while pos < n and buf[pos] not in b"\r\n":
                pos += 1
        elif buf[pos:pos + 1].isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
        pos += 1
    if start == pos:
        raise PNMError("truncated header", start)
    return buf[start:pos], pos


def decode_pnm(buf: bytes) -> np.ndarray:
    """Decode to float32 in [0, 1]: [H, W] for P5, [3, H, W] for P6."""
    magic = buf[:2]
    if magic not in (b"P5", b"P6"):
        raise PNMError(f"bad magic {magic!r}, expected b'P5' or b'P6'", 0)
    pos = 2
    fields = []
    for what in ("width", "height", "maxval"):
        tok, new = _token(buf, pos)
        if not tok.isdigit():
            raise PNMError(f"{what} is not a decimal integer: {tok!r}", new - len(tok))
        fields.append((int(tok), new - len(tok)))
        pos = new
    (width, _), (height, _), (maxval, mv_off) = fields
    if width < 1 or height < 1:
        raise PNMError(f"non-positive size {width}x{height}", 2)
    if maxval != 255:
        raise PNMError(f"maxval {maxval} unsupported (need 255)", mv_off)
    if pos >= len(buf) or not buf[pos:pos + 1].isspace():
        raise PNMError("missing whitespace after maxval", pos)
    pos += 1
    channels = 3 if magic == b"P6" else 1
    need = width * height * channels
    payload = buf[pos:pos + need]
    if len(payload) < need:
        raise PNMError(f"truncated payload: expected {need} bytes, got {len(payload)}", pos + len(payload))
    arr = np.frombuffer(payload, dtype=np.uint8).astype(np.float32) / np.float32(255.0)
    if channels == 3:
        return arr.reshape(height, width, 3).transpose(2, 0, 1).copy()
    return arr.reshape(height, width)


def read_pnm(path) -> np.ndarray:
    with open(path, "rb") as f:
        return decode_pnm(f.read())


def quantize(image) -> np.ndarray:
    return np.clip(np.round(np.asarray(image, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def encode_pnm(image) -> bytes:
    image = np.asarray(image)
    if image.ndim == 2:
        magic, h, w = b"P5", *image.shape
        raw = quantize(image)
    elif image.ndim == 3 and image.shape[0] == 3:
        magic, h, w = b"P6", image.shape[1], image.shape[2]
        raw = quantize(image).transpose(1, 2, 0)
    else:
        raise ValueError(f"expected [H,W] or [3,H,W] image, got shape {image.shape}")
    return magic + b"\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(raw).tobytes()


def write_pnm(path, image) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as f:
        f.write(encode_pnm(image))


def write_mask(path, mask) -> None:
    """Binary mask written as {0, 255}."""
    write_pnm(path, (np.asarray(mask) > 0.5).astype(np.float32))
