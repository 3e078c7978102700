"""Raw ``.tensor`` files and PNG import/export.

Tensor layout: ``b"SCRL"``, u8 version (1), u32 LE height, width, channels,
then height*width*channels f32 LE values, row-major with channels innermost.

Pixel grids are float arrays of shape (H, W, C) with values in [-1, 1], the
same range as the toy latent.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image

MAGIC = b"SCRL"
VERSION = 1
_HEADER = struct.Struct("<4sBIII")


class TensorFormatError(ValueError):
    pass


def encode_tensor(array: np.ndarray) -> bytes:
    array = np.asarray(array)
    if array.ndim != 3:
        raise TensorFormatError(f"expected an (H, W, C) array, got shape {array.shape}")
    h, w, c = array.shape
    return _HEADER.pack(MAGIC, VERSION, h, w, c) + np.ascontiguousarray(array, dtype="<f4").tobytes()


def decode_tensor(blob: bytes) -> np.ndarray:
    if len(blob) < _HEADER.size:
        raise TensorFormatError("truncated tensor header")
    magic, version, h, w, c = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise TensorFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise TensorFormatError(f"unsupported tensor version {version}")
    expected = h * w * c * 4
    payload = blob[_HEADER.size :]
    if len(payload) != expected:
        raise TensorFormatError(f"payload has {len(payload)} bytes, header implies {expected}")
    return np.frombuffer(payload, dtype="<f4").reshape(h, w, c).astype(np.float32)


def write_tensor(path: str | Path, array: np.ndarray) -> None:
    Path(path).write_bytes(encode_tensor(array))


def read_tensor(path: str | Path) -> np.ndarray:
    return decode_tensor(Path(path).read_bytes())


def to_uint8(array: np.ndarray) -> np.ndarray:
    """Fixed [-1, 1] -> [0, 255] mapping, clamped."""
    clipped = np.clip(np.asarray(array, dtype=np.float64), -1.0, 1.0)
    return np.floor((clipped + 1.0) * 127.5 + 0.5).astype(np.uint8)


def from_uint8(array: np.ndarray) -> np.ndarray:
    return np.asarray(array, dtype=np.float64) / 127.5 - 1.0


def upscale_nearest(array: np.ndarray, factor: int) -> np.ndarray:
    if factor == 1:
        return np.asarray(array)
    return np.repeat(np.repeat(array, factor, axis=0), factor, axis=1)


def canvas_to_image(latent: np.ndarray, scale: int) -> np.ndarray:
    """Upscale a 3-channel latent to a pixel grid in [-1, 1]."""
    latent = np.asarray(latent, dtype=np.float64)
    if latent.shape[2] != 3:
        latent = _three_channels(latent)
    return upscale_nearest(np.clip(latent, -1.0, 1.0), scale)


def _three_channels(latent: np.ndarray) -> np.ndarray:
    c = latent.shape[2]
    if c == 1:
        return np.repeat(latent, 3, axis=2)
    if c > 3:
        return latent[:, :, :3]
    return np.concatenate([latent, np.zeros(latent.shape[:2] + (3 - c,))], axis=2)


def save_png(path: str | Path, image: np.ndarray) -> None:
    Image.fromarray(to_uint8(image), mode="RGB").save(path, format="PNG")


def load_image(path: str | Path) -> np.ndarray:
    with Image.open(path) as im:
        return from_uint8(np.asarray(im.convert("RGB")))
