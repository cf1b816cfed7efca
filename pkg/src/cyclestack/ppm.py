"""Binary PPM (P6, maxval 255) reading and writing.

Pixel mapping: byte v maps to v/127.5 - 1 on read; writing inverts with
round-half-away-from-zero and clamps to [0, 255]. Reading then writing a valid
file reproduces it byte for byte.
"""

from __future__ import annotations

import numpy as np

from .engine import Tensor
from .errors import DataError

_f32 = np.float32


def _read_header_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    # skip whitespace and '#' comments between tokens
    n = len(buf)
    while pos < n:
        c = buf[pos : pos + 1]
        if c == b"#":
            while pos < n and buf[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not buf[pos : pos + 1].isspace():
        pos += 1
    if start == pos:
        raise DataError("ppm: truncated header")
    return buf[start:pos], pos


def decode_ppm(buf: bytes) -> np.ndarray:
    """P6 bytes -> uint8 array of shape (H, W, 3)."""
    if len(buf) < 2 or buf[:2] != b"P6":
        raise DataError("ppm: bad magic, expected P6")
    pos = 2
    fields = []
    for _ in range(3):
        tok, pos = _read_header_token(buf, pos)
        try:
            fields.append(int(tok))
        except ValueError:
            raise DataError(f"ppm: non-numeric header field {tok!r}") from None
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise DataError(f"ppm: bad dimensions {width}x{height}")
    if maxval != 255:
        raise DataError(f"ppm: unsupported maxval {maxval}, expected 255")
    pos += 1  # single whitespace byte after maxval
    need = width * height * 3
    raster = buf[pos : pos + need]
    if len(raster) != need:
        raise DataError(
            f"ppm: short raster, expected {need} bytes, got {len(raster)}"
        )
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3)


def encode_ppm(pixels: np.ndarray) -> bytes:
    """uint8 (H, W, 3) -> P6 bytes."""
    if pixels.ndim != 3 or pixels.shape[2] != 3 or pixels.dtype != np.uint8:
        raise DataError(f"ppm: need uint8 (H, W, 3), got {pixels.dtype} {pixels.shape}")
    h, w, _ = pixels.shape
    return b"P6\n%d %d\n255\n" % (w, h) + pixels.tobytes()


def bytes_to_unit(pixels: np.ndarray) -> np.ndarray:
    """uint8 -> float32 in [-1, 1]."""
    return (pixels.astype(_f32) / _f32(127.5)) - _f32(1.0)


def unit_to_bytes(values: np.ndarray) -> np.ndarray:
    """float in [-1, 1] -> uint8, round-half-away-from-zero, clamped."""
    v = (values.astype(np.float64) + 1.0) * 127.5
    return np.clip(np.floor(v + 0.5), 0.0, 255.0).astype(np.uint8)


def tensor_from_image(pixels: np.ndarray) -> Tensor:
    """uint8 (H, W, 3) -> Tensor (1, 3, H, W) in [-1, 1]."""
    chw = bytes_to_unit(pixels).transpose(2, 0, 1)[None]
    return Tensor(np.ascontiguousarray(chw))


def image_from_tensor(t: Tensor) -> np.ndarray:
    """Tensor (1, 3, H, W) -> uint8 (H, W, 3)."""
    if t.shape[0] != 1 or t.shape[1] != 3:
        raise DataError(f"image tensors are (1, 3, H, W), got {t.shape}")
    return unit_to_bytes(t.data[0].transpose(1, 2, 0))


def read_image(path) -> Tensor:
    with open(path, "rb") as f:
        return tensor_from_image(decode_ppm(f.read()))


def write_image(t: Tensor, path) -> None:
    with open(path, "wb") as f:
        f.write(encode_ppm(image_from_tensor(t)))


def write_gray_image(values01: np.ndarray, path) -> None:
    """Grayscale map in [0, 1] (H, W) -> P6 with equal channels."""
    if values01.ndim != 2:
        raise DataError(f"gray maps are (H, W), got {values01.shape}")
    b = np.clip(np.floor(values01.astype(np.float64) * 255.0 + 0.5), 0.0, 255.0)
    gray = b.astype(np.uint8)
    with open(path, "wb") as f:
        f.write(encode_ppm(np.repeat(gray[:, :, None], 3, axis=2)))
