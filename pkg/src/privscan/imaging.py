"""RGBA raster helpers.

A raster image is a ``(height, width, 4)`` uint8 numpy array. PNG encoding
is deterministic: no metadata chunks and a fixed compression level.
"""

from __future__ import annotations

import io

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import CorruptImageError

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"


def check_raster(image: np.ndarray) -> np.ndarray:
    if not isinstance(image, np.ndarray) or image.dtype != np.uint8 \
            or image.ndim != 3 or image.shape[2] != 4:
        raise ValueError("raster must be a (h, w, 4) uint8 array")
    if image.shape[0] < 1 or image.shape[1] < 1:
        raise ValueError("raster must be at least 1x1")
    return image


def from_pil(img: Image.Image) -> np.ndarray:
    return np.array(img.convert("RGBA"), dtype=np.uint8)


def to_pil(image: np.ndarray) -> Image.Image:
    return Image.fromarray(check_raster(image), "RGBA")


def encode_png(image: np.ndarray, compress_level: int = 6) -> bytes:
    buf = io.BytesIO()
    to_pil(image).save(buf, format="PNG", compress_level=compress_level)
    return buf.getvalue()


def decode_png(data: bytes) -> np.ndarray:
    """Full decode of PNG bytes to RGBA. Raises CorruptImageError."""
    if not data.startswith(PNG_SIGNATURE):
        raise CorruptImageError("not a PNG stream")
    try:
        with Image.open(io.BytesIO(data)) as img:
            img.load()
            return from_pil(img)
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise CorruptImageError(str(exc)) from None


def load_png(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return decode_png(fh.read())


def grayscale(image: np.ndarray) -> np.ndarray:
    """ITU-R 601 luma as float64, alpha ignored."""
    rgb = image[..., :3].astype(np.float64)
    return rgb @ np.array([0.299, 0.587, 0.114])


def solid(width: int, height: int, color=(255, 255, 255, 255)) -> np.ndarray:
    out = np.empty((height, width, 4), dtype=np.uint8)
    out[...] = color
    return out
