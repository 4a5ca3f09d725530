"""Image export: 8-bit PNG and float32 .npy arrays (H x W x 3, little-endian)."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image


def to_uint8(image: np.ndarray) -> np.ndarray:
    return (np.clip(image, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def save_png(image: np.ndarray, path) -> None:
    Image.fromarray(to_uint8(image), mode="RGB").save(Path(path), format="PNG")


def save_npy(image: np.ndarray, path) -> None:
    np.save(Path(path), np.ascontiguousarray(image, dtype="<f4"))


def encode_png_bytes(image: np.ndarray) -> bytes:
    import io

    buf = io.BytesIO()
    Image.fromarray(to_uint8(image), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()
