"""PNG/JPEG helpers. Images stay in sRGB as-is; colors are float RGB in [0,1]."""

from __future__ import annotations

import numpy as np
from PIL import Image


def load_color(path) -> np.ndarray:
    img = Image.open(path).convert("RGB")
    return np.asarray(img, dtype=np.float64) / 255.0


def save_color(path, color: np.ndarray) -> None:
    arr = np.clip(np.round(color * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path)


def save_mask(path, mask: np.ndarray) -> None:
    Image.fromarray(np.where(mask, 255, 0).astype(np.uint8), mode="L").save(path)


def load_mask(path) -> np.ndarray:
    img = Image.open(path).convert("L")
    return np.asarray(img) >= 128
