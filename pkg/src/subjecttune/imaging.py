"""Image conversions and PNG IO (torch CHW floats internally, numpy HWC at
the artifact boundary)."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import torch
from PIL import Image


def to_numpy_image(image: torch.Tensor) -> np.ndarray:
    """(3, H, W) tensor in [0, 1] -> float32 (H, W, 3) array, clamped."""
    array = image.detach().cpu().clamp(0.0, 1.0).permute(1, 2, 0).numpy()
    return np.ascontiguousarray(array, dtype=np.float32)


def to_tensor_image(array: np.ndarray, dtype: torch.dtype = torch.float32) -> torch.Tensor:
    """(H, W, 3) array in [0, 1] -> (3, H, W) tensor."""
    if array.ndim != 3 or array.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image array, got shape {array.shape}")
    return torch.from_numpy(np.ascontiguousarray(array)).permute(2, 0, 1).to(dtype)


def save_png(path, array: np.ndarray) -> None:
    """Write an (H, W, 3) float [0,1] or uint8 array as PNG."""
    if array.dtype != np.uint8:
        array = np.clip(np.round(array * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(array, mode="RGB").save(Path(path), format="PNG")


def load_png(path) -> np.ndarray:
    """Read a PNG into a float32 (H, W, 3) array in [0, 1]."""
    with Image.open(Path(path)) as img:
        rgb = img.convert("RGB")
        return np.asarray(rgb, dtype=np.float32) / 255.0


def make_thumbnail(array: np.ndarray, max_side: int = 256) -> np.ndarray:
    """Downscale so the longest side is <= max_side; small images pass through."""
    h, w = array.shape[:2]
    longest = max(h, w)
    if longest <= max_side:
        return array
    scale = max_side / longest
    size = (max(1, round(w * scale)), max(1, round(h * scale)))
    img = Image.fromarray(np.clip(np.round(array * 255.0), 0, 255).astype(np.uint8), mode="RGB")
    return np.asarray(img.resize(size, Image.BILINEAR), dtype=np.float32) / 255.0


def save_mask_png(path, mask: np.ndarray) -> None:
    """Single-channel PNG, 255 = subject."""
    Image.fromarray((mask.astype(np.uint8) * 255), mode="L").save(Path(path), format="PNG")


def load_mask_png(path) -> np.ndarray:
    """Nonzero pixels become mask-true."""
    with Image.open(Path(path)) as img:
        return np.asarray(img.convert("L")) > 0
