"""Image loading, saving, and synthetic test patterns.

``.npy`` files round-trip float intensities exactly; anything else goes
through Pillow and is quantized to 8 bits on save.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import DataError
from .features import ImageBuffer


def load_image(path: str | os.PathLike) -> ImageBuffer:
    path = os.fspath(path)
    if not os.path.exists(path):
        raise DataError(f"image not found: {path}")
    if path.endswith(".npy"):
        arr = np.load(path)
        if arr.ndim == 2:
            arr = np.stack([arr] * 3, axis=-1)
        return ImageBuffer(pixels=np.asarray(arr, dtype=np.float64))
    from PIL import Image

    with Image.open(path) as im:
        rgb = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    return ImageBuffer(pixels=rgb)


def save_image(image: ImageBuffer, path: str | os.PathLike) -> None:
    path = os.fspath(path)
    if path.endswith(".npy"):
        np.save(path, image.pixels)
        return
    from PIL import Image

    quantized = np.clip(np.rint(image.pixels * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(quantized, mode="RGB").save(path)


def solid(value: float, height: int = 16, width: int = 16) -> ImageBuffer:
    return ImageBuffer(pixels=np.full((height, width, 3), float(value)))


def checkerboard(height: int = 16, width: int = 16, cell: int = 2,
                 low: float = 0.0, high: float = 1.0) -> ImageBuffer:
    """Alternating-cell pattern; the package's canonical test fixture."""
    ii, jj = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    mask = ((ii // cell + jj // cell) % 2).astype(np.float64)
    plane = low + (high - low) * mask
    return ImageBuffer(pixels=np.stack([plane] * 3, axis=-1))


def inverted(image: ImageBuffer) -> ImageBuffer:
    return ImageBuffer(pixels=1.0 - image.pixels)


def random_image(rng: np.random.Generator, height: int = 16, width: int = 16) -> ImageBuffer:
    return ImageBuffer(pixels=rng.random((height, width, 3)))
