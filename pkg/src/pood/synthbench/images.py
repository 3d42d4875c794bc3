"""Synthetic image container and the clean-image renderer."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_SIZE = 64
BACKGROUND = (0.2, 0.05)  # mean, std of background intensity
FOREGROUND = (0.8, 0.05)
AXIS_RANGE = (6.0, 14.0)  # ellipse semi-axes, pixels


@dataclass(frozen=True)
class ImageMeta:
    seed: int
    corruption: str = "none"
    severity: int = 0


@dataclass(frozen=True, eq=False)
class SynthImage:
    pixels: np.ndarray  # (H, W) float64 in [0, 1]
    mask: np.ndarray  # (H, W) bool
    meta: ImageMeta

    def same_as(self, other: "SynthImage") -> bool:
        """Bit-exact equality of pixels, mask and metadata."""
        return (
            self.meta == other.meta
            and self.pixels.dtype == other.pixels.dtype
            and np.array_equal(self.pixels, other.pixels)
            and np.array_equal(self.mask, other.mask)
        )


def ellipse_mask(size: int, center: tuple[float, float], axes: tuple[float, float], angle: float) -> np.ndarray:
    rows, cols = np.mgrid[0:size, 0:size].astype(np.float64)
    dy = rows - center[0]
    dx = cols - center[1]
    c, s = np.cos(angle), np.sin(angle)
    u = (dx * c + dy * s) / axes[0]
    v = (-dx * s + dy * c) / axes[1]
    return u * u + v * v <= 1.0


def render_image(seed: int, size: int = DEFAULT_SIZE) -> SynthImage:
    """Render one clean image: noisy background plus one filled ellipse."""
    if size < 2 * (AXIS_RANGE[1] + 2):
        raise ValueError(f"image size must be at least {int(2 * (AXIS_RANGE[1] + 2))}, got {size}")
    rng = np.random.default_rng(seed)
    margin = AXIS_RANGE[1] + 1.0
    center = (rng.uniform(margin, size - 1 - margin), rng.uniform(margin, size - 1 - margin))
    axes = (rng.uniform(*AXIS_RANGE), rng.uniform(*AXIS_RANGE))
    angle = rng.uniform(0.0, np.pi)
    mask = ellipse_mask(size, center, axes, angle)
    background = rng.normal(BACKGROUND[0], BACKGROUND[1], size=(size, size))
    foreground = rng.normal(FOREGROUND[0], FOREGROUND[1], size=(size, size))
    pixels = np.clip(np.where(mask, foreground, background), 0.0, 1.0)
    return SynthImage(pixels, mask, ImageMeta(seed=int(seed)))


def stack_pixels(images) -> np.ndarray:
    return np.stack([im.pixels for im in images])


def stack_masks(images) -> np.ndarray:
    return np.stack([im.mask for im in images])
