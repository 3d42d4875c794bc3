"""Severity-parameterized image corruptions.

Severity 0 is the identity for every kind. Severities 1-5 index the fixed
parameter tables below; the values are part of the benchmark definition and
must not change between runs.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .images import ImageMeta, SynthImage

MAX_SEVERITY = 5

NOISE_SIGMA = (0.0, 0.02, 0.05, 0.10, 0.20, 0.35)
GAMMA = (1.0, 1.25, 1.5, 2.0, 3.0, 4.0)
BLUR_HALF_WIDTH = (0, 1, 2, 3, 4, 5)
CONTRAST_FACTOR = (1.0, 0.8, 0.6, 0.45, 0.3, 0.2)
OCCLUSION_SIDE = (0, 8, 12, 16, 24, 32)
OCCLUSION_FILL = 0.5

SEVERITY_TABLES = {
    "gaussian-noise": NOISE_SIGMA,
    "gamma": GAMMA,
    "blur": BLUR_HALF_WIDTH,
    "contrast": CONTRAST_FACTOR,
    "occlusion": OCCLUSION_SIDE,
}
CORRUPTION_KINDS = ("none",) + tuple(SEVERITY_TABLES)


def check_kind(kind: str) -> str:
    if kind not in CORRUPTION_KINDS:
        raise ValueError(f"unknown corruption kind {kind!r}; expected one of {CORRUPTION_KINDS}")
    return kind


def check_severity(severity: int) -> int:
    if isinstance(severity, bool) or int(severity) != severity or not 0 <= severity <= MAX_SEVERITY:
        raise ValueError(f"severity must be an integer in 0..{MAX_SEVERITY}, got {severity!r}")
    return int(severity)


def _gaussian_noise(x, sigma, rng):
    return np.clip(x + rng.normal(0.0, sigma, size=x.shape), 0.0, 1.0)


def _gamma(x, gamma, rng):
    return np.power(x, gamma)


def _blur(x, half_width, rng):
    return ndimage.uniform_filter(x, size=2 * half_width + 1, mode="nearest")


def _contrast(x, factor, rng):
    return 0.5 + factor * (x - 0.5)


def _occlusion(x, side, rng):
    h, w = x.shape
    side = min(side, h, w)
    top = int(rng.integers(0, h - side + 1))
    left = int(rng.integers(0, w - side + 1))
    out = x.copy()
    out[top : top + side, left : left + side] = OCCLUSION_FILL
    return out


_TRANSFORMS = {
    "gaussian-noise": _gaussian_noise,
    "gamma": _gamma,
    "blur": _blur,
    "contrast": _contrast,
    "occlusion": _occlusion,
}


def corruption_parameter(kind: str, severity: int):
    check_kind(kind)
    severity = check_severity(severity)
    if kind == "none":
        return None
    return SEVERITY_TABLES[kind][severity]


def corrupt(image: SynthImage, kind: str, severity: int, seed: int) -> SynthImage:
    """Apply ``kind`` at ``severity`` to ``image``.

    The ground-truth mask is never altered. At severity 0 (or kind
    ``"none"``) the returned image shares the input's pixel array.
    """
    param = corruption_parameter(kind, severity)
    meta = ImageMeta(seed=image.meta.seed, corruption=kind, severity=int(severity))
    if kind == "none" or severity == 0:
        return SynthImage(image.pixels, image.mask, meta)
    rng = np.random.default_rng(seed)
    pixels = _TRANSFORMS[kind](image.pixels, param, rng)
    pixels = np.clip(pixels, 0.0, 1.0)
    return SynthImage(pixels, image.mask, meta)
