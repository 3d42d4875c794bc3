"""Pixelwise logistic segmenter used as the downstream model."""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy import ndimage
from scipy.special import expit
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from ..exceptions import ValidationError
from .images import SynthImage, stack_masks, stack_pixels


def _as_images(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[None]
    return check_array(X, allow_nd=True, ensure_2d=False, dtype=np.float64)


def box_smooth(X: np.ndarray, half_width: int) -> np.ndarray:
    """Per-image box filter of width ``2 * half_width + 1``."""
    if half_width == 0:
        return X
    w = 2 * half_width + 1
    return ndimage.uniform_filter(X, size=(1, w, w), mode="nearest")


def batch_dsc(pred: np.ndarray, gt: np.ndarray) -> np.ndarray:
    pred = pred.reshape(len(pred), -1)
    gt = gt.reshape(len(gt), -1)
    inter = np.count_nonzero(pred & gt, axis=1)
    total = np.count_nonzero(pred, axis=1) + np.count_nonzero(gt, axis=1)
    out = np.ones(len(pred))
    nz = total > 0
    out[nz] = 2.0 * inter[nz] / total[nz]
    return out


class ToySegmenter(BaseEstimator):
    """Segment bright foreground with ``p = sigmoid((x - bias) / scale)``.

    ``bias`` is the midpoint of the mean foreground and mean background
    training intensities and ``scale`` their pooled standard deviation
    (floored at ``scale_floor``). The predicted mask is ``p > 0.5``.

    Before the logistic, intensities pass through a box filter whose
    half-width is picked from ``smoothing_candidates`` by mean training
    Dice. Clean training data selects 0 (no smoothing); noisy, augmented
    training data selects a denoising width, which is what makes a
    model trained with augmentations more robust.

    Parameters
    ----------
    smoothing_candidates : sequence of int, default=(0, 1, 2)
    scale_floor : float, default=1e-3
    """

    def __init__(self, smoothing_candidates: Sequence[int] = (0, 1, 2), scale_floor: float = 1e-3):
        self.smoothing_candidates = smoothing_candidates
        self.scale_floor = scale_floor

    def fit(self, X, y):
        X = _as_images(X)
        y = np.asarray(y, dtype=bool)
        if y.shape != X.shape:
            raise ValueError(f"mask shape {y.shape} does not match image shape {X.shape}")
        fg, bg = X[y], X[~y]
        if fg.size == 0:
            raise ValidationError("all training masks are empty; cannot fit foreground intensity")
        if bg.size == 0:
            raise ValidationError("training masks cover every pixel; cannot fit background intensity")
        fg_mean, bg_mean = fg.mean(), bg.mean()
        self.bias_ = float((fg_mean + bg_mean) / 2.0)
        pooled_var = (np.square(fg - fg_mean).sum() + np.square(bg - bg_mean).sum()) / X.size
        self.scale_ = float(max(np.sqrt(pooled_var), self.scale_floor))

        candidates = sorted({int(h) for h in self.smoothing_candidates})
        if not candidates or candidates[0] < 0:
            raise ValueError(f"smoothing_candidates must be non-negative, got {self.smoothing_candidates!r}")
        scores = [batch_dsc(box_smooth(X, h) > self.bias_, y).mean() for h in candidates]
        self.smoothing_ = candidates[int(np.argmax(scores))]
        self.train_dsc_ = float(max(scores))
        return self

    def predict_proba(self, X) -> np.ndarray:
        check_is_fitted(self, "bias_")
        X = box_smooth(_as_images(X), self.smoothing_)
        return expit((X - self.bias_) / self.scale_)

    def predict(self, X) -> np.ndarray:
        return self.predict_proba(X) > 0.5


def fit_toy_model(train: Sequence[SynthImage], **params) -> ToySegmenter:
    if len(train) == 0:
        raise ValidationError("training set is empty")
    return ToySegmenter(**params).fit(stack_pixels(train), stack_masks(train))
