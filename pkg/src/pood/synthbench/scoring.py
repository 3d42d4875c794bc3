"""Segmentation quality scores and image-level OOD scorers."""

from __future__ import annotations

import numpy as np
from scipy import ndimage
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ..exceptions import ValidationError
from .images import SynthImage
from .model import ToySegmenter, _as_images

PROB_CLAMP = 1e-12
IHF_BINS = 16
IHF_REG = 1e-6
_EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


def _check_pair(pred, gt):
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if pred.shape != gt.shape:
        raise ValueError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    return pred, gt


def dsc(pred, gt) -> float:
    """Dice similarity coefficient; two empty masks score 1.0."""
    pred, gt = _check_pair(pred, gt)
    total = np.count_nonzero(pred) + np.count_nonzero(gt)
    if total == 0:
        return 1.0
    return 2.0 * np.count_nonzero(pred & gt) / total


def avg_fp(pred, gt) -> int:
    """Number of 8-connected predicted components that miss ``gt`` entirely."""
    pred, gt = _check_pair(pred, gt)
    if pred.ndim != 2:
        raise ValueError(f"avg_fp expects 2D masks, got shape {pred.shape}")
    labels, n = ndimage.label(pred, structure=_EIGHT_CONNECTED)
    hit = np.unique(labels[pred & gt])
    return int(n - np.count_nonzero(hit))


def binary_entropy(p: np.ndarray) -> np.ndarray:
    p = np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return -(p * np.log(p) + (1.0 - p) * np.log1p(-p))


class EntropyScorer(BaseEstimator):
    """Mean pixelwise binary entropy of the segmenter's probabilities."""

    def __init__(self, model: ToySegmenter):
        self.model = model

    def fit(self, X=None, y=None):
        check_is_fitted(self.model, "bias_")
        self.is_fitted_ = True
        return self

    def score_samples(self, X) -> np.ndarray:
        """Higher means more anomalous."""
        check_is_fitted(self.model, "bias_")
        proba = self.model.predict_proba(X)
        return binary_entropy(proba).reshape(len(proba), -1).mean(axis=1)


def histogram_features(X, n_bins: int = IHF_BINS) -> np.ndarray:
    """Normalized intensity histograms over [0, 1], one row per image."""
    X = _as_images(X)
    flat = X.reshape(len(X), -1)
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    feats = np.stack([np.histogram(row, bins=edges)[0] for row in flat]).astype(np.float64)
    return feats / flat.shape[1]


class HistogramMahalanobisScorer(BaseEstimator):
    """Mahalanobis distance of intensity-histogram features to the ID fit.

    Parameters
    ----------
    n_bins : int, default=16
    reg : float, default=1e-6
        Added to the covariance diagonal so it is positive definite.
    """

    def __init__(self, n_bins: int = IHF_BINS, reg: float = IHF_REG):
        self.n_bins = n_bins
        self.reg = reg

    def fit(self, X, y=None):
        feats = histogram_features(X, self.n_bins)
        if len(feats) <= self.n_bins:
            raise ValidationError(
                f"need more training images ({len(feats)}) than histogram bins ({self.n_bins})"
            )
        self.mean_ = feats.mean(axis=0)
        self.covariance_ = np.cov(feats, rowvar=False) + self.reg * np.eye(self.n_bins)
        self.precision_ = np.linalg.inv(self.covariance_)
        self.precision_ = (self.precision_ + self.precision_.T) / 2.0
        return self

    def mahalanobis(self, feats: np.ndarray) -> np.ndarray:
        check_is_fitted(self, "mean_")
        d = np.atleast_2d(feats) - self.mean_
        q = np.einsum("ij,jk,ik->i", d, self.precision_, d)
        return np.sqrt(np.maximum(q, 0.0))

    def score_samples(self, X) -> np.ndarray:
        """Higher means more anomalous."""
        check_is_fitted(self, "mean_")
        return self.mahalanobis(histogram_features(X, self.n_bins))


SCORER_KINDS = ("entropy", "ihf")


def make_scorer(kind: str, model: ToySegmenter, train: list[SynthImage]):
    """Fitted scorer of the given kind."""
    if kind == "entropy":
        return EntropyScorer(model).fit()
    if kind == "ihf":
        return HistogramMahalanobisScorer().fit(np.stack([im.pixels for im in train]))
    raise ValueError(f"unknown scorer kind {kind!r}; expected one of {SCORER_KINDS}")


def score_entropy(model: ToySegmenter, image: SynthImage) -> float:
    return float(EntropyScorer(model).score_samples(image.pixels[None])[0])


def score_ihf(scorer: HistogramMahalanobisScorer, image: SynthImage) -> float:
    return float(scorer.score_samples(image.pixels[None])[0])
