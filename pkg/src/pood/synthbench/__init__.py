"""Desk-scale synthetic segmentation benchmark.

A toy world of 2D images with one bright ellipse, a severity-graded
corruption suite, a pixelwise logistic segmenter standing in for a real
segmentation network, and two image-level OOD scorers.
"""

from .benchmark import PERF_METRICS, augment_training_set, perf_scores, run_benchmark
from .corruptions import CORRUPTION_KINDS, MAX_SEVERITY, SEVERITY_TABLES, corrupt
from .images import ImageMeta, SynthImage, render_image
from .model import ToySegmenter, fit_toy_model
from .scoring import (
    EntropyScorer,
    HistogramMahalanobisScorer,
    avg_fp,
    binary_entropy,
    dsc,
    histogram_features,
    make_scorer,
    score_entropy,
    score_ihf,
)
from .world import SynthWorld, generate_world, load_world, save_world

__all__ = [
    "CORRUPTION_KINDS",
    "EntropyScorer",
    "HistogramMahalanobisScorer",
    "ImageMeta",
    "MAX_SEVERITY",
    "PERF_METRICS",
    "SEVERITY_TABLES",
    "SynthImage",
    "SynthWorld",
    "ToySegmenter",
    "augment_training_set",
    "avg_fp",
    "binary_entropy",
    "corrupt",
    "dsc",
    "fit_toy_model",
    "generate_world",
    "histogram_features",
    "load_world",
    "make_scorer",
    "perf_scores",
    "render_image",
    "run_benchmark",
    "save_world",
    "score_entropy",
    "score_ihf",
]
