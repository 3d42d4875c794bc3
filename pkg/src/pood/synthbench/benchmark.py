"""End-to-end synthetic benchmark: world -> model + scorer -> score table."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..records import ID_COHORT, SampleRecord, ScoreTable
from .corruptions import MAX_SEVERITY, corrupt
from .images import SynthImage, stack_pixels
from .model import ToySegmenter
from .scoring import avg_fp, dsc
from .world import SynthWorld, derive_seed

PERF_METRICS = ("dsc", "neg-avgfp")


def perf_scores(model: ToySegmenter, images: Sequence[SynthImage], perf_metric: str) -> np.ndarray:
    """Per-image downstream score; AvgFP is negated so higher stays better."""
    if perf_metric not in PERF_METRICS:
        raise ValueError(f"unknown perf metric {perf_metric!r}; expected one of {PERF_METRICS}")
    preds = model.predict(stack_pixels(images))
    if perf_metric == "dsc":
        return np.array([dsc(p, im.mask) for p, im in zip(preds, images)])
    return np.array([float(-avg_fp(p, im.mask)) for p, im in zip(preds, images)])


def _records(tag_prefix, cohort, images, ood, perf):
    out = []
    for i, (im, o, p) in enumerate(zip(images, ood, perf)):
        sid = f"{tag_prefix}-{i:05d}"
        out.append(SampleRecord(sid, cohort, float(o), float(p), int(im.meta.severity)))
    return out


def run_benchmark(world: SynthWorld, model: ToySegmenter, scorer, perf_metric: str = "dsc") -> ScoreTable:
    """Score every test image of ``world``.

    ``scorer`` is any fitted object with ``score_samples(images)``. The ID
    test split becomes cohort ``"id-test"``; each OOD image joins the cohort
    named after its corruption kind, with its severity recorded.
    """
    records = []
    images = world.id_test
    records += _records(
        ID_COHORT, ID_COHORT, images,
        scorer.score_samples(stack_pixels(images)), perf_scores(model, images, perf_metric),
    )
    for kind, severity in world.configs:
        images = world.ood_group(kind, severity)
        if not images:
            continue
        records += _records(
            f"{kind}-s{severity}", kind, images,
            scorer.score_samples(stack_pixels(images)), perf_scores(model, images, perf_metric),
        )
    return ScoreTable(tuple(records))


def augment_training_set(
    train: Sequence[SynthImage],
    seed: int,
    kinds: Sequence[str] = ("gaussian-noise",),
    severities: Sequence[int] = tuple(range(1, MAX_SEVERITY + 1)),
) -> list[SynthImage]:
    """Originals plus one corrupted copy of each, with random kind and severity."""
    out = list(train)
    for i, im in enumerate(train):
        rng = np.random.default_rng([seed, i])
        kind = kinds[int(rng.integers(len(kinds)))]
        severity = int(severities[int(rng.integers(len(severities)))])
        out.append(corrupt(im, kind, severity, derive_seed(seed, i, 7)))
    return out
