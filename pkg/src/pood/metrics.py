"""Expected performance drop, detection metrics, rank correlation, bootstrap.

All functions take scores in higher-is-anomalous polarity. OOD is the
positive class for AUROC and AUPR.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .exceptions import EmptyInputError, ValidationError
from .records import ReferenceScore, SampleRecord, ScoreTable, compute_reference
from .thresholding import ThresholdPolicy, fit_threshold, id_flags, retention_count

SPEARMAN_GATE = 1e-4
EXACT_PERMUTATION_MAX_N = 9


@dataclass(frozen=True)
class EpdResult:
    value: float
    n_retained: int
    n_total: int


@dataclass(frozen=True)
class DetectionMetrics:
    auroc: float
    aupr: float
    fpr_at_tpr_n: float
    fpr_at_tpr_n_plus: float


@dataclass(frozen=True)
class CorrelationResult:
    rho: float
    p_value: float
    gated_rho: float


@dataclass(frozen=True)
class BootstrapInterval:
    lower: float
    upper: float
    level: float
    n_resamples: int
    seed: int
    degenerate: bool = False


def _scores(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size == 0:
        raise EmptyInputError(f"{name} is empty")
    return arr


def _s0(reference) -> float:
    return float(reference.s0 if isinstance(reference, ReferenceScore) else reference)


def epd(
    ood_cohort: Sequence[SampleRecord],
    flags: Sequence[int],
    s0: ReferenceScore | float,
) -> EpdResult:
    """Expected performance drop over one OOD cohort.

    Each retained sample (flag 1) contributes ``s0 - perf_score``; rejected
    samples contribute zero. The mean runs over the whole cohort, so a
    detector that rejects everything scores exactly 0.
    """
    if len(ood_cohort) == 0:
        raise EmptyInputError("OOD cohort is empty")
    flags = np.asarray(flags).ravel()
    if flags.size != len(ood_cohort):
        raise ValidationError(
            f"flags ({flags.size}) not aligned with cohort ({len(ood_cohort)} samples)"
        )
    if not np.isin(flags, (0, 1)).all():
        raise ValidationError("flags must be 0 or 1")
    base = _s0(s0)
    terms = [(base - r.perf_score) if f else 0.0 for r, f in zip(ood_cohort, flags)]
    return EpdResult(math.fsum(terms) / len(terms), int(flags.sum()), len(terms))


def fpr_at_tpr(id_scores, ood_scores, n_percent: float = 95.0) -> float:
    """Fraction of OOD samples kept at the threshold retaining N% of ID."""
    id_scores = _scores(id_scores, "id_scores")
    ood_scores = _scores(ood_scores, "ood_scores")
    tau = fit_threshold(id_scores, ThresholdPolicy.tpr(n_percent)).tau
    return int(np.count_nonzero(ood_scores <= tau)) / ood_scores.size


def fpr_at_tpr_plus(id_scores, ood_scores, n_percent: float = 95.0) -> float:
    """FPR averaged over every achievable retention count k >= ceil(N n / 100).

    Tied ID scores yield repeated thresholds; each k is still counted once.
    """
    id_sorted = np.sort(_scores(id_scores, "id_scores"))
    ood_sorted = np.sort(_scores(ood_scores, "ood_scores"))
    k0 = retention_count(n_percent, id_sorted.size)
    taus = id_sorted[k0 - 1 :]
    kept = np.searchsorted(ood_sorted, taus, side="right")
    return math.fsum(kept / ood_sorted.size) / taus.size


def auroc(id_scores, ood_scores) -> float:
    """P(OOD score > ID score) with ties counted one half (Mann-Whitney U)."""
    id_scores = _scores(id_scores, "id_scores")
    ood_scores = _scores(ood_scores, "ood_scores")
    n, m = id_scores.size, ood_scores.size
    ranks = stats.rankdata(np.concatenate([id_scores, ood_scores]), method="average")
    u = ranks[n:].sum() - m * (m + 1) / 2.0
    return float(u / (n * m))


def aupr(id_scores, ood_scores) -> float:
    """Average precision with OOD as the positive class.

    Scores are ranked descending; a tie group is resolved as a block, so
    every positive in the group gets the precision measured after the
    whole group.
    """
    id_scores = _scores(id_scores, "id_scores")
    ood_scores = _scores(ood_scores, "ood_scores")
    values = np.concatenate([ood_scores, id_scores])
    is_pos = np.concatenate([np.ones(ood_scores.size), np.zeros(id_scores.size)])
    uniq, inverse = np.unique(-values, return_inverse=True)
    pos_per_group = np.bincount(inverse, weights=is_pos, minlength=uniq.size)
    size_per_group = np.bincount(inverse, minlength=uniq.size)
    tp = np.cumsum(pos_per_group)
    seen = np.cumsum(size_per_group)
    return float(math.fsum(pos_per_group * tp / seen) / ood_scores.size)


def detection_metrics(id_scores, ood_scores, n_percent: float = 95.0) -> DetectionMetrics:
    return DetectionMetrics(
        auroc=auroc(id_scores, ood_scores),
        aupr=aupr(id_scores, ood_scores),
        fpr_at_tpr_n=fpr_at_tpr(id_scores, ood_scores, n_percent),
        fpr_at_tpr_n_plus=fpr_at_tpr_plus(id_scores, ood_scores, n_percent),
    )


# --- rank correlation --------------------------------------------------------


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    denom = math.sqrt(float(a @ a) * float(b @ b))
    return float(a @ b) / denom


def _exact_permutation_p(rx: np.ndarray, ry: np.ndarray, rho: float) -> float:
    n = rx.size
    perms = np.array(list(itertools.permutations(range(n))), dtype=np.intp)
    xc = rx - rx.mean()
    yc = ry - ry.mean()
    denom = math.sqrt(float(xc @ xc) * float(yc @ yc))
    null = (yc[perms] @ xc) / denom
    # permutations that tie the observed statistic count as extreme
    hits = np.count_nonzero(np.abs(null) >= abs(rho) - 1e-12)
    return hits / perms.shape[0]


def spearman(ood_scores, perf_scores, gate: float = SPEARMAN_GATE) -> CorrelationResult:
    """Tie-aware Spearman correlation with a two-sided p-value.

    The p-value is an exact permutation test for n <= 9 and the Student t
    approximation ``t = rho * sqrt((n - 2) / (1 - rho**2))`` beyond. When
    either side is constant the correlation is undefined and reported as
    ``rho = 0, p = 1``. ``gated_rho`` zeroes correlations with ``p > gate``.
    """
    x = np.asarray(ood_scores, dtype=np.float64).ravel()
    y = np.asarray(perf_scores, dtype=np.float64).ravel()
    if x.size != y.size:
        raise ValidationError(f"paired inputs differ in length ({x.size} vs {y.size})")
    n = x.size
    if n < 3:
        raise ValidationError(f"spearman needs at least 3 pairs, got {n}")
    rx = stats.rankdata(x, method="average")
    ry = stats.rankdata(y, method="average")
    if np.all(rx == rx[0]) or np.all(ry == ry[0]):
        return CorrelationResult(0.0, 1.0, 0.0)
    rho = min(1.0, max(-1.0, _pearson(rx, ry)))
    if n <= EXACT_PERMUTATION_MAX_N:
        p = _exact_permutation_p(rx, ry, rho)
    elif 1.0 - rho * rho <= 0.0:
        p = 0.0
    else:
        t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
        p = float(2.0 * stats.t.sf(abs(t), n - 2))
    p = min(1.0, max(0.0, p))
    return CorrelationResult(rho, p, rho if p <= gate else 0.0)


# --- bootstrap ---------------------------------------------------------------


def _resample_table(table: ScoreTable, rng: np.random.Generator) -> ScoreTable:
    groups: dict[str, list[SampleRecord]] = {}
    for r in table.records:
        groups.setdefault(r.cohort, []).append(r)
    out = []
    for tag, members in groups.items():
        idx = rng.integers(0, len(members), size=len(members))
        for j, i in enumerate(idx):
            src = members[i]
            out.append(
                SampleRecord(f"{src.sample_id}#{j}", tag, src.ood_score, src.perf_score, src.severity)
            )
    return ScoreTable(tuple(out))


def bootstrap_ci(
    metric: Callable[[ScoreTable], float],
    table: ScoreTable,
    level: float = 0.95,
    n_resamples: int = 1000,
    seed: int = 0,
) -> BootstrapInterval:
    """Percentile bootstrap interval for a table-level metric.

    ID test and each OOD cohort are resampled independently with
    replacement. Resample ``i`` draws from the substream ``(seed, i)``, so
    the interval does not depend on how resamples are scheduled. If any
    cohort has a single sample the interval collapses to the point
    estimate and ``degenerate`` is set.
    """
    if n_resamples < 100:
        raise ValueError(f"n_resamples must be >= 100, got {n_resamples}")
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    sizes = [len(table.id_cohort)] + [len(c) for c in table.ood_cohorts.values()]
    if any(s <= 1 for s in sizes):
        point = float(metric(table))
        return BootstrapInterval(point, point, level, n_resamples, seed, degenerate=True)
    values = np.empty(n_resamples)
    for i in range(n_resamples):
        rng = np.random.default_rng([seed, i])
        values[i] = metric(_resample_table(table, rng))
    alpha = (1.0 - level) / 2.0
    lower, upper = np.quantile(values, [alpha, 1.0 - alpha])
    return BootstrapInterval(float(lower), float(upper), level, n_resamples, seed)


# --- table-level helpers ------------------------------------------------------


def cohort_epd(
    table: ScoreTable,
    cohort: str,
    policy: ThresholdPolicy | None = None,
    reference: ReferenceScore | float | None = None,
) -> EpdResult:
    """EPD of one OOD cohort with the threshold fitted on the table's ID test set."""
    policy = policy or ThresholdPolicy()
    if reference is None:
        reference = compute_reference(table)
    tau = math.inf if policy.is_no_ood else fit_threshold(table.require_id_scores(), policy).tau
    members = table.cohort(cohort)
    return epd(members, id_flags([r.ood_score for r in members], tau), reference)
