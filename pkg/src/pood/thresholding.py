"""Rejection thresholds fitted on in-distribution test scores.

A sample is kept (classified ID) when ``ood_score <= tau`` and rejected
otherwise. ``tau`` is the smallest *observed* ID score that keeps at least
N% of the ID test samples, so the retention guarantee holds exactly on the
fitting set even when scores are tied.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import NamedTuple, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import EmptyInputError
from .records import SampleRecord

DEFAULT_N_PERCENT = 95.0


class PolicyKind(str, Enum):
    TPR_AT_N = "tpr-at-n"
    NO_OOD = "no-ood"


@dataclass(frozen=True)
class ThresholdPolicy:
    kind: PolicyKind = PolicyKind.TPR_AT_N
    n_percent: float = DEFAULT_N_PERCENT

    def __post_init__(self):
        object.__setattr__(self, "kind", PolicyKind(self.kind))
        check_n_percent(self.n_percent)

    @classmethod
    def tpr(cls, n_percent: float = DEFAULT_N_PERCENT) -> "ThresholdPolicy":
        return cls(PolicyKind.TPR_AT_N, n_percent)

    @classmethod
    def no_ood(cls) -> "ThresholdPolicy":
        return cls(PolicyKind.NO_OOD, DEFAULT_N_PERCENT)

    @property
    def is_no_ood(self) -> bool:
        return self.kind is PolicyKind.NO_OOD


@dataclass(frozen=True)
class Threshold:
    tau: float
    achieved_tpr: float


class Decision(NamedTuple):
    sample_id: str
    id_flag: int


def check_n_percent(n_percent: float) -> float:
    n = float(n_percent)
    if not (0.0 < n <= 100.0):
        raise ValueError(f"n_percent must lie in (0, 100], got {n_percent!r}")
    return n


def retention_count(n_percent: float, n: int) -> int:
    """k = ceil(N/100 * n), evaluated exactly (no float rounding)."""
    k = math.ceil(Fraction(check_n_percent(n_percent)) * n / 100)
    return min(max(k, 1), n)


def _as_scores(scores, name: str) -> np.ndarray:
    arr = np.asarray(scores, dtype=np.float64).ravel()
    if arr.size == 0:
        raise EmptyInputError(f"{name} is empty")
    return arr


def fit_threshold(id_scores: Sequence[float], policy: ThresholdPolicy | None = None) -> Threshold:
    """Pick the rejection threshold from ID test scores.

    For ``tpr-at-n`` the threshold is the k-th smallest ID score with
    ``k = ceil(N/100 * n)``. Ties at that value are all retained, so the
    achieved TPR can exceed N/100. For ``no-ood`` the threshold is ``+inf``.
    """
    policy = policy or ThresholdPolicy()
    scores = _as_scores(id_scores, "id_scores")
    if policy.is_no_ood:
        return Threshold(math.inf, 1.0)
    ordered = np.sort(scores, kind="stable")
    k = retention_count(policy.n_percent, ordered.size)
    tau = float(ordered[k - 1])
    retained = int(np.searchsorted(ordered, tau, side="right"))
    return Threshold(tau, retained / ordered.size)


def id_flags(scores, tau: float) -> np.ndarray:
    """1 where ``score <= tau`` (kept as ID), else 0."""
    return (np.asarray(scores, dtype=np.float64) <= tau).astype(np.int8)


def decide(samples: Sequence[SampleRecord], threshold: Threshold) -> list[Decision]:
    flags = id_flags([s.ood_score for s in samples], threshold.tau)
    return [Decision(s.sample_id, int(f)) for s, f in zip(samples, flags)]


class ThresholdDetector(BaseEstimator):
    """Estimator wrapper around :func:`fit_threshold`.

    Parameters
    ----------
    n_percent : float, default=95
        Percentage of ID test samples the threshold must retain.
    no_ood : bool, default=False
        Reject nothing (``tau = +inf``).

    Attributes
    ----------
    tau_ : float
    achieved_tpr_ : float
    """

    def __init__(self, n_percent: float = DEFAULT_N_PERCENT, no_ood: bool = False):
        self.n_percent = n_percent
        self.no_ood = no_ood

    @property
    def policy(self) -> ThresholdPolicy:
        if self.no_ood:
            return ThresholdPolicy.no_ood()
        return ThresholdPolicy.tpr(self.n_percent)

    def fit(self, X, y=None):
        scores = check_array(X, ensure_2d=False, dtype=np.float64).ravel()
        th = fit_threshold(scores, self.policy)
        self.tau_ = th.tau
        self.achieved_tpr_ = th.achieved_tpr
        return self

    def predict(self, X):
        """Return id flags: 1 = kept as in-distribution, 0 = rejected."""
        check_is_fitted(self, "tau_")
        scores = check_array(X, ensure_2d=False, dtype=np.float64).ravel()
        return id_flags(scores, self.tau_)

    @property
    def threshold_(self) -> Threshold:
        check_is_fitted(self, "tau_")
        return Threshold(self.tau_, self.achieved_tpr_)
