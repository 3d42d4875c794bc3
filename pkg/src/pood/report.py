"""Ranked method tables, severity sweeps and correlation matrices.

Reports are plain data; renderers turn them into JSON, Markdown or CSV.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exceptions import ValidationError
from .metrics import (
    aupr,
    auroc,
    bootstrap_ci,
    cohort_epd,
    epd,
    fpr_at_tpr,
    fpr_at_tpr_plus,
    spearman,
)
from .records import ID_COHORT, ReferenceScore, ScoreTable, compute_reference, exact_mean
from .thresholding import ThresholdPolicy, fit_threshold, id_flags

log = logging.getLogger(__name__)

NO_OOD = "no-ood"

METRICS = ("epd-dsc", "epd-neg-avgfp", "auroc", "aupr", "fpr-n", "fpr-n-plus")
LOWER_IS_BETTER = {"epd-dsc": True, "epd-neg-avgfp": True, "auroc": False, "aupr": False,
                   "fpr-n": True, "fpr-n-plus": True}
METRIC_TITLES = {
    "epd-dsc": "EPD (DSC)",
    "epd-neg-avgfp": "EPD (-AvgFP)",
    "auroc": "AUROC",
    "aupr": "AUPR",
    "fpr-n": "FPR@TPR=N",
    "fpr-n-plus": "FPR@TPR=N+",
}


def check_metric(metric: str) -> str:
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")
    return metric


@dataclass(frozen=True)
class MethodRun:
    """One detection method evaluated on one score table.

    ``reference`` defaults to the mean ID-test performance of ``table``.
    Supply an external reference to score a modified downstream model
    against the baseline model's ID performance.
    """

    method_name: str
    table: ScoreTable
    policy: ThresholdPolicy = field(default_factory=ThresholdPolicy)
    reference: ReferenceScore | None = None

    def resolved_reference(self, table: ScoreTable | None = None) -> ReferenceScore:
        if self.reference is not None:
            return self.reference
        return compute_reference(table if table is not None else self.table)


def cell_value(run: MethodRun, shift: str, metric: str, table: ScoreTable | None = None) -> float:
    """Metric of ``run`` on one OOD shift.

    The no-ood policy behaves as a constant-score detector: it keeps every
    sample, so its AUROC is 0.5 and its FPR is 1.
    """
    table = table if table is not None else run.table
    if metric.startswith("epd"):
        return cohort_epd(table, shift, run.policy, run.resolved_reference(table)).value
    id_scores = table.require_id_scores()
    ood_scores = np.array([r.ood_score for r in table.cohort(shift)])
    if run.policy.is_no_ood:
        id_scores = np.zeros_like(id_scores)
        ood_scores = np.zeros_like(ood_scores)
    n = run.policy.n_percent
    if metric == "auroc":
        return auroc(id_scores, ood_scores)
    if metric == "aupr":
        return aupr(id_scores, ood_scores)
    if metric == "fpr-n":
        return fpr_at_tpr(id_scores, ood_scores, n)
    if metric == "fpr-n-plus":
        return fpr_at_tpr_plus(id_scores, ood_scores, n)
    raise ValueError(f"unknown metric {metric!r}")


def _rank(names: Sequence[str], values: Sequence[float], lower_is_better: bool) -> list[str]:
    sign = 1.0 if lower_is_better else -1.0
    return [n for _, n in sorted(zip(values, names), key=lambda vn: (sign * vn[0], vn[1]))]


@dataclass
class RankedReport:
    metric: str
    shifts: list[str]
    methods: list[str]
    cells: list[list[float]]  # cells[shift][method]
    mean: list[float]
    ranking: list[str]
    per_shift_ranks: list[list[int]]
    metadata: dict = field(default_factory=dict)
    intervals: list[list[list[float] | None]] | None = None

    @property
    def lower_is_better(self) -> bool:
        return LOWER_IS_BETTER[self.metric]

    def value(self, shift: str, method: str) -> float:
        return self.cells[self.shifts.index(shift)][self.methods.index(method)]

    def to_dict(self) -> dict:
        out = {
            "metadata": self.metadata,
            "shifts": self.shifts,
            "methods": self.methods,
            "cells": self.cells,
            "ranking": self.ranking,
            "mean": self.mean,
            "per_shift_ranks": self.per_shift_ranks,
        }
        if self.intervals is not None:
            out["intervals"] = self.intervals
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "RankedReport":
        return cls(
            metric=data["metadata"]["metric"],
            shifts=list(data["shifts"]),
            methods=list(data["methods"]),
            cells=[list(map(float, row)) for row in data["cells"]],
            mean=list(map(float, data["mean"])),
            ranking=list(data["ranking"]),
            per_shift_ranks=[list(map(int, row)) for row in data["per_shift_ranks"]],
            metadata=dict(data["metadata"]),
            intervals=data.get("intervals"),
        )


def _with_no_ood(runs: Sequence[MethodRun]) -> list[MethodRun]:
    runs = list(runs)
    if not any(r.policy.is_no_ood for r in runs):
        first = runs[0]
        runs.append(MethodRun(NO_OOD, first.table, ThresholdPolicy.no_ood(), first.reference))
    return runs


def _check_runs(runs: Sequence[MethodRun]) -> list[str]:
    if not runs:
        raise ValueError("no method runs given")
    names = [r.method_name for r in runs]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise ValidationError(f"duplicate method names: {dupes}")
    shifts = runs[0].table.shifts
    base = set(shifts)
    for r in runs[1:]:
        other = set(r.table.shifts)
        if other != base:
            diff = sorted(base ^ other)
            raise ValidationError(
                f"method {r.method_name!r} has different OOD cohorts than "
                f"{runs[0].method_name!r}; symmetric difference: {diff}"
            )
    if not shifts:
        raise ValidationError("tables contain no OOD cohorts")
    return shifts


def build_ranked_report(
    runs: Sequence[MethodRun],
    metric: str,
    include_no_ood: bool = True,
    bootstrap: dict | None = None,
    metadata: dict | None = None,
) -> RankedReport:
    """Per-shift metric table with an unweighted mean row and a ranking.

    Methods are ranked by the mean over shifts (ascending for EPD and FPR,
    descending for AUROC and AUPR); ties are broken by method name.

    ``bootstrap`` takes ``n_resamples``, ``level`` and ``seed`` and adds a
    percentile interval to every cell.
    """
    check_metric(metric)
    if include_no_ood:
        runs = _with_no_ood(runs)
    shifts = _check_runs(runs)
    methods = [r.method_name for r in runs]
    cells = [[cell_value(run, s, metric) for run in runs] for s in shifts]
    mean = [exact_mean(row[j] for row in cells) for j in range(len(runs))]
    lower = LOWER_IS_BETTER[metric]
    ranking = _rank(methods, mean, lower)
    per_shift_ranks = []
    for row in cells:
        order = _rank(methods, row, lower)
        per_shift_ranks.append([order.index(m) + 1 for m in methods])

    intervals = None
    if bootstrap:
        intervals = []
        for s in shifts:
            row = []
            for run in runs:
                sub = ScoreTable(run.table.id_cohort + run.table.cohort(s))
                ci = bootstrap_ci(
                    lambda t, run=run, s=s: cell_value(run, s, metric, t),
                    sub,
                    level=bootstrap.get("level", 0.95),
                    n_resamples=bootstrap.get("n_resamples", 1000),
                    seed=bootstrap.get("seed", 0),
                )
                row.append([ci.lower, ci.upper])
            intervals.append(row)

    meta = {
        "metric": metric,
        "n_percent": runs[0].policy.n_percent,
        "seed": None,
        "lower_is_better": lower,
        "tie_break": "method name, lexicographic",
        "references": {
            r.method_name: {"s0": r.resolved_reference().s0, "source": r.resolved_reference().source.value}
            for r in runs
        },
        "policies": {r.method_name: {"kind": r.policy.kind.value, "n_percent": r.policy.n_percent} for r in runs},
    }
    if bootstrap:
        meta["bootstrap"] = dict(bootstrap)
    meta.update(metadata or {})
    return RankedReport(metric, shifts, methods, cells, mean, ranking, per_shift_ranks, meta, intervals)


# --- severity sweep --------------------------------------------------------------


@dataclass(frozen=True)
class SweepRow:
    severity: int
    n: int
    epd: float
    one_minus_auroc: float


def build_severity_sweep(
    run: MethodRun,
    cohort: str | None = None,
    severities: Sequence[int] | None = None,
) -> list[SweepRow]:
    """EPD and 1 - AUROC per severity level, against the shared ID test set.

    OOD records (optionally restricted to ``cohort``) are grouped by
    severity. The severity-0 group is an uncorrupted holdout that is
    disjoint from the ID test set used for the threshold. Requested
    severities without records are skipped with a warning.
    """
    table = run.table
    records = [r for r in table.records if r.cohort != ID_COHORT and (cohort is None or r.cohort == cohort)]
    if cohort is not None and not records:
        raise ValidationError(f"no OOD records in cohort {cohort!r}")
    missing = [r.sample_id for r in records if r.severity is None]
    if missing:
        shown = ", ".join(missing[:10]) + (" ..." if len(missing) > 10 else "")
        raise ValidationError(f"{len(missing)} OOD records lack severity: {shown}")
    id_scores = table.require_id_scores()
    tau = math.inf if run.policy.is_no_ood else fit_threshold(id_scores, run.policy).tau
    reference = run.resolved_reference()
    groups: dict[int, list] = {}
    for r in records:
        groups.setdefault(r.severity, []).append(r)
    wanted = sorted(groups) if severities is None else sorted(set(severities))
    rows = []
    for s in wanted:
        members = groups.get(s)
        if not members:
            log.warning("severity %s has no records; row omitted", s)
            continue
        scores = np.array([r.ood_score for r in members])
        value = epd(members, id_flags(scores, tau), reference).value
        if run.policy.is_no_ood:
            auc = 0.5
        else:
            auc = auroc(id_scores, scores)
        rows.append(SweepRow(int(s), len(members), value, 1.0 - auc))
    return rows


# --- correlation matrix ---------------------------------------------------------


@dataclass
class CorrelationMatrix:
    shifts: list[str]
    methods: list[str]
    gated: list[list[float | None]]  # gated[shift][method]; None = too few samples
    rho: list[list[float | None]]
    p_value: list[list[float | None]]

    def to_dict(self) -> dict:
        return {"shifts": self.shifts, "methods": self.methods, "cells": self.gated,
                "rho": self.rho, "p_value": self.p_value}


def build_correlation_matrix(runs: Sequence[MethodRun], min_samples: int = 3) -> CorrelationMatrix:
    """Gated Spearman correlation between OOD score and performance per cell."""
    shifts = _check_runs(runs)
    gated, rho, pval = [], [], []
    for s in shifts:
        g_row, r_row, p_row = [], [], []
        for run in runs:
            members = run.table.cohort(s)
            if len(members) < min_samples:
                g_row.append(None)
                r_row.append(None)
                p_row.append(None)
                continue
            res = spearman([m.ood_score for m in members], [m.perf_score for m in members])
            g_row.append(res.gated_rho)
            r_row.append(res.rho)
            p_row.append(res.p_value)
        gated.append(g_row)
        rho.append(r_row)
        pval.append(p_row)
    return CorrelationMatrix(shifts, [r.method_name for r in runs], gated, rho, pval)


# --- rendering -------------------------------------------------------------------


def report_to_json(report: RankedReport) -> str:
    return json.dumps(report.to_dict(), indent=1, sort_keys=False) + "\n"


def report_from_json(text: str) -> RankedReport:
    return RankedReport.from_dict(json.loads(text))


def _fmt(x: float | None, digits: int = 3) -> str:
    if x is None:
        return "n/a"
    return f"{x:.{digits}f}"


def _block(report: RankedReport) -> tuple[list[str], list[list[str]]]:
    order = report.ranking
    idx = [report.methods.index(m) for m in order]
    rows = []
    for s, row in zip(report.shifts + ["mean"], report.cells + [report.mean]):
        vals = [row[i] for i in idx]
        best = min(vals) if report.lower_is_better else max(vals)
        rows.append([f"**{_fmt(v)}**" if v == best else _fmt(v) for v in vals])
    return order, rows


def render_markdown(report: RankedReport, companion: RankedReport | None = None) -> str:
    """Markdown table; with ``companion`` the two reports sit side by side.

    Within each block the columns follow that block's ranking and the best
    value of each row is bold. Negative values are printed as is.
    """
    blocks = [report] + ([companion] if companion is not None else [])
    if companion is not None and companion.shifts != report.shifts:
        raise ValueError("companion report covers different shifts")
    header = ["shift"]
    body = [[s] for s in report.shifts + ["mean"]]
    titles = []
    for b_i, b in enumerate(blocks):
        if b_i:
            header.append("")
            for row in body:
                row.append("")
        order, rows = _block(b)
        header += order
        for row, vals in zip(body, rows):
            row += vals
        arrow = "lower is better" if b.lower_is_better else "higher is better"
        titles.append(f"**{METRIC_TITLES[b.metric]}** ({arrow})")
    lines = [" | ".join(titles), ""]
    lines.append("| " + " | ".join(header) + " |")
    lines.append("|" + "|".join(["---"] + [":---:" if h else "---" for h in header[1:]]) + "|")
    for row in body:
        lines.append("| " + " | ".join(row) + " |")
    lines.append("")
    lines.append(f"Ranking by mean, ties broken by method name: {', '.join(report.ranking)}")
    meta = {k: v for k, v in report.metadata.items()}
    lines.append("")
    lines.append("<!-- config: " + json.dumps(meta, sort_keys=True) + " -->")
    return "\n".join(lines) + "\n"


def render_csv(report: RankedReport, comments: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    for c in comments:
        buf.write(f"# {c}\n")
    w = csv.writer(buf, lineterminator="\n")
    head = ["shift", "method", "metric", "value", "rank"]
    if report.intervals is not None:
        head += ["lower", "upper"]
    w.writerow(head)
    for i, s in enumerate(report.shifts):
        for j, m in enumerate(report.methods):
            row = [s, m, report.metric, repr(report.cells[i][j]), report.per_shift_ranks[i][j]]
            if report.intervals is not None:
                lo, hi = report.intervals[i][j]
                row += [repr(lo), repr(hi)]
            w.writerow(row)
    for j, m in enumerate(report.methods):
        row = ["mean", m, report.metric, repr(report.mean[j]), report.ranking.index(m) + 1]
        if report.intervals is not None:
            row += ["", ""]
        w.writerow(row)
    return buf.getvalue()


def sweep_to_csv(rows: Sequence[SweepRow], comments: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    for c in comments:
        buf.write(f"# {c}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["severity", "n", "epd", "one_minus_auroc"])
    for r in rows:
        w.writerow([r.severity, r.n, repr(r.epd), repr(r.one_minus_auroc)])
    return buf.getvalue()


def correlation_to_csv(matrix: CorrelationMatrix, comments: Sequence[str] = ()) -> str:
    buf = io.StringIO()
    for c in comments:
        buf.write(f"# {c}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["shift", "method", "gated_rho", "rho", "p_value"])
    for i, s in enumerate(matrix.shifts):
        for j, m in enumerate(matrix.methods):
            vals = [matrix.gated[i][j], matrix.rho[i][j], matrix.p_value[i][j]]
            w.writerow([s, m] + ["" if v is None else repr(v) for v in vals])
    return buf.getvalue()
