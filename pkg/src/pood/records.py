"""Score-table data model and file ingestion.

A score table holds one OOD method's output on an evaluation set: for each
sample an anomaly score and the downstream model's performance score. The
reserved cohort ``"id-test"`` marks in-distribution test samples; every
other cohort tag names one distribution shift.

Scores are stored with a single polarity, higher meaning more anomalous.
Files written with the opposite convention are negated on ingestion.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .exceptions import EmptyInputError, SchemaError, ValidationError

ID_COHORT = "id-test"

REQUIRED_COLUMNS = ("sample_id", "cohort", "ood_score", "perf_score")
OPTIONAL_COLUMNS = ("severity",)


class Polarity(str, Enum):
    HIGHER = "higher-is-anomalous"
    LOWER = "lower-is-anomalous"


class ReferenceSource(str, Enum):
    COMPUTED = "computed-from-id-test"
    EXTERNAL = "externally-supplied"


@dataclass(frozen=True)
class SampleRecord:
    sample_id: str
    cohort: str
    ood_score: float
    perf_score: float
    severity: int | None = None


def exact_mean(values: Iterable[float]) -> float:
    """Correctly rounded arithmetic mean (independent of summation order)."""
    values = list(values)
    if not values:
        raise EmptyInputError("mean of an empty sequence")
    return math.fsum(values) / len(values)


def _check_record(rec: SampleRecord) -> None:
    if not isinstance(rec.sample_id, str) or not rec.sample_id:
        raise ValidationError(f"sample_id must be a non-empty string, got {rec.sample_id!r}")
    if not isinstance(rec.cohort, str) or not rec.cohort:
        raise ValidationError(f"sample {rec.sample_id!r}: cohort must be a non-empty string")
    for name in ("ood_score", "perf_score"):
        value = getattr(rec, name)
        if not math.isfinite(value):
            raise ValidationError(f"sample {rec.sample_id!r}: {name} is not finite ({value!r})")
    if rec.severity is not None and (
        isinstance(rec.severity, bool) or not isinstance(rec.severity, int) or rec.severity < 0
    ):
        raise ValidationError(
            f"sample {rec.sample_id!r}: severity must be a non-negative integer, got {rec.severity!r}"
        )


def normalize_polarity(
    records: Iterable[SampleRecord], polarity: Polarity | str
) -> list[SampleRecord]:
    """Return records with scores in higher-is-anomalous polarity.

    For ``lower-is-anomalous`` every ``ood_score`` is negated, so applying
    the normalization twice restores the original values.
    """
    polarity = Polarity(polarity)
    if polarity is Polarity.HIGHER:
        return list(records)
    return [replace(r, ood_score=-r.ood_score) for r in records]


@dataclass(frozen=True)
class ScoreTable:
    """Validated, immutable collection of sample records.

    ``polarity`` is always higher-is-anomalous; build tables from files in
    another polarity with :func:`ingest_table` or :meth:`from_records`.
    """

    records: tuple[SampleRecord, ...]
    polarity: Polarity = field(default=Polarity.HIGHER, init=False)

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        seen = set()
        for rec in self.records:
            _check_record(rec)
            if rec.sample_id in seen:
                raise ValidationError(f"duplicate sample_id {rec.sample_id!r}")
            seen.add(rec.sample_id)

    @classmethod
    def from_records(
        cls, records: Iterable[SampleRecord], polarity: Polarity | str = Polarity.HIGHER
    ) -> "ScoreTable":
        return cls(tuple(normalize_polarity(records, polarity)))

    def __len__(self):
        return len(self.records)

    @cached_property
    def id_cohort(self) -> tuple[SampleRecord, ...]:
        return tuple(r for r in self.records if r.cohort == ID_COHORT)

    @cached_property
    def ood_cohorts(self) -> dict[str, tuple[SampleRecord, ...]]:
        """OOD cohorts keyed by tag, in order of first appearance."""
        groups: dict[str, list[SampleRecord]] = {}
        for r in self.records:
            if r.cohort != ID_COHORT:
                groups.setdefault(r.cohort, []).append(r)
        return {k: tuple(v) for k, v in groups.items()}

    @property
    def shifts(self) -> list[str]:
        return list(self.ood_cohorts)

    def cohort(self, tag: str) -> tuple[SampleRecord, ...]:
        if tag == ID_COHORT:
            return self.id_cohort
        try:
            return self.ood_cohorts[tag]
        except KeyError:
            raise KeyError(f"no cohort {tag!r} in table") from None

    def id_scores(self) -> np.ndarray:
        return np.array([r.ood_score for r in self.id_cohort], dtype=np.float64)

    def require_id(self) -> tuple[SampleRecord, ...]:
        if not self.id_cohort:
            raise EmptyInputError(f"table has no {ID_COHORT!r} records")
        return self.id_cohort

    def require_id_scores(self) -> np.ndarray:
        return np.array([r.ood_score for r in self.require_id()], dtype=np.float64)

    def merge(self, other: "ScoreTable") -> "ScoreTable":
        return ScoreTable(self.records + other.records)


@dataclass(frozen=True)
class ReferenceScore:
    """Expected in-distribution performance used as the drop baseline."""

    s0: float
    source: ReferenceSource = ReferenceSource.COMPUTED

    def __post_init__(self):
        if not math.isfinite(self.s0):
            raise ValidationError(f"reference score must be finite, got {self.s0!r}")
        object.__setattr__(self, "source", ReferenceSource(self.source))

    @classmethod
    def external(cls, s0: float) -> "ReferenceScore":
        return cls(float(s0), ReferenceSource.EXTERNAL)


def compute_reference(table: ScoreTable) -> ReferenceScore:
    """Mean downstream performance over the ``id-test`` cohort."""
    id_records = table.require_id()
    return ReferenceScore(exact_mean(r.perf_score for r in id_records), ReferenceSource.COMPUTED)


# --- file formats -----------------------------------------------------------


def _infer_format(path: Path, fmt: str | None) -> str:
    if fmt is not None:
        fmt = fmt.lower()
        if fmt not in ("csv", "json"):
            raise ValueError(f"unknown format {fmt!r}; expected 'csv' or 'json'")
        return fmt
    suffix = path.suffix.lower().lstrip(".")
    if suffix in ("csv", "json"):
        return suffix
    raise ValueError(f"cannot infer format from {path.name!r}; pass format='csv' or 'json'")


def _parse_float(raw, sample_id: str, column: str) -> float:
    if isinstance(raw, bool):
        raise ValidationError(f"sample {sample_id!r}: {column} must be a number, got {raw!r}")
    try:
        value = float(raw)
    except (TypeError, ValueError):
        raise ValidationError(f"sample {sample_id!r}: cannot parse {column} {raw!r}") from None
    if not math.isfinite(value):
        raise ValidationError(f"sample {sample_id!r}: {column} is not finite ({raw!r})")
    return value


def _parse_severity(raw, sample_id: str) -> int | None:
    if raw is None or (isinstance(raw, str) and raw.strip() == ""):
        return None
    if isinstance(raw, bool):
        raise ValidationError(f"sample {sample_id!r}: invalid severity {raw!r}")
    if isinstance(raw, float):
        if not raw.is_integer():
            raise ValidationError(f"sample {sample_id!r}: severity must be an integer, got {raw!r}")
        raw = int(raw)
    try:
        value = int(raw)
    except (TypeError, ValueError):
        raise ValidationError(f"sample {sample_id!r}: severity must be an integer, got {raw!r}") from None
    if value < 0:
        raise ValidationError(f"sample {sample_id!r}: severity must be >= 0, got {value}")
    return value


def _row_to_record(row: dict, row_no: int) -> SampleRecord:
    sample_id = row.get("sample_id")
    if sample_id is None or str(sample_id) == "":
        raise ValidationError(f"row {row_no}: empty sample_id")
    sample_id = str(sample_id)
    cohort = row.get("cohort")
    if cohort is None or str(cohort) == "":
        raise ValidationError(f"sample {sample_id!r}: empty cohort")
    return SampleRecord(
        sample_id=sample_id,
        cohort=str(cohort),
        ood_score=_parse_float(row.get("ood_score"), sample_id, "ood_score"),
        perf_score=_parse_float(row.get("perf_score"), sample_id, "perf_score"),
        severity=_parse_severity(row.get("severity"), sample_id),
    )


def _read_csv_rows(text: str) -> list[dict]:
    # leading '#' lines carry run metadata and are not part of the table
    lines = text.splitlines(keepends=True)
    start = 0
    while start < len(lines) and lines[start].startswith("#"):
        start += 1
    body = "".join(lines[start:])
    if not body.strip():
        raise EmptyInputError("empty CSV file")
    reader = csv.DictReader(io.StringIO(body))
    header = reader.fieldnames or []
    header = [h.strip() for h in header]
    reader.fieldnames = header
    for col in REQUIRED_COLUMNS:
        if col not in header:
            raise SchemaError(f"missing column {col!r} (header: {','.join(header)})")
    rows = list(reader)
    if not rows:
        raise EmptyInputError("CSV file has a header but no rows")
    return rows


def _read_json_rows(text: str) -> list[dict]:
    if not text.strip():
        raise EmptyInputError("empty JSON file")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON: {exc}") from None
    if not isinstance(data, list):
        raise SchemaError("top-level JSON value must be an array of records")
    if not data:
        raise EmptyInputError("JSON array is empty")
    for i, obj in enumerate(data):
        if not isinstance(obj, dict):
            raise SchemaError(f"record {i} is not an object")
        for col in REQUIRED_COLUMNS:
            if col not in obj:
                raise SchemaError(f"record {i}: missing column {col!r}")
    return data


def ingest_table(
    path: str | os.PathLike,
    format: str | None = None,
    polarity: Polarity | str = Polarity.HIGHER,
) -> ScoreTable:
    """Read and validate a score table from CSV or JSON.

    Parameters
    ----------
    path : path-like
        File following the ``sample_id,cohort,ood_score,perf_score[,severity]``
        schema.
    format : {'csv', 'json'}, optional
        Inferred from the file suffix when omitted.
    polarity : Polarity or str
        Convention of ``ood_score`` in the file. Lower-is-anomalous scores
        are negated so the returned table is higher-is-anomalous.

    Raises
    ------
    SchemaError
        A required column is missing or the JSON structure is wrong.
    ValidationError
        Non-finite or unparsable score, bad severity, or duplicate ``sample_id``.
    EmptyInputError
        The file holds no records.
    """
    path = Path(path)
    fmt = _infer_format(path, format)
    text = path.read_text(encoding="utf-8")
    rows = _read_csv_rows(text) if fmt == "csv" else _read_json_rows(text)
    records = [_row_to_record(row, i + 1) for i, row in enumerate(rows)]
    return ScoreTable.from_records(records, polarity)


def _fmt_float(x: float) -> str:
    return repr(float(x))


def table_to_csv(table: ScoreTable, comments: Sequence[str] = ()) -> str:
    with_severity = any(r.severity is not None for r in table.records)
    cols = list(REQUIRED_COLUMNS) + (["severity"] if with_severity else [])
    buf = io.StringIO()
    for line in comments:
        buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(cols)
    for r in table.records:
        row = [r.sample_id, r.cohort, _fmt_float(r.ood_score), _fmt_float(r.perf_score)]
        if with_severity:
            row.append("" if r.severity is None else str(r.severity))
        writer.writerow(row)
    return buf.getvalue()


def table_to_json(table: ScoreTable) -> str:
    data = []
    for r in table.records:
        obj = {
            "sample_id": r.sample_id,
            "cohort": r.cohort,
            "ood_score": float(r.ood_score),
            "perf_score": float(r.perf_score),
        }
        if r.severity is not None:
            obj["severity"] = r.severity
        data.append(obj)
    return json.dumps(data, indent=1) + "\n"


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    """Write ``text`` to ``path`` via a temporary file and rename."""
    atomic_write_bytes(path, text.encode("utf-8"))


def atomic_write_bytes(path: str | os.PathLike, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit_table(
    table: ScoreTable,
    path: str | os.PathLike,
    format: str | None = None,
    comments: Sequence[str] = (),
) -> None:
    """Write ``table`` in the ingestion schema (higher-is-anomalous scores).

    Floats are written with ``repr`` so that re-ingesting reproduces every
    value bit for bit. ``comments`` become leading ``#`` lines (CSV only).
    """
    path = Path(path)
    fmt = _infer_format(path, format)
    text = table_to_csv(table, comments) if fmt == "csv" else table_to_json(table)
    atomic_write_text(path, text)
