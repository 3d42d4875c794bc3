import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pood.exceptions import EmptyInputError, SchemaError, ValidationError
from pood.records import (
    ID_COHORT,
    Polarity,
    ReferenceScore,
    ReferenceSource,
    SampleRecord,
    ScoreTable,
    compute_reference,
    emit_table,
    ingest_table,
    normalize_polarity,
)

THREE_ROWS = """sample_id,cohort,ood_score,perf_score
a,id-test,0.1,0.9
b,shiftA,0.7,0.4
c,shiftA,0.3,0.8
"""


def _table(id_perf, ood=()):
    recs = [SampleRecord(f"i{k}", ID_COHORT, float(k), p) for k, p in enumerate(id_perf)]
    recs += [SampleRecord(f"o{k}", "shift", s, p) for k, (s, p) in enumerate(ood)]
    return ScoreTable(recs)


class TestIngest:
    def test_three_row_csv(self, write_csv):
        table = ingest_table(write_csv(THREE_ROWS))
        assert len(table.id_cohort) == 1
        assert list(table.ood_cohorts) == ["shiftA"]
        assert len(table.ood_cohorts["shiftA"]) == 2
        assert table.polarity is Polarity.HIGHER

    def test_lower_is_anomalous_negates_in_order(self, write_csv):
        path = write_csv(THREE_ROWS)
        plain = ingest_table(path)
        flipped = ingest_table(path, polarity="lower-is-anomalous")
        assert [r.sample_id for r in flipped.records] == ["a", "b", "c"]
        assert [r.ood_score for r in flipped.records] == [-r.ood_score for r in plain.records]
        assert [r.perf_score for r in flipped.records] == [r.perf_score for r in plain.records]

    def test_nan_score_names_sample(self, write_csv):
        path = write_csv("sample_id,cohort,ood_score,perf_score\nx1,id-test,0.1,0.9\nbad7,s,NaN,0.5\n")
        with pytest.raises(ValidationError, match="bad7"):
            ingest_table(path)

    def test_infinite_perf_rejected(self, write_csv):
        path = write_csv("sample_id,cohort,ood_score,perf_score\nq,id-test,0.1,inf\n")
        with pytest.raises(ValidationError, match="'q'"):
            ingest_table(path)

    def test_missing_column_named(self, write_csv):
        path = write_csv("sample_id,cohort,ood_score\na,id-test,0.1\n")
        with pytest.raises(SchemaError, match="perf_score"):
            ingest_table(path)

    def test_duplicate_ids(self, write_csv):
        path = write_csv("sample_id,cohort,ood_score,perf_score\na,id-test,0.1,0.9\na,s,0.2,0.3\n")
        with pytest.raises(ValidationError, match="duplicate"):
            ingest_table(path)

    @pytest.mark.parametrize("text", ["", "sample_id,cohort,ood_score,perf_score\n"])
    def test_empty(self, write_csv, text):
        with pytest.raises(EmptyInputError):
            ingest_table(write_csv(text))

    def test_empty_json(self, write_csv):
        with pytest.raises(EmptyInputError):
            ingest_table(write_csv("[]", "t.json"))

    def test_severity_column(self, write_csv):
        path = write_csv("sample_id,cohort,ood_score,perf_score,severity\na,id-test,0.1,0.9,\nb,s,1,0.5,3\n")
        table = ingest_table(path)
        assert [r.severity for r in table.records] == [None, 3]

    @pytest.mark.parametrize("bad", ["-1", "1.5", "x"])
    def test_bad_severity(self, write_csv, bad):
        path = write_csv(f"sample_id,cohort,ood_score,perf_score,severity\nb,s,1,0.5,{bad}\n")
        with pytest.raises(ValidationError):
            ingest_table(path)

    def test_json_with_null_and_missing_severity(self, write_csv):
        data = [
            {"sample_id": "a", "cohort": "id-test", "ood_score": 0.1, "perf_score": 0.9, "severity": None},
            {"sample_id": "b", "cohort": "s", "ood_score": 0.5, "perf_score": 0.4},
            {"sample_id": "c", "cohort": "s", "ood_score": 0.6, "perf_score": 0.3, "severity": 2},
        ]
        table = ingest_table(write_csv(json.dumps(data), "t.json"))
        assert [r.severity for r in table.records] == [None, None, 2]

    def test_json_missing_field(self, write_csv):
        with pytest.raises(SchemaError, match="ood_score"):
            ingest_table(write_csv('[{"sample_id": "a", "cohort": "s", "perf_score": 1}]', "t.json"))

    def test_cohort_name_is_case_sensitive(self, write_csv):
        table = ingest_table(write_csv("sample_id,cohort,ood_score,perf_score\na,ID-TEST,0.1,0.9\n"))
        assert table.id_cohort == ()
        assert list(table.ood_cohorts) == ["ID-TEST"]

    def test_comment_lines_skipped(self, write_csv):
        table = ingest_table(write_csv("# pood 0.1.0\n# config: {}\n" + THREE_ROWS))
        assert len(table) == 3


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@st.composite
def tables(draw):
    n = draw(st.integers(1, 12))
    recs = []
    for i in range(n):
        recs.append(
            SampleRecord(
                sample_id=f"s{i}",
                cohort=draw(st.sampled_from([ID_COHORT, "a", "b,c", 'q"x'])),
                ood_score=draw(finite),
                perf_score=draw(finite),
                severity=draw(st.one_of(st.none(), st.integers(0, 5))),
            )
        )
    return ScoreTable(recs)


class TestRoundTrip:
    @settings(max_examples=60, deadline=None)
    @given(table=tables(), fmt=st.sampled_from(["csv", "json"]))
    def test_bit_exact(self, tmp_path_factory, table, fmt):
        path = tmp_path_factory.mktemp("rt") / f"t.{fmt}"
        emit_table(table, path)
        again = ingest_table(path)
        for a, b in zip(table.records, again.records):
            assert a.sample_id == b.sample_id and a.cohort == b.cohort and a.severity == b.severity
            assert math.copysign(1, a.ood_score) == math.copysign(1, b.ood_score)
            assert a.ood_score == b.ood_score and a.perf_score == b.perf_score
        assert len(again) == len(table)

    @given(table=tables())
    def test_polarity_involution(self, table):
        twice = normalize_polarity(normalize_polarity(table.records, "lower-is-anomalous"), "lower-is-anomalous")
        assert [r.ood_score for r in twice] == [r.ood_score for r in table.records]


class TestPartition:
    @given(table=tables())
    def test_exact_partition(self, table):
        parts = list(table.id_cohort) + [r for c in table.ood_cohorts.values() for r in c]
        assert sorted(r.sample_id for r in parts) == sorted(r.sample_id for r in table.records)


class TestReference:
    def test_mean(self):
        assert compute_reference(_table([0.8, 0.9, 1.0])).s0 == pytest.approx(0.9, abs=1e-15)

    def test_single(self):
        assert compute_reference(_table([0.7])).s0 == 0.7

    def test_hand_sum(self):
        ref = compute_reference(_table([0.92, 0.88, 0.95, 0.85]))
        assert ref.s0 == pytest.approx(3.60 / 4, abs=1e-15)
        assert ref.source is ReferenceSource.COMPUTED

    def test_empty_id_cohort(self):
        with pytest.raises(EmptyInputError):
            compute_reference(_table([], ood=[(1.0, 0.5)]))

    def test_external(self):
        ref = ReferenceScore.external(0.83)
        assert ref.s0 == 0.83 and ref.source is ReferenceSource.EXTERNAL

    @given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=30), st.randoms())
    def test_permutation_invariant(self, perf, rnd):
        shuffled = list(perf)
        rnd.shuffle(shuffled)
        assert compute_reference(_table(perf)).s0 == compute_reference(_table(shuffled)).s0

    def test_exactly_the_mean(self):
        rng = np.random.default_rng(3)
        perf = rng.uniform(0, 1, 101).tolist()
        assert compute_reference(_table(perf)).s0 == math.fsum(perf) / len(perf)
