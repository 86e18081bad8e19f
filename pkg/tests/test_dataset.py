import io
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bernmix.dataset import (
    CohortDataset,
    complete_rows,
    from_json,
    missing_profile,
    parse_csv,
    to_csv,
    to_json,
)
from bernmix.errors import EmptyResultError, ParseError, StructuralError

HEADER = "Age 1,Age 3,Age 5,Age 8,Age 11,Age 16\n"


def test_parse_single_row():
    ds = parse_csv(HEADER + "1,0,NaN,0,1,1\n")
    assert (ds.n, ds.m) == (1, 6)
    assert np.isnan(ds.values[0, 2])
    assert ds.row_pattern(0) == [1, 0, None, 0, 1, 1]
    assert ds.column_labels[0] == "Age 1"
    assert ds.patient_ids.tolist() == [0]


def test_missing_tokens_case_insensitive_and_empty():
    ds = parse_csv("a,b,c,d\nnan,NAN,,1\n0,Nan,1, \n")
    assert ds.missing.tolist() == [[True, True, True, False], [False, True, False, True]]


def test_ids_in_file_order():
    ds = parse_csv("a\n1\n0\n1\n")
    assert ds.patient_ids.tolist() == [0, 1, 2]
    assert ds.values[:, 0].tolist() == [1.0, 0.0, 1.0]


def test_single_column_empty_field_is_missing():
    ds = parse_csv("a\n1\n\n0\n")
    assert ds.n == 3 and np.isnan(ds.values[1, 0])


def test_accepts_file_object():
    assert parse_csv(io.StringIO(HEADER + "0,0,0,0,0,0\n")).n == 1


@pytest.mark.parametrize("token", ["2", "yes", "0.5", "-1", "N/A", "true"])
def test_malformed_token_reports_position(token):
    with pytest.raises(ParseError) as err:
        parse_csv(f"a,b,c\n0,1,0\n1,{token},0\n")
    assert err.value.line == 3
    assert err.value.column == 2


def test_ragged_row():
    with pytest.raises(StructuralError, match="line 3"):
        parse_csv("a,b,c\n0,1,0\n1,0\n")


def test_header_only_is_structural_error():
    with pytest.raises(StructuralError):
        parse_csv(HEADER)


def test_empty_input():
    with pytest.raises(StructuralError):
        parse_csv("")


def test_invariants_enforced():
    with pytest.raises(StructuralError):
        CohortDataset(np.array([[0.0, 2.0]]), ("a", "b"), np.array([0]))
    with pytest.raises(StructuralError):
        CohortDataset(np.zeros((2, 2)), ("a", "b"), np.array([3, 3]))
    with pytest.raises(StructuralError):
        CohortDataset(np.zeros((2, 2)), ("a",), np.array([0, 1]))
    with pytest.raises(StructuralError):
        CohortDataset(np.zeros((0, 2)), ("a", "b"), np.array([], dtype=int))


def test_immutable():
    ds = parse_csv("a,b\n0,1\n")
    with pytest.raises(ValueError):
        ds.values[0, 0] = 1.0


def test_complete_rows_identity_when_complete():
    ds = parse_csv("a,b\n0,1\n1,1\n")
    assert complete_rows(ds) == ds


def test_complete_rows_keeps_ids():
    ds = parse_csv("a,b\n0,1\nNaN,1\n1,1\n")
    kept = complete_rows(ds)
    assert kept.n == 2
    assert kept.patient_ids.tolist() == [0, 2]


def test_complete_rows_empty_result():
    with pytest.raises(EmptyResultError, match="no complete rows"):
        complete_rows(parse_csv("a,b\nNaN,1\n0,\n"))


def test_missing_profile_zero_case():
    prof = missing_profile(parse_csv("a,b,c\n0,1,1\n1,1,0\n"))
    assert prof.per_column_missing == (0, 0, 0)
    assert (prof.complete_rows, prof.incomplete_rows) == (2, 0)


def test_missing_profile_single_row():
    prof = missing_profile(parse_csv("a,b,c\n1,NaN,NaN\n"))
    assert prof.per_column_missing == (0, 1, 1)
    assert prof.incomplete_rows == 1 and prof.complete_rows == 0


def test_json_uses_null_for_missing():
    ds = parse_csv("a,b\n0,NaN\n")
    obj = json.loads(to_json(ds))
    assert obj["values"] == [[0, None]]
    assert from_json(to_json(ds)) == ds


cells = st.sampled_from([0.0, 1.0, np.nan])


@st.composite
def datasets(draw):
    m = draw(st.integers(1, 7))
    n = draw(st.integers(1, 25))
    rows = draw(st.lists(st.lists(cells, min_size=m, max_size=m), min_size=n, max_size=n))
    return CohortDataset.from_rows(rows, [f"Age {i}" for i in range(m)])


@given(datasets())
@settings(max_examples=150, deadline=None)
def test_csv_round_trip(ds):
    assert parse_csv(to_csv(ds)) == ds


@given(datasets())
@settings(max_examples=150, deadline=None)
def test_complete_rows_idempotent(ds):
    try:
        once = complete_rows(ds)
    except EmptyResultError:
        return
    assert complete_rows(once) == once
    assert not once.missing.any()


@given(datasets())
@settings(max_examples=150, deadline=None)
def test_profile_invariants(ds):
    prof = missing_profile(ds)
    assert prof.complete_rows + prof.incomplete_rows == ds.n
    assert all(c <= ds.n for c in prof.per_column_missing)
    assert sum(prof.per_column_missing) >= prof.incomplete_rows


def test_cohort_split(cohort):
    prof = missing_profile(cohort)
    assert cohort.n == 1184
    assert (prof.complete_rows, prof.incomplete_rows) == (647, 537)
    assert complete_rows(cohort).n == 647


def test_cohort_missingness_grows_with_age(cohort):
    counts = missing_profile(cohort).per_column_missing
    assert all(a <= b for a, b in zip(counts, counts[1:]))
