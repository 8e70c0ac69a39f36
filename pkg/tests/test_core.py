import pytest
from hypothesis import given, strategies as st

from waterbench.core import AlignedGroup, Timestamp, month_pattern, validate_series
from waterbench.errors import (
    DuplicateTimestamp,
    EmptySeries,
    NegativeValue,
    NonFiniteValue,
    NonQuarterlyGap,
    ValidationError,
)


def quarterly(start=(2013, 1), values=(1.0, 2.0, 3.0, 4.0)):
    t0 = Timestamp(*start)
    return [(t0.shift(k), v) for k, v in enumerate(values)]


def test_valid_series():
    s = validate_series("a", "r", [((2013, 1), 30), ((2013, 4), 25)])
    assert len(s) == 2
    assert s.values == (30.0, 25.0)
    assert s.timestamps == (Timestamp(2013, 1), Timestamp(2013, 4))


def test_unsorted_input_is_sorted():
    s = validate_series("a", "r", [((2013, 4), 25), ((2013, 1), 30)])
    assert s.values == (30.0, 25.0)


@pytest.mark.parametrize(
    "obs, exc",
    [
        ([((2013, 1), 30), ((2013, 3), 25)], NonQuarterlyGap),
        ([((2013, 1), 30), ((2013, 7), 25)], NonQuarterlyGap),
        ([((2013, 1), -5)], NegativeValue),
        ([((2013, 1), 1), ((2013, 1), 2)], DuplicateTimestamp),
        ([((2013, 1), float("nan"))], NonFiniteValue),
        ([], EmptySeries),
    ],
)
def test_validation_errors(obs, exc):
    with pytest.raises(exc):
        validate_series("a", "r", obs)


def test_bad_month():
    with pytest.raises(ValidationError):
        Timestamp(2013, 13)


def test_year_boundary_step():
    s = validate_series("a", "r", [((2013, 11), 1), ((2014, 2), 1)])
    assert s.end == Timestamp(2014, 2)


@pytest.mark.parametrize(
    "start, n, expected",
    [((2013, 1), 8, (1, 4, 7, 10)), ((2013, 3), 8, (3, 6, 9, 12)), ((2013, 2), 1, (2,))],
)
def test_month_pattern(start, n, expected):
    s = validate_series("a", "r", quarterly(start, [1.0] * n))
    assert month_pattern(s).months == expected


@given(
    start_month=st.integers(1, 12),
    n=st.integers(4, 30),
    head=st.integers(0, 3),
    tail=st.integers(0, 3),
)
def test_month_pattern_invariant_under_cycle_truncation(start_month, n, head, tail):
    s = validate_series("a", "r", quarterly((2013, start_month), [1.0] * n))
    cut = s.slice(4 * head, len(s) - 4 * tail) if len(s) - 4 * (head + tail) >= 4 else s
    assert month_pattern(cut) == month_pattern(s)


@given(st.lists(st.floats(0, 1e6, allow_nan=False), min_size=1, max_size=20), st.integers(1, 12))
def test_validate_is_idempotent(values, month):
    s = validate_series("x", "r", quarterly((2015, month), values))
    assert validate_series(s.id, s.region_id, s.observations) == s


def test_group_common_span_aligned():
    a = validate_series("a", "r", quarterly((2013, 1), [1.0] * 12))
    b = validate_series("b", "r", quarterly((2014, 1), [2.0] * 12))
    g = AlignedGroup("r", month_pattern(a), (a, b))
    first, last = g.common_span()
    assert (first, last) == (Timestamp(2014, 1), Timestamp(2015, 10))
    assert a.span(first, last).timestamps == b.span(first, last).timestamps
