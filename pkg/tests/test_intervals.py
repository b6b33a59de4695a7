from __future__ import annotations

import json
from fractions import Fraction as F

import pytest
from hypothesis import given
from hypothesis import strategies as st

from fracthick.intervals import IntervalError, IntervalUnion, as_fraction

from strategies import interval_unions, small_rationals


def test_normalization_merges_touching_and_drops_empty():
    u = IntervalUnion([(F(1, 2), 1), (0, F(1, 2)), (2, 2), (3, 4), (F(7, 2), 5)])
    assert u.intervals == [(0, 1), (3, 5)]
    assert u.measure() == 3


def test_reversed_interval_rejected():
    with pytest.raises(IntervalError):
        IntervalUnion([(1, 0)])


def test_as_fraction_literals():
    assert as_fraction("3/8") == F(3, 8)
    assert as_fraction("0.25") == F(1, 4)
    assert as_fraction(0.5) == F(1, 2)
    with pytest.raises(IntervalError):
        as_fraction("one half")


@pytest.mark.parametrize("u, window, expected", [
    ([(0, 1)], (-1, 2), [(-1, 0), (1, 2)]),
    ([], (0, 1), [(0, 1)]),
    ([(0, F(1, 4)), (F(3, 4), 1)], (-1, 2), [(-1, 0), (F(1, 4), F(3, 4)), (1, 2)]),
])
def test_complement_window_examples(u, window, expected):
    assert IntervalUnion(u).complement_window(window).intervals == expected


def test_complement_window_requires_containment():
    with pytest.raises(IntervalError):
        IntervalUnion([(0, 3)]).complement_window((0, 1))


def test_json_round_trip_strings():
    u = IntervalUnion([(F(-1, 3), F(1, 7)), (1, F(9, 4))])
    text = u.to_json()
    assert all(isinstance(v, str) for item in json.loads(text) for v in item)
    assert IntervalUnion.from_json(text) == u


@given(interval_unions())
def test_normalized_invariants(u):
    ivs = u.intervals
    for a, b in ivs:
        assert a < b
    for (_, b), (a, _) in zip(ivs, ivs[1:]):
        assert b < a
    assert u.measure() == sum(b - a for a, b in ivs)


@given(interval_unions(), small_rationals)
def test_translate_preserves_measure(u, t):
    v = u.translate(t)
    assert v.measure() == u.measure()
    assert v.translate(-t) == u


@given(interval_unions(), st.fractions(min_value=F(1, 8), max_value=8, max_denominator=32))
def test_scale_multiplies_measure(u, c):
    assert u.scale(c).measure() == c * u.measure()


@given(interval_unions())
def test_complement_partitions_window(u):
    c = u.complement_window((-1, 2))
    assert c.measure() + u.measure() == 3
    # interiors are disjoint: intersection has zero measure
    for a, b in u.intervals:
        assert c.measure_in(a, b) == 0


@given(interval_unions(), interval_unions())
def test_union_inclusion_exclusion(u, v):
    w = u.union(v)
    overlap = sum((v.measure_in(a, b) for a, b in u.intervals), F(0))
    assert w.measure() == u.measure() + v.measure() - overlap


@given(interval_unions())
def test_json_round_trip(u):
    assert IntervalUnion.from_json(u.to_json()) == u
