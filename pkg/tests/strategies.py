"""Hypothesis strategies shared by the test modules."""

from __future__ import annotations

from fractions import Fraction

from hypothesis import strategies as st

from fracthick.intervals import IntervalUnion

small_rationals = st.fractions(min_value=-4, max_value=4, max_denominator=64)
unit_rationals = st.fractions(min_value=0, max_value=1, max_denominator=256)


@st.composite
def interval_unions(draw, max_size: int = 12, lo: Fraction = Fraction(0), hi: Fraction = Fraction(1),
                    max_denominator: int = 256):
    pts = draw(st.lists(st.fractions(min_value=lo, max_value=hi, max_denominator=max_denominator),
                        max_size=2 * max_size))
    pts = sorted(pts)
    pairs = [(pts[i], pts[i + 1]) for i in range(0, len(pts) - 1, 2)]
    return IntervalUnion(pairs)


ratios = st.fractions(min_value=Fraction(1, 64), max_value=Fraction(63, 64), max_denominator=64)
