from __future__ import annotations

import math
from fractions import Fraction as F

import mpmath
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fracthick.intervals import IntervalError, IntervalUnion
from fracthick.svc import (ResourceBudgetError, SvcParams, SvcSet, piece_lengths,
                           round_dyadic, svc_construct)

from strategies import ratios


def test_depth_one_half():
    assert svc_construct(SvcParams.constant(F(1, 2)), 1).intervals == [(0, F(1, 4)), (F(3, 4), 1)]


@pytest.mark.parametrize("params", [SvcParams.constant(F(1, 3)),
                                    SvcParams.parametric(F(1, 2), 1, F(1, 2)),
                                    SvcParams.geometric(F(1, 2), F(1, 4))])
def test_depth_zero_is_unit_interval(params):
    assert svc_construct(params, 0) == IntervalUnion([(0, 1)])


def test_depth_two_half():
    K = svc_construct(SvcParams.constant(F(1, 2)), 2)
    assert len(K) == 4
    assert all(ln == F(1, 16) for ln in K.lengths())
    assert K.measure() == F(1, 4)


def test_depth_five_measure():
    assert svc_construct(SvcParams.constant(F(1, 2)), 5).measure() == F(1, 32)


def test_piece_length_recurrence():
    rs = [F(1, 2), F(1, 3), F(1, 5)]
    ln = piece_lengths(rs)
    assert ln[0] == 1
    for n, r in enumerate(rs):
        assert ln[n + 1] == (1 - r) / 2 * ln[n]


def test_explicit_ratios_exhausted():
    with pytest.raises(IntervalError):
        svc_construct(SvcParams.explicit([F(1, 2)]), 2)


@pytest.mark.parametrize("bad", [0, 1, F(3, 2), -F(1, 2)])
def test_ratio_outside_unit_interval(bad):
    with pytest.raises(IntervalError):
        svc_construct(SvcParams.explicit([bad]), 1)


def test_interval_budget():
    with pytest.raises(ResourceBudgetError):
        svc_construct(SvcParams.constant(F(1, 2)), 12, max_intervals=1024)


def test_denominator_budget():
    # r_n = 1/2 exp(-2^(2n)) is below 2^-65536 already at n = 8
    with pytest.raises(ResourceBudgetError):
        SvcSet(SvcParams.parametric(F(1, 2), 1, 2), 9)
    SvcSet(SvcParams.parametric(F(1, 2), 1, 2), 8)


def test_round_dyadic_is_dyadic_and_close():
    x = mpmath.mpf("0.1234567890123456789")
    r = round_dyadic(x, 64)
    assert r.denominator & (r.denominator - 1) == 0
    with mpmath.workprec(200):
        assert abs(mpmath.mpf(r.numerator) / r.denominator - x) <= x * mpmath.mpf(2) ** -64


@pytest.mark.parametrize("alpha, n", [(F(1, 2), 0), (F(1, 2), 10), (F(1, 5), 24), (2, 5)])
def test_parametric_ratio_relative_rounding(alpha, n):
    P = SvcParams.parametric(F(1, 2), 1, alpha, precision_bits=96)
    r = P.r(n)
    assert r.denominator & (r.denominator - 1) == 0
    with mpmath.workprec(400):
        a = F(alpha)
        exact = mpmath.exp(-mpmath.mpf(2) ** (n * mpmath.mpf(a.numerator) / a.denominator)) / 2
        err = abs(mpmath.mpf(r.numerator) / r.denominator - exact) / exact
    assert err <= mpmath.mpf(2) ** -95
    assert P.rounding_error_bound(n) >= F(0)


def test_params_json_round_trip():
    for P in (SvcParams.constant(F(1, 3)), SvcParams.explicit([F(1, 2), F(1, 4)]),
              SvcParams.geometric(F(1, 2), F(1, 3)), SvcParams.parametric(F(1, 2), 1, F(1, 2), 100)):
        Q = SvcParams.from_json_obj(P.to_json_obj())
        assert Q.ratios(2) == P.ratios(2)


@given(st.lists(ratios, min_size=0, max_size=8))
def test_product_formula_and_recurrence(rs):
    K = svc_construct(SvcParams.explicit(rs or [F(1, 2)]), len(rs))
    prod = F(1)
    for r in rs:
        prod *= 1 - r
    assert K.measure() == prod
    ln = piece_lengths(rs)[-1]
    assert len(K) == 2 ** len(rs)
    assert all(x == ln for x in K.lengths())


@given(st.lists(ratios, min_size=2, max_size=7), st.data())
def test_gap_formula(rs, data):
    n = data.draw(st.integers(0, len(rs) - 1))
    m = data.draw(st.integers(n + 1, len(rs)))
    P = SvcParams.explicit(rs)
    Kn, Km = svc_construct(P, n), svc_construct(P, m)
    surv = F(1)
    for r in rs[n:m]:
        surv *= 1 - r
    ln = piece_lengths(rs)[n]
    for a, b in Kn.intervals:
        assert (b - a) - Km.measure_in(a, b) == ln * (1 - surv)


def test_svcset_levels_match_construct():
    P = SvcParams.parametric(F(1, 2), 1, F(1, 2))
    S = SvcSet(P, 10)
    for n in (0, 3, 7):
        assert S.level(n) == svc_construct(P, n)
    assert S.measure() == svc_construct(P, 10).measure()
    assert S.survival(0, 10) == S.measure()
    assert S.lengths[S.level_for_scale(F(1, 64))] * 16 < F(1, 64)


def test_translated_svc_is_exact():
    K = svc_construct(SvcParams.constant(F(1, 3)), 3).translate(F(-1, 2))
    assert K.hull() == (F(-1, 2), F(1, 2))
    assert math.isclose(float(K.measure()), (2 / 3) ** 3)
