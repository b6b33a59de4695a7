from __future__ import annotations

import math
from fractions import Fraction as F

import mpmath
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fracthick.intervals import IntervalUnion
from fracthick.svc import DivergentSeriesError, SvcParams, SvcSet, svc_construct
from fracthick.thickness import (FitError, ThicknessProfile, ThicknessSample,
                                 brute_force_local_measure, fit_alpha, log_spaced,
                                 min_local_measure, series_tail, svc_min_local_measure,
                                 thickness_profile, verify_svc_bounds, worst_point)

from strategies import interval_unions, small_rationals

STEP = F(1, 2 ** 14)


def test_empty_set_is_fully_thick():
    for L in (F(1, 8), F(1, 4), 3):
        assert min_local_measure(IntervalUnion([]), L).theta == 1


def test_ball_inside_k():
    r = min_local_measure(IntervalUnion([(0, 1)]), F(1, 2))
    assert r.theta == 0
    assert r.argmin_x == F(1, 2)


def test_two_pieces_quarter_scale():
    K = IntervalUnion([(0, F(1, 4)), (F(3, 4), 1)])
    r = min_local_measure(K, F(1, 4))
    assert r.theta == F(1, 2)
    mass, _ = brute_force_local_measure(K, F(1, 4), STEP)
    assert mass / F(1, 2) == F(1, 2)


def test_profile_examples():
    prof = thickness_profile(IntervalUnion([]), [F(1, 8), F(1, 4)])
    assert prof.thetas == [1, 1]
    S = SvcSet(SvcParams.constant(F(1, 2)), 8)
    assert thickness_profile(S, [1]).thetas[0] >= F(1, 2)


@given(interval_unions(max_size=8, max_denominator=64),
       st.fractions(min_value=F(1, 64), max_value=F(1, 2), max_denominator=64))
def test_sweep_matches_brute_force(K, L):
    step = F(1, 2 ** 10)
    r = min_local_measure(K, L)
    mass, _ = brute_force_local_measure(K, L, step)
    sweep_mass = r.theta * 2 * L
    # the omega-mass is 1-Lipschitz in the centre
    assert sweep_mass <= mass <= sweep_mass + step
    # the reported argmin attains the minimum exactly
    x = r.argmin_x
    assert 2 * L - K.measure_in(x - L, x + L) == sweep_mass


@given(interval_unions(max_size=8), st.fractions(min_value=F(1, 128), max_value=2, max_denominator=128),
       small_rationals)
def test_translation_invariance(K, L, t):
    assert min_local_measure(K, L).theta == min_local_measure(K.translate(t), L).theta


@given(interval_unions(max_size=10), st.fractions(min_value=F(1, 512), max_value=4, max_denominator=512))
def test_theta_in_unit_interval(K, L):
    assert 0 <= min_local_measure(K, L).theta <= 1


def test_coarse_level_bound_is_certified():
    P = SvcParams.parametric(F(1, 2), 1, F(1, 2))
    S = SvcSet(P, 12)
    full = S.level(12)
    for L in (F(1, 16), F(1, 64), F(1, 200)):
        r = svc_min_local_measure(S, L)
        exact = min_local_measure(full, L).theta
        assert r.theta <= exact <= r.theta + r.truncation_bound


def test_constant_ratio_rejected():
    with pytest.raises(DivergentSeriesError):
        verify_svc_bounds(SvcParams.constant(F(1, 2)), 8, [F(1, 16)])


def test_series_tail_geometric_closed_form():
    P = SvcParams.geometric(F(1, 4), F(1, 4))
    for n in range(6):
        S, err = series_tail(P, n)
        assert err == 0 and S == F(1, 3) * F(1, 4) ** n


def test_series_tail_parametric_brackets_exact_sum():
    P = SvcParams.parametric(F(1, 2), 1, F(1, 2))
    for n in (0, 5, 12):
        S, err = series_tail(P, n)
        with mpmath.workdps(60):
            exact = mpmath.nsum(lambda k: mpmath.exp(-mpmath.power(2, k / 2)) / 2, [n, mpmath.inf])
            assert mpmath.mpf(S.numerator) / S.denominator <= exact * (1 + mpmath.mpf(2) ** -100)
            assert exact <= mpmath.mpf((S + err).numerator) / (S + err).denominator


def test_geometric_sandwich_is_power_law():
    P = SvcParams.geometric(F(1, 4), F(1, 4))
    Ls = log_spaced(F(1, 2 ** 12), F(1, 16), 12)
    rep = verify_svc_bounds(P, 16, Ls)
    assert rep.passed
    assert rep.c_fit > 0 and math.isfinite(rep.C_fit)
    # theta ~ L^2: the exponential model degenerates to alpha -> 0
    fit = fit_alpha(rep.profile())
    assert fit.alpha_hat < 0.1


def test_parametric_sandwich_passes():
    P = SvcParams.parametric(F(1, 2), 1, F(1, 2))
    rep = verify_svc_bounds(P, 16, log_spaced(F(1, 1024), F(1, 16), 10))
    assert rep.passed
    assert 0 < rep.c_fit < math.inf and 0 < rep.C_fit < math.inf
    for row in rep.rows:
        if rep.L0 is not None and row.L <= rep.L0:
            assert row.lower <= float(row.theta) <= row.upper * (1 + 1e-12)


def test_fit_alpha_self_consistent():
    Ls = [2.0 ** -k for k in range(4, 16)]
    fit = fit_alpha([(L, math.exp(-L ** -0.5)) for L in Ls])
    assert abs(fit.alpha_hat - 0.5) < 1e-6
    assert abs(fit.C_hat - 1) < 1e-5 and fit.r2 > 0.999


def test_fit_alpha_model_boundary():
    prof = ThicknessProfile([ThicknessSample(F(1, 2 ** k), F(1), F(0)) for k in range(2, 14)])
    with pytest.raises(FitError, match="theta at model boundary"):
        fit_alpha(prof)


def test_fit_alpha_zero_theta():
    with pytest.raises(FitError):
        fit_alpha([(F(1, 4), F(0))] + [(F(1, 2 ** k), F(1, 2)) for k in range(3, 12)])


def test_worst_point_is_a_minimiser():
    K = svc_construct(SvcParams.constant(F(1, 3)), 4)
    for L in (1 / 50, 1 / 20, 1 / 7):
        wp = worst_point(K, L)
        exact = float(min_local_measure(K, F(L)).theta) * 2 * L
        assert wp.omega_mass == pytest.approx(exact, abs=1e-12)
        assert wp.plateau[0] <= wp.x <= wp.plateau[1]


def test_worst_point_centres_the_plateau():
    # a window of radius 1/8 slides freely inside [0, 1]: plateau [1/8, 7/8]
    wp = worst_point(IntervalUnion([(0, 1)]), 1 / 8)
    assert wp.x == pytest.approx(0.5)
    assert wp.plateau == pytest.approx((1 / 8, 7 / 8))
    assert wp.omega_mass == pytest.approx(0.0, abs=1e-15)


def test_worst_point_inner_fraction():
    wp = worst_point(IntervalUnion([(0, 1)]), 1 / 8, inner_fraction=0.25)
    assert wp.omega_mass == pytest.approx(0.25 * 0.25)
