from __future__ import annotations

import math

import numpy as np
import pytest
from scipy import integrate

from fracthick.intervals import IntervalUnion
from fracthick.probe import (NecessityReport, ProbeError, ProbeFailure, ProbeParams,
                             asymptotic_g, check_exterior_decay, chi, eval_g, eval_g_many,
                             necessity_experiment, norm2_plancherel, principal_power, profile,
                             tail_constant)
from fracthick.spectral import GridField, GridSpec, evolve

P_HALF = ProbeParams(s=0.5)


def quad_oracle(params: ProbeParams, t: float, x: float) -> complex:
    """Adaptive Gauss-Kronrod of ``∫ F(eta) exp(i x eta / h) d eta`` over the cutoff support."""
    a, b = params.xi0 - params.w, params.xi0 + params.w
    pts = [params.xi0 - params.p, params.xi0, params.xi0 + params.p]

    def part(fn):
        val, _ = integrate.quad(lambda e: float(profile(params, t, np.array([e]))[0]) * fn(x * e / params.h),
                                a, b, points=pts, limit=2000, epsabs=0, epsrel=1e-12)
        return val

    return complex(part(math.cos), part(math.sin))


@pytest.mark.parametrize("kw", [dict(s=0), dict(s=1), dict(s=0.5, h=0), dict(s=0.5, w=1.2),
                                dict(s=0.5, p=0.95), dict(s=0.5, quad_points=32)])
def test_params_validation(kw):
    with pytest.raises(ProbeError):
        ProbeParams(**kw)


def test_beta_exact():
    assert ProbeParams(s=1 / 3).beta == (1 - 1 / 3) / 2


def test_negative_time_rejected():
    with pytest.raises(ProbeError):
        eval_g(P_HALF, -0.1, 0.0)


def test_cutoff_shape():
    w, p = P_HALF.w, P_HALF.p
    u = np.linspace(-p, p, 101)
    assert np.all(chi(u, w, p) == 1.0)
    assert chi(w, w, p) == 0 and chi(-w, w, p) == 0
    assert float(chi(w - 1e-3 * (w - p), w, p)) < 1e-300
    assert np.all(chi(np.array([1.0, 2.0, -1.5]), w, p) == 0)


@pytest.mark.parametrize("t, x", [(0.0, 0.0), (0.5, 0.0), (0.3, 0.1), (1.0, -0.2)])
def test_matches_adaptive_quadrature(t, x):
    P = ProbeParams(s=0.5, h=0.01)
    assert abs(eval_g(P, t, x) - quad_oracle(P, t, x)) <= 1e-8 * abs(quad_oracle(P, t, x))


def test_node_doubling_self_convergence():
    P = ProbeParams(s=0.5, h=2 ** -8)
    xs = np.linspace(-0.3, 0.3, 7)
    g = eval_g_many(P, 0.5, xs)
    assert np.all(g.error <= 1e-10 * np.abs(g.value))


def test_origin_value_is_gaussian_mass():
    for k in (6, 8, 10):
        h = 2.0 ** -k
        v = eval_g(P_HALF.with_h(h), 0.0, 0.0)
        assert abs(v / math.sqrt(2 * math.pi * h) - 1) < 1e-6


def test_modulus_at_time_zero():
    P = P_HALF.with_h(2 ** -8)
    for x in np.linspace(-0.11, 0.11, 9):
        ref = math.sqrt(2 * math.pi * P.h) * math.exp(-x * x / (2 * P.h))
        assert abs(eval_g(P, 0.0, x)) / ref == pytest.approx(1.0, abs=1e-6)


def test_far_field_is_tiny():
    P = P_HALF.with_h(2 ** -6)
    g = eval_g_many(P, 0.0, [100.0, -150.0, 400.0])
    assert np.all(np.abs(g.value) < 1e-8 * math.sqrt(P.h))


def test_certified_tail_bound():
    for s in (1 / 3, 0.5):
        P = ProbeParams(s=s, h=2 ** -6)
        for t in (0.0, 0.4):
            B = tail_constant(P, t)
            xs = np.array([0.5, 1.0, 2.0, -3.0])
            g = eval_g_many(P, t, xs)
            assert np.all(np.abs(g.value) <= (P.h / np.abs(xs)) ** 2 * B * (1 + 1e-9) + g.error)


def test_plancherel_matches_space_quadrature():
    P = P_HALF.with_h(2 ** -6)
    x, w = np.polynomial.legendre.leggauss(40)
    edges = np.linspace(-4, 4, 161)
    xs = np.concatenate([(a + b) / 2 + (b - a) / 2 * x for a, b in zip(edges[:-1], edges[1:])])
    ws = np.concatenate([(b - a) / 2 * w for a, b in zip(edges[:-1], edges[1:])])
    direct = float(np.sum(ws * np.abs(eval_g_many(P, 0.5, xs).value) ** 2))
    assert direct == pytest.approx(norm2_plancherel(P, 0.5), rel=1e-6)


def test_solves_fractional_heat_equation():
    P = ProbeParams(s=0.5, h=2 ** -4)
    grid = GridSpec(16.0, 1024)
    t, delta = 0.2, 0.3
    f = GridField.from_values(grid, eval_g_many(P, t, grid.x, certify=False).value)
    moved = evolve(f, delta, P.s)
    direct = eval_g_many(P, t + delta, grid.x, certify=False).value
    diff = GridField.from_values(grid, moved.values - direct)
    assert math.sqrt(diff.norm2() / moved.norm2()) < 1e-6


def test_principal_branch_guard():
    assert principal_power(complex(1, 0.5), 0.5).real > 0
    with pytest.raises(ProbeFailure):
        principal_power(complex(-1, 1e-9), 0.9)


def test_second_order_closed_form_close_at_small_h():
    P = P_HALF.with_h(2 ** -10)
    for t, x in ((0.0, 0.0), (0.5, 0.05), (1.0, -0.1)):
        v = eval_g(P, t, x)
        assert abs(v - asymptotic_g(P, t, x)) <= 0.01 * abs(v)


def _interior_norms(T: float, eta: float, hs: list[float]) -> np.ndarray:
    x, w = np.polynomial.legendre.leggauss(64)
    edges = np.linspace(-eta, eta, 33)
    xs = np.concatenate([(a + b) / 2 + (b - a) / 2 * x for a, b in zip(edges[:-1], edges[1:])])
    ws = np.concatenate([(b - a) / 2 * w for a, b in zip(edges[:-1], edges[1:])])
    return np.array([math.sqrt(np.sum(ws * np.abs(eval_g_many(P_HALF.with_h(h), T, xs).value) ** 2))
                     for h in hs])


HS = [2.0 ** -k for k in range(4, 11)]


@pytest.fixture(scope="module")
def interior_norms():
    return _interior_norms(1.0, 0.225, HS)


def _fit(hs, y, prefactor: float = 0.0):
    hs = np.asarray(hs)
    A = np.vstack([np.ones(len(hs)), -hs ** -0.5]).T
    (logc, C), *_ = np.linalg.lstsq(A, y - prefactor * np.log(hs), rcond=None)
    return math.exp(logc), C


def test_norm_lower_bound_rate_is_stable(interior_norms):
    y = np.log(interior_norms)
    _, C1 = _fit(HS[:4], y[:4])
    _, C2 = _fit(HS[3:], y[3:])
    assert 0.5 <= C1 / C2 <= 2


@pytest.mark.xfail(strict=True, reason="the h^(3/4) prefactor of the norm moves the bare c by about x4 over the sweep")
def test_norm_lower_bound_prefactor_is_stable(interior_norms):
    y = np.log(interior_norms)
    c1, _ = _fit(HS[:4], y[:4])
    c2, _ = _fit(HS[3:], y[3:])
    assert 0.5 <= c1 / c2 <= 2


def test_norm_lower_bound_with_algebraic_prefactor(interior_norms):
    # ||g_h(T)||_{L^2(|x| < eta)} ~ (2 pi)^(1/2) pi^(1/4) h^(3/4) exp(-T h^-s)
    y = np.log(interior_norms)
    c1, C1 = _fit(HS[:4], y[:4], 0.75)
    c2, C2 = _fit(HS[3:], y[3:], 0.75)
    assert C1 == pytest.approx(1.0, rel=0.05) and C2 == pytest.approx(1.0, rel=0.05)
    assert c1 / c2 == pytest.approx(1.0, rel=0.15)


def test_exterior_decay_rate_positive():
    rep = check_exterior_decay(P_HALF, 1.0, 0.225, [0.45, 0.9], HS)
    assert rep.passed and rep.c > 0


@pytest.mark.xfail(strict=True, reason="exterior decay is Gaussian in x, not |x|^-2: the prefactor drops far more than x4")
def test_exterior_prefactor_follows_inverse_square():
    rep = check_exterior_decay(P_HALF, 1.0, 0.225, [0.45, 0.9], HS)
    ratio = rep.prefactors[0.45] / rep.prefactors[0.9]
    assert 2 <= ratio <= 8


def test_exterior_needs_points_outside():
    with pytest.raises(ProbeError):
        check_exterior_decay(P_HALF, 1.0, 0.3, [0.2], HS)


def test_necessity_full_line_bounded_by_inverse_time():
    T = 0.1
    rep = necessity_experiment(None, ProbeParams(s=1 / 3), T, [2.0 ** -6, 2.0 ** -7], eta=0.2)
    assert isinstance(rep, NecessityReport)
    for row in rep.rows:
        assert row.ratio <= 1 / T * (1 + 1e-6)
        assert abs(row.lhs - row.lhs_plancherel) <= 1e-3 * row.lhs_plancherel
    assert rep.to_csv().splitlines()[0] == "h,t_max,lhs,rhs,ratio,eta,R"


def test_necessity_interval_set_exceeds_full_line():
    T = 0.1
    K = IntervalUnion([(-1, 1)])
    full = necessity_experiment(None, ProbeParams(s=1 / 3), T, [2.0 ** -6], eta=0.2)
    blocked = necessity_experiment(K, ProbeParams(s=1 / 3), T, [2.0 ** -6], eta=0.2)
    assert blocked.rows[0].ratio > full.rows[0].ratio
