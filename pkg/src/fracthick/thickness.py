"""Exact thickness profiles of complements of compact interval unions.

For ``omega = R minus K`` the map ``x -> Leb(omega ∩ [x - L, x + L])`` is
continuous and piecewise linear with breakpoints at ``endpoint ± L``, so
its infimum is attained at a window that starts at a left endpoint of K or
ends at a right endpoint of K.  :func:`min_local_measure` evaluates all of
those windows exactly with a two-pointer sweep.
"""

from __future__ import annotations

import csv
import heapq
import io
import math
from dataclasses import dataclass, field
from fractions import Fraction
from math import lcm
from typing import Iterable, Sequence

import numpy as np
from scipy import optimize

from .intervals import IntervalError, IntervalUnion, RationalLike, as_fraction
from .svc import DivergentSeriesError, SvcParams, SvcSet

EPS_BITS = 52


class FitError(ValueError):
    """A profile cannot be fitted by the exponential-thickness model."""


@dataclass(frozen=True)
class LocalMeasure:
    theta: Fraction
    argmin_x: Fraction
    depth_used: int | None = None
    truncation_bound: Fraction = Fraction(0)


@dataclass
class ThicknessSample:
    L: Fraction
    theta: Fraction
    argmin_x: Fraction
    depth_used: int | None = None
    truncation_bound: Fraction = Fraction(0)
    lower_bound: float | None = None
    upper_bound: float | None = None


@dataclass
class ThicknessProfile:
    samples: list[ThicknessSample]
    domain_note: str = "omega = R minus K with K inside [0, 1]"

    @property
    def Ls(self) -> list[Fraction]:
        return [s.L for s in self.samples]

    @property
    def thetas(self) -> list[Fraction]:
        return [s.theta for s in self.samples]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["L", "theta", "argmin_x", "lower_bound", "upper_bound"])
        for s in self.samples:
            w.writerow([_fmt_float(s.L), _fmt_float(s.theta), _fmt_float(s.argmin_x),
                        "" if s.lower_bound is None else _fmt_float(s.lower_bound),
                        "" if s.upper_bound is None else _fmt_float(s.upper_bound)])
        return buf.getvalue()


def _fmt_float(x: Fraction | float) -> str:
    return repr(float(x)) if float(x) != 0 or x == 0 else _tiny_repr(Fraction(x))


def _tiny_repr(x: Fraction) -> str:
    # below the float range: mantissa/exponent form from the exact value
    e = math.floor(log_fraction(x) / math.log(10))
    m = x / Fraction(10) ** e
    return f"{float(m):.16g}e{e}"


def log_fraction(x: Fraction) -> float:
    """Natural log of a positive Fraction of any size."""
    if x <= 0:
        raise ValueError("log of nonpositive value")
    return math.log(x.numerator) - math.log(x.denominator)


# ----------------------------------------------------------------------
# the sweep


def _window_sweep(lo: list[int], hi: list[int], w: int) -> tuple[int, int]:
    """Maximal K-mass over windows ``[u, u + w]``; returns ``(mass, u)``.

    ``lo``/``hi`` are sorted disjoint integer intervals.  Candidate starts
    are the left endpoints and ``hi - w``; both candidate streams and the
    matching window ends are nondecreasing, so G is evaluated by pointers.
    """
    n = len(lo)
    prefix = [0] * (n + 1)
    acc = 0
    for i in range(n):
        acc += hi[i] - lo[i]
        prefix[i + 1] = acc

    best_mass = -1
    best_u = 0
    i = 0  # intervals with lo < u are lo[:i]
    j = 0  # intervals with lo < u + w are lo[:j]
    for u in heapq.merge(lo, (b - w for b in hi)):
        while i < n and lo[i] <= u:
            i += 1
        v = u + w
        while j < n and lo[j] <= v:
            j += 1
        g_u = prefix[i - 1] + min(u, hi[i - 1]) - lo[i - 1] if i else 0
        g_v = prefix[j - 1] + min(v, hi[j - 1]) - lo[j - 1] if j else 0
        mass = g_v - g_u
        if mass > best_mass:
            best_mass = mass
            best_u = u
    return best_mass, best_u


def min_local_measure(K: IntervalUnion, L: RationalLike) -> LocalMeasure:
    """Exact ``inf_x Leb(omega ∩ B(x, L)) / (2L)`` for ``omega = R minus K``."""
    L = as_fraction(L)
    if L <= 0:
        raise IntervalError("L must be positive")
    if not K:
        return LocalMeasure(Fraction(1), -L)
    den = lcm(K.den, L.denominator)
    lo, hi = K.rescaled(den)
    ell = L.numerator * (den // L.denominator)
    w = 2 * ell
    mass, u = _window_sweep(lo, hi, w)
    if mass <= 0:
        return LocalMeasure(Fraction(1), Fraction(lo[0] - ell, den))
    theta = Fraction(w - mass, w)
    return LocalMeasure(theta, Fraction(u + ell, den))


@dataclass(frozen=True)
class WorstPoint:
    x: float
    omega_mass: float
    plateau: tuple[float, float]


def worst_point(K: IntervalUnion, L: float, inner_fraction: float = 0.0,
                rtol: float = 1e-12) -> WorstPoint:
    """Centre of the plateau of worst-thickness points at scale L.

    The omega-mass ``m(x) = Leb(omega ∩ [x - L, x + L])`` is piecewise linear
    and its minimum is often attained on a whole interval of centres (a
    window sliding inside a piece of K).  The minimiser returned here is the
    midpoint of the connected set ``{m <= min m + rtol * 2L}`` that contains
    the left-most minimiser, so it sits as deep inside K as the ties allow.

    ``inner_fraction`` is the share of every piece of K that is in fact
    removed at finer levels; it is spread uniformly over the pieces.
    Float arithmetic; the exact value of the minimum is
    :func:`min_local_measure`.
    """
    if L <= 0:
        raise IntervalError("L must be positive")
    w = 2.0 * L
    if not K:
        return WorstPoint(0.0, w, (-math.inf, math.inf))
    lo_l, hi_l = K.as_floats()
    lo = np.asarray(lo_l)
    hi = np.asarray(hi_l)
    lengths = hi - lo
    prefix = np.concatenate([[0.0], np.cumsum(lengths)])
    keep = 1.0 - inner_fraction

    def covered_upto(y: np.ndarray) -> np.ndarray:
        i = np.searchsorted(lo, y, side="right")
        full = prefix[np.maximum(i - 1, 0)]
        part = np.where(i > 0, np.clip(y - lo[np.maximum(i - 1, 0)], 0.0,
                                       lengths[np.maximum(i - 1, 0)]), 0.0)
        return full + part

    def mass(u: np.ndarray) -> np.ndarray:
        return w - keep * (covered_upto(u + w) - covered_upto(u))

    u = np.unique(np.concatenate([lo - w, lo, hi - w, hi]))
    m = mass(u)
    k = int(np.argmin(m))
    thr = m[k] + rtol * w
    a = k
    while a > 0 and m[a - 1] <= thr:
        a -= 1
    b = k
    while b + 1 < u.size and m[b + 1] <= thr:
        b += 1

    def crossing(i: int, j: int) -> float:
        # point between breakpoints u[i], u[j] where the linear m meets thr
        if m[j] == m[i]:
            return float(u[i])
        return float(u[i] + (thr - m[i]) * (u[j] - u[i]) / (m[j] - m[i]))

    left = crossing(a, a - 1) if a > 0 else float(u[a])
    right = crossing(b, b + 1) if b + 1 < u.size else float(u[b])
    centre = 0.5 * (left + right) + L
    return WorstPoint(centre, float(mass(np.array([centre - L]))[0]), (left + L, right + L))


def brute_force_local_measure(K: IntervalUnion, L: RationalLike, step: RationalLike,
                              lo_x: RationalLike | None = None,
                              hi_x: RationalLike | None = None) -> tuple[Fraction, Fraction]:
    """Minimum omega-mass over a grid of centers; returns ``(mass, x)``.

    Independent of the sweep: every grid point gets its own exact overlap
    computation.  Meant for small unions in tests.
    """
    L, step = as_fraction(L), as_fraction(step)
    hull = K.hull() or (Fraction(0), Fraction(0))
    x0 = as_fraction(lo_x) if lo_x is not None else hull[0] - L
    x1 = as_fraction(hi_x) if hi_x is not None else hull[1] + L
    pieces = K.intervals
    best = None
    k0 = math.floor(x0 / step)
    k1 = math.ceil(x1 / step)
    for k in range(k0, k1 + 1):
        x = k * step
        a, b = x - L, x + L
        covered = sum((min(b, q) - max(a, p) for p, q in pieces if q > a and p < b), Fraction(0))
        m = 2 * L - covered
        if best is None or m < best[0]:
            best = (m, x)
    return best


# ----------------------------------------------------------------------
# SVC-specific queries


def svc_min_local_measure(svc: SvcSet, L: RationalLike, level_ratio: int = 16) -> LocalMeasure:
    """Thickness of ``R minus K_depth`` at scale L, computed on a coarser level.

    The sweep runs on ``K_d`` with ``d`` the first level whose pieces are
    shorter than ``L / level_ratio``.  Since ``K_depth ⊂ K_d`` the result is a
    lower bound, and the omitted levels can add at most
    ``(1 + l_d / L) * (1 - prod_{d <= j < depth} (1 - r_j))`` to theta.  That
    certified bound is returned with the exact theta of ``K_d``.
    """
    L = as_fraction(L)
    if L <= 0:
        raise IntervalError("L must be positive")
    d = svc.level_for_scale(L, level_ratio)
    res = min_local_measure(svc.level(d), L)
    bound = (1 + svc.lengths[d] / L) * (1 - svc.survival(d, svc.depth))
    return LocalMeasure(res.theta, res.argmin_x, d, bound)


def thickness_profile(K: IntervalUnion | SvcSet, Ls: Iterable[RationalLike]) -> ThicknessProfile:
    """``min_local_measure`` at every scale, sorted by L."""
    Ls = sorted(as_fraction(L) for L in Ls)
    samples = []
    for L in Ls:
        if isinstance(K, SvcSet):
            r = svc_min_local_measure(K, L)
        else:
            r = min_local_measure(K, L)
        samples.append(ThicknessSample(L, r.theta, r.argmin_x, r.depth_used, r.truncation_bound))
    return ThicknessProfile(samples)


def log_spaced(lo: RationalLike, hi: RationalLike, count: int, bits: int = 40) -> list[Fraction]:
    """``count`` dyadic rationals approximately log-spaced in ``[lo, hi]``."""
    lo, hi = as_fraction(lo), as_fraction(hi)
    if count < 2:
        return [lo]
    out = []
    for t in np.linspace(math.log(lo), math.log(hi), count):
        v = Fraction(round(math.exp(t) * 2 ** bits), 2 ** bits)
        out.append(v)
    out[0], out[-1] = lo, hi
    return out


# ----------------------------------------------------------------------
# series helpers


def check_convergence(params: SvcParams, cap: int = 4096) -> int:
    """Index at which the partial sums of ``r_k`` stagnate to double precision.

    Raises DivergentSeriesError if no stagnation happens within ``cap`` terms.
    """
    if params.mode == "constant":
        raise DivergentSeriesError("constant gap ratio: sum of r_k diverges")
    if params.mode == "geometric" and params.ratio == 1:
        raise DivergentSeriesError("geometric ratio 1: sum of r_k diverges")
    limit = params.defined_upto()
    total = Fraction(0)
    n = 0
    while True:
        if limit is not None and n >= limit:
            raise DivergentSeriesError(
                f"partial sums have not stagnated within the {limit} given terms")
        if n >= cap:
            raise DivergentSeriesError(f"partial sums have not stagnated within {cap} terms")
        r = params.r(n)
        total += r
        if r * 2 ** EPS_BITS < total:
            return n
        n += 1


def series_tail(params: SvcParams, n: int) -> tuple[Fraction, Fraction]:
    """``(S, err)`` with ``sum_{k >= n} r_k`` in ``[S, S + err]``."""
    n = max(n, 0)
    if params.mode == "constant":
        raise DivergentSeriesError("constant gap ratio: sum of r_k diverges")
    if params.mode == "geometric":
        if params.ratio == 1:
            raise DivergentSeriesError("geometric ratio 1: sum of r_k diverges")
        return params.first * params.ratio ** n / (1 - params.ratio), Fraction(0)
    if params.mode == "explicit":
        vals = params.values
        return sum(vals[n:], Fraction(0)), Fraction(0)
    # parametric: r_{k+1} / r_k <= 1/2 once C 2^{k alpha} (2^alpha - 1) >= ln 2,
    # after which the remainder is at most twice the next term
    C = float(params.C)
    a = float(params.alpha)
    total = Fraction(0)
    k = n
    while True:
        r = params.r(k)
        total += r
        nxt = params.r(k + 1)
        halving = C * 2 ** (k * a) * (2 ** a - 1) >= math.log(2) + 1e-12
        if halving and nxt * 2 ** (params.precision_bits + 8) < total:
            # rounding of each term only adds relative 2^-bits; fold that in
            return total, 2 * nxt + total / 2 ** (params.precision_bits - 2)
        k += 1


def ceil_log2(x: Fraction) -> int:
    """Smallest integer n with ``2**n >= x`` (exact, x > 0)."""
    if x <= 0:
        raise ValueError("ceil_log2 of nonpositive value")
    p, q = x.numerator, x.denominator
    n = p.bit_length() - q.bit_length()
    # adjust until 2^(n-1) < x <= 2^n
    while _pow2_ge(n, p, q) is False:
        n += 1
    while _pow2_ge(n - 1, p, q):
        n -= 1
    return n


def _pow2_ge(n: int, p: int, q: int) -> bool:
    # 2^n >= p/q
    if n >= 0:
        return (q << n) >= p
    return q >= (p << -n)


# ----------------------------------------------------------------------
# sandwich verification


@dataclass
class SandwichRow:
    L: Fraction
    theta: Fraction
    lower_index: int
    upper_index: int
    lower_sum: Fraction
    upper_sum: Fraction
    lower: float | None = None
    upper: float | None = None
    passed: bool | None = None
    truncation_bound: Fraction = Fraction(0)
    argmin_x: Fraction = Fraction(0)


@dataclass
class SandwichReport:
    rows: list[SandwichRow]
    c0: Fraction
    c0_truncation_bound: Fraction
    c_fit: float
    C_fit: float
    L0: Fraction | None
    kappa: Fraction
    passed: bool
    rounding_note: str = ""
    extras: dict = field(default_factory=dict)

    def profile(self) -> ThicknessProfile:
        return ThicknessProfile([
            ThicknessSample(r.L, r.theta, r.argmin_x, None, r.truncation_bound, r.lower, r.upper)
            for r in self.rows])


def verify_svc_bounds(params: SvcParams, depth: int, Ls: Sequence[RationalLike],
                      kappa: RationalLike = 3, level_ratio: int = 16) -> SandwichReport:
    """Check ``c * sum_{k >= n_lo(L)} r_k <= theta(L) <= C * sum_{k >= n_hi(L)} r_k``.

    ``n_lo = ceil(log2(kappa c0 / L))`` and ``n_hi = ceil(log2(c0 / 4L))``.
    ``c`` and ``C`` are the extremal constants over the sampled scales up to
    ``L0``, the largest sampled L with ``n_lo(L) >= 1``.
    """
    kappa = as_fraction(kappa)
    check_convergence(params)
    Ls = sorted(as_fraction(L) for L in Ls)
    if not Ls:
        raise IntervalError("no scales given")
    svc = SvcSet(params, depth)
    if svc.lengths[depth] * level_ratio >= Ls[0]:
        raise IntervalError(
            f"depth {depth} too shallow: l_depth = {float(svc.lengths[depth]):.3g} "
            f"is not below min(L)/{level_ratio}")
    c0 = svc.measure()
    c0_tail, c0_tail_err = series_tail(params, depth)
    rows = []
    for L in Ls:
        res = svc_min_local_measure(svc, L, level_ratio)
        n_lo = max(ceil_log2(kappa * c0 / L), 0)
        n_hi = max(ceil_log2(c0 / (4 * L)), 0)
        lo_sum, _ = series_tail(params, n_lo)
        hi_sum, _ = series_tail(params, n_hi)
        # the reported theta must bound the untruncated set as well
        bound = res.truncation_bound + (1 + svc.lengths[depth] / L) * (c0_tail + c0_tail_err)
        rows.append(SandwichRow(L, res.theta, n_lo, n_hi, lo_sum, hi_sum,
                                truncation_bound=bound, argmin_x=res.argmin_x))
    eligible = [r for r in rows if r.lower_index >= 1]
    L0 = max((r.L for r in eligible), default=None)
    used = [r for r in rows if L0 is not None and r.L <= L0]
    passed = bool(used) and all(r.theta > 0 for r in used)
    if passed:
        c_fit = min(r.theta / r.lower_sum for r in used)
        C_fit = max((r.theta + r.truncation_bound) / r.upper_sum for r in used)
        for r in rows:
            r.lower = float(c_fit * r.lower_sum)
            r.upper = float(C_fit * r.upper_sum)
            r.passed = (c_fit * r.lower_sum <= r.theta
                        and r.theta + r.truncation_bound <= C_fit * r.upper_sum)
        passed = all(r.passed for r in used)
        c_fit, C_fit = float(c_fit), float(C_fit)
    else:
        c_fit, C_fit = float("nan"), float("nan")
    note = ""
    if params.mode == "parametric":
        note = f"r_n rounded to {params.precision_bits} significant bits (relative error <= 2^-{params.precision_bits})"
    return SandwichReport(rows, c0, c0_tail + c0_tail_err, c_fit, C_fit, L0, kappa, passed, note)


# ----------------------------------------------------------------------
# exponential-thickness fit


@dataclass(frozen=True)
class AlphaFit:
    alpha_hat: float
    c_hat: float
    C_hat: float
    r2: float


def _regress(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float, float]:
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss_res = float(resid @ resid)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(coef[0]), float(coef[1]), ss_res, r2


def fit_alpha(profile: ThicknessProfile | Sequence[tuple[RationalLike | float, RationalLike | float]],
              min_samples: int = 8, alpha_bounds: tuple[float, float] = (1e-3, 4.0)) -> AlphaFit:
    """Fit ``theta(L) ~ c exp(-C L^-alpha)`` to a thickness profile.

    ``log theta = log c - C L^-alpha`` is linear in ``(log c, C)`` for fixed
    alpha, so alpha is found by a bounded scalar search over the projected
    residual.  ``r2`` is the coefficient of determination of the line
    ``log(-log(theta / c_hat))`` against ``log L``, whose slope is ``-alpha``.
    Samples with ``theta = 1`` carry no information and are skipped.
    """
    if isinstance(profile, ThicknessProfile):
        pairs = [(s.L, s.theta) for s in profile.samples]
    else:
        pairs = list(profile)
    logL, logT = [], []
    for L, th in pairs:
        lt = _log_any(th)
        if lt is None:
            raise FitError(f"theta = 0 at L = {float(L):.6g}: not exponentially thick at this scale")
        if lt >= 0:
            continue
        logL.append(_log_any(L))
        logT.append(lt)
    if not logL and pairs:
        raise FitError("theta at model boundary (theta = 1 at every sample)")
    if len(logL) < min_samples:
        raise FitError(f"{len(logL)} usable samples, need {min_samples}")
    x = np.asarray(logL)
    lt = np.asarray(logT)

    def projected(alpha: float) -> tuple[float, np.ndarray]:
        A = np.vstack([np.ones_like(x), -np.exp(-alpha * x)]).T
        coef, *_ = np.linalg.lstsq(A, lt, rcond=None)
        resid = lt - A @ coef
        return float(resid @ resid), coef

    res = optimize.minimize_scalar(lambda a: projected(a)[0], bounds=alpha_bounds,
                                   method="bounded", options={"xatol": 1e-12, "maxiter": 1000})
    alpha = float(res.x)
    _, (log_c, C) = projected(alpha)
    if C <= 0:
        raise FitError("fitted C is not positive: profile does not decay as L shrinks")
    gap = log_c - lt
    if np.any(gap <= 0):
        raise FitError("theta exceeds the fitted prefactor c; model does not apply")
    _, _, _, r2 = _regress(x, np.log(gap))
    return AlphaFit(alpha_hat=alpha, c_hat=math.exp(log_c), C_hat=float(C), r2=max(0.0, min(1.0, r2)))


def _log_any(v) -> float | None:
    if isinstance(v, Fraction):
        return None if v <= 0 else log_fraction(v)
    v = float(v)
    return None if v <= 0 else math.log(v)
