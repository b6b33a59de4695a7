"""Coherent-state test functions for the fractional heat equation.

For a frequency ``xi0 > 0``, a semiclassical parameter ``h > 0`` and a cutoff
``chi`` supported in ``(-w, w)`` with ``chi = 1`` on ``[-p, p]``,

    g_h(t, x) = ∫ chi(eta - xi0) exp(-(eta - xi0)^2 / 2h + i x eta / h - t eta^s h^-s) d eta

solves ``(d_t + (-Δ)^{s/2}) g = 0`` and is a Gaussian wave packet of width
``sqrt(h)`` travelling at frequency ``xi0 / h``.  The integral is evaluated
with the trapezoid rule, which converges faster than any power for the
smooth compactly supported integrand.  The integrand in ``eta`` is called
the profile ``F``; by Plancherel ``||g(t, .)||^2 = 2 pi h ∫ |F|^2``.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from . import kernels


class ProbeError(ValueError):
    """Invalid probe parameters."""


class ProbeFailure(RuntimeError):
    """A numerical certificate could not be established."""


@dataclass(frozen=True)
class ProbeParams:
    """Parameters of ``g_h``.

    Attributes
    ----------
    s : float
        Order of the fractional Laplacian, ``0 < s < 1``.
    xi0 : float
        Centre frequency.
    h : float
        Semiclassical parameter.
    w, p : float
        Support and plateau half-widths of the cutoff, ``0 < p < w < xi0``.
    quad_points : int
        Minimum number of trapezoid panels; more are used for large ``|x|/h``.
    """

    s: float
    xi0: float = 1.0
    h: float = 2.0 ** -6
    w: float = 0.9
    p: float = 0.6
    quad_points: int = 256

    def __post_init__(self) -> None:
        if not 0 < self.s < 1:
            raise ProbeError("s must lie in (0, 1)")
        if not self.h > 0:
            raise ProbeError("h must be positive")
        if not 0 < self.p < self.w < self.xi0:
            raise ProbeError("need 0 < p < w < xi0")
        if self.quad_points < 64:
            raise ProbeError("quad_points must be at least 64")

    @property
    def beta(self) -> float:
        return (1 - self.s) / 2

    def with_h(self, h: float) -> "ProbeParams":
        return replace(self, h=float(h))

    def to_json_obj(self) -> dict:
        return asdict(self)


def _smoothstep(tau: np.ndarray) -> np.ndarray:
    # C^infinity step from 0 (tau <= 0) to 1 (tau >= 1)
    tau = np.clip(tau, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(tau > 0, np.exp(-1.0 / np.where(tau > 0, tau, 1.0)), 0.0)
        b = np.where(tau < 1, np.exp(-1.0 / np.where(tau < 1, 1.0 - tau, 1.0)), 0.0)
    return a / (a + b)


def chi(u: np.ndarray | float, w: float, p: float) -> np.ndarray:
    """Even cutoff, 1 on ``[-p, p]`` and 0 outside ``(-w, w)``.

    The transition is the standard ``exp(-1/tau)`` smooth step, so every
    derivative vanishes at ``|u| = p`` and ``|u| = w``.
    """
    u = np.abs(np.asarray(u, dtype=float))
    return _smoothstep((w - u) / (w - p))


def profile(params: ProbeParams, t: float, eta: np.ndarray) -> np.ndarray:
    """Integrand ``F(eta)`` of ``g_h(t, .)`` without the oscillating factor."""
    u = eta - params.xi0
    with np.errstate(under="ignore"):
        return chi(u, params.w, params.p) * np.exp(
            -u * u / (2 * params.h) - t * eta ** params.s * params.h ** -params.s)


def node_count(params: ProbeParams, xmax: float) -> int:
    """Trapezoid panels resolving ``exp(i x eta / h)`` for ``|x| <= xmax``.

    The step keeps the first alias of the Gaussian spectrum beyond the
    oscillation frequency, so tiny exterior values are not swamped.
    """
    h = params.h
    band = 2 * abs(xmax) / h + 12 / math.sqrt(h) + 200
    n = int(math.ceil(1.25 * params.w * band / math.pi))
    n = max(n, params.quad_points)
    return 1 << (n - 1).bit_length()


def _nodes(params: ProbeParams, n: int) -> tuple[np.ndarray, float]:
    step = 2 * params.w / n
    eta = params.xi0 - params.w + step * np.arange(1, n)
    return eta, step


def _eval(params: ProbeParams, t: float, xs: np.ndarray, n: int) -> np.ndarray:
    eta, step = _nodes(params, n)
    amp = (step * profile(params, t, eta)).astype(np.complex128)
    return kernels.coherent_sum(eta, amp, xs, 1.0 / params.h)


def rounding_floor(params: ProbeParams, t: float, n: int) -> float:
    """Size of the rounding error of a trapezoid sum, ``~ eps * sum |amp|``."""
    eta, step = _nodes(params, n)
    return float(64 * np.finfo(float).eps * step * np.sum(profile(params, t, eta)))


@dataclass
class GValues:
    """Values of ``g_h(t, .)`` with a node-doubling error estimate."""

    x: np.ndarray
    value: np.ndarray
    error: np.ndarray
    nodes: int
    floor: float = 0.0   # rounding level of the trapezoid sum

    def resolved(self, factor: float = 10.0) -> np.ndarray:
        """Mask of values well above both the quadrature error and the floor."""
        return np.abs(self.value) > factor * np.maximum(self.error, self.floor)


def eval_g_many(params: ProbeParams, t: float, xs: Sequence[float] | np.ndarray,
                certify: bool = True) -> GValues:
    """``g_h(t, x)`` on an array of points.

    The points are processed in blocks of similar ``|x|`` so the node count
    tracks the local oscillation.  With ``certify`` every block is recomputed
    on twice as many nodes and the difference is returned as the error.
    """
    if t < 0:
        raise ProbeError("t must be nonnegative")
    xs = np.asarray(xs, dtype=float).ravel()
    out = np.empty(xs.shape, dtype=np.complex128)
    err = np.zeros(xs.shape, dtype=float)
    order = np.argsort(np.abs(xs), kind="stable")
    most = 0
    floor = 0.0
    for start in range(0, xs.size, 512):
        idx = order[start:start + 512]
        n = node_count(params, float(np.abs(xs[idx]).max()))
        v = _eval(params, t, xs[idx], n)
        if certify:
            v2 = _eval(params, t, xs[idx], 2 * n)
            err[idx] = np.abs(v2 - v)
            v = v2
            n *= 2
        out[idx] = v
        if n > most:
            most = n
            floor = rounding_floor(params, t, n)
    return GValues(xs, out, err, most, floor)


def eval_g(params: ProbeParams, t: float, x: float) -> complex:
    """``g_h(t, x)`` by the trapezoid rule."""
    if t < 0:
        raise ProbeError("t must be nonnegative")
    n = node_count(params, abs(x))
    return complex(_eval(params, t, np.array([float(x)]), n)[0])


def norm2_plancherel(params: ProbeParams, t: float, n: int | None = None) -> float:
    """``||g_h(t, .)||^2_{L^2(R)} = 2 pi h ∫ |F|^2``."""
    n = n or max(params.quad_points, 4096)
    eta, step = _nodes(params, n)
    F = profile(params, t, eta)
    return float(2 * math.pi * params.h * step * np.sum(np.abs(F) ** 2))


def tail_constant(params: ProbeParams, t: float, n: int = 1 << 16) -> float:
    """``∫ |F''|``, so that ``|g_h(t, x)| <= (h / x)^2 ∫ |F''|``.

    Integration by parts twice; F vanishes to all orders at the support
    ends.  The derivative is taken spectrally on a fine periodic grid.
    """
    eta, step = _nodes(params, n)
    F = np.concatenate([[0.0], profile(params, t, eta)])
    k = 2 * math.pi * np.fft.rfftfreq(F.size, d=step)
    F2 = np.fft.irfft(-(k ** 2) * np.fft.rfft(F), n=F.size)
    return float(step * np.sum(np.abs(F2)))


# ----------------------------------------------------------------------
# asymptotics


def principal_power(z: complex, s: float) -> complex:
    """``z^s`` on the principal branch, asserting ``Re z^s > 0``."""
    zs = cmath.exp(s * cmath.log(z))
    if not zs.real > 0:
        raise ProbeFailure(f"principal branch left the right half-plane at z = {z}")
    return zs


def asymptotic_g(params: ProbeParams, t: float, x: float, second_order: bool = True) -> complex:
    """Closed-form approximation of ``g_h(t, x)`` near ``x = 0``.

    ``sqrt(2 pi h) exp(i x xi0/h - x^2/2h - t z^s h^-s)`` with ``z = xi0 + i x``.
    With ``second_order`` the exponent also carries the next term of the
    stationary-phase expansion, ``t^2 s^2 z^(2s-2) h^(1-2s) / 2``, which is
    not small unless ``s < 1/2``; the remaining relative error is
    ``O(h^(1-s))``.
    """
    h, s = params.h, params.s
    z = complex(params.xi0, x)
    zs = principal_power(z, s)
    expo = 1j * x * params.xi0 / h - x * x / (2 * h) - t * zs * h ** -s
    if second_order:
        expo += 0.5 * t * t * s * s * cmath.exp((2 * s - 2) * cmath.log(z)) * h ** (1 - 2 * s)
    return math.sqrt(2 * math.pi * h) * cmath.exp(expo)


@dataclass
class ProbeResult:
    h: float
    t: float
    x: float
    value: complex
    asymptotic_value: complex
    rel_error: float
    beta: float
    eta: float


def _fit_slope(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    A = np.vstack([x, np.ones_like(x)]).T
    (slope, icept), *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(slope), float(icept)


def _max_interior_error(params: ProbeParams, ts: np.ndarray, xs: np.ndarray,
                        second_order: bool, eta: float) -> ProbeResult:
    worst = None
    for t in ts:
        vals = eval_g_many(params, float(t), xs).value
        for x, v in zip(xs, vals):
            a = asymptotic_g(params, float(t), float(x), second_order)
            err = abs(v - a) / abs(a)
            if worst is None or err > worst.rel_error:
                worst = ProbeResult(params.h, float(t), float(x), complex(v), a, err,
                                    params.beta, eta)
    return worst


def dyadic_hs(k0: int = 4, k1: int = 10) -> list[float]:
    return [2.0 ** -k for k in range(k0, k1 + 1)]


def determine_eta(params: ProbeParams, T: float, hs: Sequence[float] | None = None,
                  threshold: float = 0.1, step: float | None = None, nt: int = 5) -> float:
    """Largest radius on a grid where the asymptotics hold to ``threshold``.

    Every radius up to the returned one keeps the relative error of the
    second-order closed form below ``threshold`` for all ``t`` in ``[0, T]``
    and every ``h`` of the sweep.
    """
    hs = list(hs) if hs is not None else dyadic_hs()
    step = step or params.xi0 / 40
    ts = np.linspace(0.0, T, nt)
    eta = 0.0
    k = 1
    while k * step < params.xi0:
        r = k * step
        for h in hs:
            P = params.with_h(h)
            if _max_interior_error(P, ts, np.array([-r, r]), True, r).rel_error >= threshold:
                return eta
        eta = r
        k += 1
    return eta


@dataclass
class InteriorReport:
    hs: list[float]
    eta: float
    second_order: bool
    worst: list[ProbeResult]
    order: float
    constant: float
    expected_order: float
    monotone: bool
    passed: bool

    @property
    def errors(self) -> list[float]:
        return [w.rel_error for w in self.worst]


def check_interior_asymptotics(params: ProbeParams, T: float, eta: float,
                               tolerance: float = 0.3, hs: Sequence[float] | None = None,
                               nt: int = 5, nx: int = 9,
                               second_order: bool = True) -> InteriorReport:
    """Compare ``g_h`` with its closed form on ``[0, T] x [-eta, eta]``.

    The worst relative error per ``h`` is fitted as ``c h^order``.  The check
    passes when the errors decrease along the sweep (one inversion allowed)
    and ``|order - (1 - s)| <= tolerance``.
    """
    if eta >= params.xi0:
        raise ProbeError("eta must be smaller than xi0")
    if eta <= 0:
        raise ProbeError("eta must be positive")
    hs = sorted(hs if hs is not None else dyadic_hs(), reverse=True)
    ts = np.linspace(0.0, T, nt)
    xs = np.linspace(-eta, eta, nx)
    worst = [_max_interior_error(params.with_h(h), ts, xs, second_order, eta) for h in hs]
    errs = np.array([w.rel_error for w in worst])
    order, icept = _fit_slope(np.log(hs), np.log(errs))
    inversions = int(np.sum(np.diff(errs) > 0))
    expected = 1 - params.s
    monotone = inversions <= 1 and errs[-1] < errs[0]
    passed = monotone and abs(order - expected) <= tolerance
    return InteriorReport(list(hs), eta, second_order, worst, order, math.exp(icept),
                          expected, monotone, passed)


@dataclass
class ExteriorReport:
    hs: list[float]
    x_list: list[float]
    sup_abs: np.ndarray            # max over t of |g_h(t, x)|, shape (len(hs), len(x_list))
    resolved: np.ndarray
    c: float
    C: float
    prefactors: dict[float, float]
    passed: bool


def check_exterior_decay(params: ProbeParams, T: float, eta: float, x_list: Sequence[float],
                         hs: Sequence[float] | None = None, nt: int = 5) -> ExteriorReport:
    """Fit ``sup_t |g_h(t, x)| <= C |x|^-2 exp(-c / h)`` outside ``[-eta, eta]``.

    Values that drown in quadrature error or rounding are excluded.  A
    second fit with one prefactor per ``x`` (common ``c``) measures the
    ``|x|^-2`` dependence.
    """
    x_list = [float(x) for x in x_list]
    if any(abs(x) <= eta for x in x_list):
        raise ProbeError("exterior decay needs |x| > eta")
    hs = sorted(hs if hs is not None else dyadic_hs(), reverse=True)
    ts = np.linspace(0.0, T, nt)
    sup = np.zeros((len(hs), len(x_list)))
    ok = np.ones_like(sup, dtype=bool)
    for i, h in enumerate(hs):
        P = params.with_h(h)
        for t in ts:
            gv = eval_g_many(P, float(t), x_list)
            a = np.abs(gv.value)
            sup[i] = np.maximum(sup[i], a)
            ok[i] &= gv.resolved() | (a < sup[i])
    ok &= sup > 0
    rows_h, rows_x = np.nonzero(ok)
    if rows_h.size < 3:
        raise ProbeFailure("too few resolved exterior values to fit a decay rate")
    inv_h = np.array([1.0 / hs[i] for i in rows_h])
    ax = np.array([abs(x_list[j]) for j in rows_x])
    y = np.log(sup[rows_h, rows_x]) + 2 * np.log(ax)
    slope, icept = _fit_slope(inv_h, y)
    c = -slope
    # common rate, one prefactor per x
    cols = [np.asarray(rows_x == j, dtype=float) for j in range(len(x_list))]
    A = np.vstack([-inv_h] + cols).T
    coef, *_ = np.linalg.lstsq(A, np.log(sup[rows_h, rows_x]), rcond=None)
    prefactors = {x_list[j]: float(math.exp(coef[1 + j])) for j in range(len(x_list))
                  if np.any(rows_x == j)}
    return ExteriorReport(list(hs), x_list, sup, ok, float(c), math.exp(icept), prefactors,
                          bool(c > 0))


# ----------------------------------------------------------------------
# necessity experiment


@dataclass
class NecessityRow:
    h: float
    t_max: float
    lhs: float
    rhs: float
    ratio: float
    eta: float
    R: float
    L: float = 0.0
    shift: float = 0.0
    omega_mass: float = 0.0
    lhs_plancherel: float = 0.0
    lhs_tail_bound: float = 0.0
    rhs_error: float = 0.0
    level: int | None = None


@dataclass
class NecessityReport:
    rows: list[NecessityRow]
    params: ProbeParams
    T: float
    r: float
    set_note: str
    certificates: dict = field(default_factory=dict)

    @property
    def ratios(self) -> list[float]:
        return [row.ratio for row in self.rows]

    @property
    def growth(self) -> float:
        """``ratio`` at the smallest ``h`` over ``ratio`` at the largest."""
        rows = sorted(self.rows, key=lambda row: -row.h)
        return rows[-1].ratio / rows[0].ratio

    @property
    def spread(self) -> float:
        """``max ratio / min ratio`` over the sweep."""
        return max(self.ratios) / min(self.ratios)

    CSV_FIELDS = ("h", "t_max", "lhs", "rhs", "ratio", "eta", "R")

    def to_csv(self) -> str:
        lines = [",".join(self.CSV_FIELDS)]
        for row in self.rows:
            lines.append(",".join(repr(float(getattr(row, f))) for f in self.CSV_FIELDS))
        return "\n".join(lines) + "\n"


def _gl_points(intervals: Iterable[tuple[float, float]], width: float,
               small: float) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes on a list of intervals.

    Intervals shorter than ``small`` get the two-point rule; longer ones are
    cut into panels of at most ``width`` with eight points each.
    """
    g2x, g2w = np.polynomial.legendre.leggauss(2)
    g8x, g8w = np.polynomial.legendre.leggauss(8)
    xs, ws = [], []
    for a, b in intervals:
        if b <= a:
            continue
        if b - a <= small:
            mid, half = (a + b) / 2, (b - a) / 2
            xs.append(mid + half * g2x)
            ws.append(half * g2w)
            continue
        n = int(math.ceil((b - a) / width))
        edges = np.linspace(a, b, n + 1)
        mid = (edges[1:] + edges[:-1]) / 2
        half = (edges[1:] - edges[:-1]) / 2
        xs.append((mid[:, None] + half[:, None] * g8x).ravel())
        ws.append((half[:, None] * g8w).ravel())
    if not xs:
        return np.zeros(0), np.zeros(0)
    return np.concatenate(xs), np.concatenate(ws)


def _tail_radius(params: ProbeParams, t: float, target: float, r_min: float,
                 r_max: float) -> tuple[float, float]:
    """Radius R with ``∫_{|x|>R} |g|^2 <= target`` from the ``(h/x)^2`` bound."""
    B = (params.h ** 2 * tail_constant(params, t)) ** 2
    # ∫_{|x|>R} B / x^4 dx = 2 B / (3 R^3)
    R = max(r_min, (2 * B / (3 * target)) ** (1 / 3)) if target > 0 else r_max
    if R > r_max:
        raise ProbeFailure(f"exterior decay not validated: tail radius {R:.3g} exceeds {r_max:g}")
    return R, 2 * B / (3 * R ** 3)


def _set_geometry(K, h: float, L: float):
    """Coarse pieces of K, the share of each piece removed at finer levels,
    and the level used.  ``K`` is an IntervalUnion, an SvcSet or None."""
    from .intervals import IntervalUnion
    from .svc import SvcSet

    if K is None:
        return None, 0.0, None
    if isinstance(K, IntervalUnion):
        return K, 0.0, None
    if isinstance(K, SvcSet):
        target = math.sqrt(h) / 64
        d = K.depth
        for n, ln in enumerate(K.lengths):
            if float(ln) <= target:
                d = n
                break
        rho = float(1 - K.survival(d, K.depth))
        return K.level(d), rho, d
    raise TypeError("K must be an IntervalUnion, an SvcSet or None")


def necessity_experiment(K, params: ProbeParams, T: float, hs: Sequence[float],
                         r: float = 0.25, t_nodes: int = 24, eta: float | None = None,
                         tail_rtol: float = 1e-3, r_max: float = 64.0) -> NecessityReport:
    """Observability ratio ``||g_h(T)||^2 / ∫_0^T ||g_h(t)||^2_{L^2(omega)} dt``.

    ``omega`` is the complement of the compact set ``K`` (``None`` means
    ``omega = R``), translated so that the probe sits at a worst-thickness
    point of scale ``L = r h^beta`` (the centre of the plateau of minimisers,
    see :func:`fracthick.thickness.worst_point`).

    lhs: Gauss-Legendre quadrature of ``|g_h(T, x)|^2`` on ``[-R, R]``; R is
    chosen so the certified tail ``∫_{|x|>R} |g|^2 <= 2 B / 3R^3`` stays below
    ``tail_rtol`` times the Plancherel norm.

    rhs: ``∫_0^T (||g(t)||^2 - ∫_K |g(t)|^2) dt`` with the full norm from
    Plancherel, so the unbounded part of omega needs no truncation.  Pieces of
    an SVC are taken at the first level shorter than ``sqrt(h) / 64``; the
    finer gaps inside each piece enter through their exact total measure at
    the piece midpoint.  The reported ``rhs_error`` compares against a run
    with doubled time nodes and halved panels.
    """
    from .thickness import worst_point

    if T <= 0:
        raise ProbeError("T must be positive")
    hs = sorted((float(h) for h in hs), reverse=True)
    if eta is None:
        eta = determine_eta(params, T, hs)
    rows = []
    for h in hs:
        P = params.with_h(h)
        L = r * h ** P.beta
        coarse, rho, level = _set_geometry(K, h, L)
        if coarse is None:
            shift, mass = 0.0, 2 * L
            pieces = []
        else:
            wp = worst_point(coarse, L, rho)
            shift, mass = wp.x, wp.omega_mass
            lo, hi = coarse.as_floats()
            pieces = [(a - shift, b - shift) for a, b in zip(lo, hi)]

        sq = math.sqrt(h)
        # lhs
        lhs_pl = norm2_plancherel(P, T)
        R, tail = _tail_radius(P, T, tail_rtol * lhs_pl, max(1.0, 4 * eta), r_max)
        xl, wl = _gl_points([(-R, R)], sq / 4, 0.0)
        lhs = float(np.sum(wl * np.abs(eval_g_many(P, T, xl).value) ** 2))

        def rhs_value(nt: int, width: float) -> float:
            tg, tw = np.polynomial.legendre.leggauss(nt)
            tg = (tg + 1) * T / 2
            tw = tw * T / 2
            xk, wk = _gl_points(pieces, width, width / 4)
            centres = np.array([(a + b) / 2 for a, b in pieces])
            wc = np.array([rho * (b - a) for a, b in pieces])
            pts = np.concatenate([xk, centres]) if pieces else np.zeros(0)
            total = 0.0
            for t, wt in zip(tg, tw):
                full = norm2_plancherel(P, float(t))
                if pts.size:
                    m = np.abs(eval_g_many(P, float(t), pts).value) ** 2
                    onK = np.sum(wk * m[:xk.size]) - np.sum(wc * m[xk.size:])
                else:
                    onK = 0.0
                total += wt * (full - onK)
            return float(total)

        rhs = rhs_value(t_nodes, sq / 4)
        rhs_fine = rhs_value(2 * t_nodes, sq / 8)
        if not rhs_fine > 0:
            raise ProbeFailure(f"observed mass not resolved at h = {h:g}")
        rows.append(NecessityRow(h, T, lhs, rhs_fine, lhs / rhs_fine, eta, R, L, shift,
                                 mass, lhs_pl, tail, abs(rhs_fine - rhs), level))
    note = "omega = R" if K is None else f"omega = R minus ({type(K).__name__})"
    certs = {
        "lhs_vs_plancherel_max_rel": max(abs(w.lhs - w.lhs_plancherel) / w.lhs_plancherel
                                         for w in rows),
        "rhs_max_rel_error": max(w.rhs_error / w.rhs for w in rows),
        "lhs_tail_bounds": [w.lhs_tail_bound for w in rows],
    }
    return NecessityReport(rows, params, T, r, note, certs)
