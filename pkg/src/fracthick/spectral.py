"""Fractional heat semigroup on a periodic window and its Gramians.

The real line is replaced by the periodic window ``[-X/2, X/2)`` sampled at
``N`` points.  Fields are stored together with their coefficients in the
orthonormal basis ``e_k(x) = exp(i xi_k x) / sqrt(X)``, ``xi_k = 2 pi k / X``,
so the discrete ``L^2`` norm ``sum |f_j|^2 X/N`` equals ``sum |c_k|^2``.

Observation sets are exact :class:`~fracthick.intervals.IntervalUnion`
objects.  Each grid cell is weighted by its exact overlap with the set,
which keeps sub-cell gaps of Cantor sets honest at moderate ``N``.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Sequence

import mpmath
import numpy as np
from scipy import linalg, optimize

from .intervals import IntervalError, IntervalUnion, as_fraction


class SpectralError(RuntimeError):
    """Eigen-solver or resolution failure in a Gramian computation."""


@dataclass(frozen=True)
class GridSpec:
    """Periodic window ``[-X/2, X/2)`` with ``N`` (a power of two) points."""

    X: float = 8.0
    N: int = 1024

    def __post_init__(self) -> None:
        if self.X <= 0:
            raise ValueError("window length X must be positive")
        if self.N < 2 or self.N & (self.N - 1):
            raise ValueError("N must be a power of two")

    @property
    def dx(self) -> float:
        return self.X / self.N

    @property
    def nyquist(self) -> float:
        return math.pi * self.N / self.X

    @cached_property
    def x(self) -> np.ndarray:
        return -self.X / 2 + self.dx * np.arange(self.N)

    @cached_property
    def k(self) -> np.ndarray:
        """Integer mode numbers in FFT order."""
        return np.fft.fftfreq(self.N, d=1.0 / self.N).astype(np.int64)

    @cached_property
    def xi(self) -> np.ndarray:
        return 2 * math.pi * self.k / self.X

    @cached_property
    def _phase(self) -> np.ndarray:
        # exp(i xi_k x_0) with x_0 = -X/2
        return np.where(self.k % 2 == 0, 1.0, -1.0)

    def window(self) -> tuple[Fraction, Fraction]:
        h = Fraction(self.X) / 2
        return -h, h

    def band_modes(self, lam: float) -> np.ndarray:
        """Mode numbers ``k`` with ``xi_k^2 <= lam``, ascending."""
        if lam < 0:
            raise ValueError("lambda must be nonnegative")
        kmax = min(int(math.floor(self.X * math.sqrt(lam) / (2 * math.pi) + 1e-12)), self.N // 2 - 1)
        ks = np.arange(-kmax, kmax + 1)
        # guard the floor against rounding at the band edge
        return ks[(2 * math.pi * ks / self.X) ** 2 <= lam * (1 + 1e-14)]


@dataclass
class GridField:
    grid: GridSpec
    values: np.ndarray
    coeffs: np.ndarray

    @classmethod
    def from_values(cls, grid: GridSpec, values: np.ndarray) -> "GridField":
        values = np.asarray(values, dtype=np.complex128)
        if values.shape != (grid.N,):
            raise ValueError(f"expected {grid.N} samples")
        coeffs = grid._phase * np.fft.fft(values) * (math.sqrt(grid.X) / grid.N)
        return cls(grid, values, coeffs)

    @classmethod
    def from_coeffs(cls, grid: GridSpec, coeffs: np.ndarray) -> "GridField":
        coeffs = np.asarray(coeffs, dtype=np.complex128)
        if coeffs.shape != (grid.N,):
            raise ValueError(f"expected {grid.N} coefficients")
        values = np.fft.ifft(grid._phase * coeffs) * (grid.N / math.sqrt(grid.X))
        return cls(grid, values, coeffs)

    @classmethod
    def from_function(cls, grid: GridSpec, fn) -> "GridField":
        return cls.from_values(grid, fn(grid.x))

    def norm2(self) -> float:
        """Squared discrete L^2 norm from the samples."""
        return float(np.sum(np.abs(self.values) ** 2) * self.grid.dx)

    def coeff_norm2(self) -> float:
        return float(np.sum(np.abs(self.coeffs) ** 2))


def evolve(f: GridField, t: float, s: float) -> GridField:
    """Apply ``exp(-t |D|^s)``: multiply each coefficient by ``exp(-t |xi|^s)``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    if s <= 0:
        raise ValueError("s must be positive")
    if t == 0:
        return GridField(f.grid, f.values.copy(), f.coeffs.copy())
    mult = np.exp(-t * np.abs(f.grid.xi) ** s)
    return GridField.from_coeffs(f.grid, f.coeffs * mult)


def project_band(f: GridField, lam: float) -> GridField:
    """Zero every coefficient with ``xi^2 > lam``."""
    if lam < 0:
        raise ValueError("lambda must be nonnegative")
    mask = f.grid.xi ** 2 <= lam
    return GridField.from_coeffs(f.grid, np.where(mask, f.coeffs, 0))


# ----------------------------------------------------------------------
# observation sets on the grid


def centered_complement(K: IntervalUnion, grid: GridSpec, center: Fraction | None = None) -> IntervalUnion:
    """Window complement of ``K`` shifted so that its hull midpoint sits at 0.

    With ``K`` inside ``[0, 1]`` this models ``omega = R minus K`` on the window.
    """
    if center is None:
        hull = K.hull()
        center = (hull[0] + hull[1]) / 2 if hull else Fraction(0)
    return K.translate(-center).complement_window(grid.window())


def exact_cell_weights(omega: IntervalUnion, grid: GridSpec) -> list[Fraction]:
    """``|cell_j ∩ omega|`` as exact rationals, cells ``[x_j - dx/2, x_j + dx/2]``.

    The window is periodic, so cell 0 also collects the strip just left of
    ``X/2``.
    """
    w0, w1 = grid.window()
    if omega:
        a, b = omega.hull()
        if a < w0 or b > w1:
            raise IntervalError("omega exceeds the periodic window")
    lo, hi, den = omega.scaled
    n = len(lo)
    prefix = [0] * (n + 1)
    for i in range(n):
        prefix[i + 1] = prefix[i] + hi[i] - lo[i]

    dx = Fraction(grid.X) / grid.N
    edges = [w0 + (j - Fraction(1, 2)) * dx for j in range(grid.N + 1)]

    def cum(y: Fraction) -> Fraction:
        # exact measure of omega ∩ (-inf, y]
        yn = y * den
        i = bisect.bisect_right(lo, yn)
        if i == 0:
            return Fraction(0)
        return Fraction(prefix[i - 1], den) + Fraction(min(yn, hi[i - 1]) - lo[i - 1]) / den

    G = [cum(e) for e in edges]
    wts = [G[j + 1] - G[j] for j in range(grid.N)]
    wts[0] = (G[1] - cum(w0)) + (cum(w1) - cum(w1 - dx / 2))
    return wts


def cell_weights(omega: IntervalUnion, grid: GridSpec) -> np.ndarray:
    """Float version of :func:`exact_cell_weights`."""
    return np.asarray([float(v) for v in exact_cell_weights(omega, grid)], dtype=np.float64)


def restrict_mass(omega: IntervalUnion | np.ndarray, f: GridField) -> float:
    """Midpoint-rule ``∫_omega |f|^2`` with exact cell-overlap weights."""
    w = omega if isinstance(omega, np.ndarray) else cell_weights(omega, f.grid)
    return float(np.sum(w * np.abs(f.values) ** 2))


def mass_symbol(weights: np.ndarray, grid: GridSpec) -> np.ndarray:
    """``tau(m) = (1/X) sum_j w_j exp(i xi_m x_j)`` for every ``m`` (mod N)."""
    phase = np.where(np.arange(grid.N) % 2 == 0, 1.0, -1.0)
    return phase * np.fft.ifft(weights) * (grid.N / grid.X)


def band_form(weights: np.ndarray, grid: GridSpec, modes: np.ndarray) -> np.ndarray:
    """Hermitian matrix of ``f -> restrict_mass(omega, f)`` on the given modes."""
    tau = mass_symbol(weights, grid)
    diff = (modes[None, :] - modes[:, None]) % grid.N
    A = tau[diff]
    return (A + A.conj().T) / 2


# ----------------------------------------------------------------------
# spectral constants


def _weights_for(omega: IntervalUnion | np.ndarray, grid: GridSpec) -> np.ndarray:
    return omega if isinstance(omega, np.ndarray) else cell_weights(omega, grid)


def spectral_constant(omega: IntervalUnion | np.ndarray, lam: float, grid: GridSpec,
                      digits: int | None = None) -> float:
    """Smallest ``||f||^2_{L^2(omega)} / ||f||^2`` over the band ``xi^2 <= lam``.

    The spectral-inequality constant is the inverse square root of the result.
    In double precision values below about ``1e-14`` are noise.  Passing
    ``digits`` switches to a multi-precision solve (``omega`` must then be an
    :class:`IntervalUnion`); the working precision is raised until the result
    is resolved.
    """
    if digits is not None:
        if not isinstance(omega, IntervalUnion):
            raise TypeError("multi-precision solve needs an exact IntervalUnion")
        return _spectral_constant_mp(exact_cell_weights(omega, grid), lam, grid, digits)
    w = _weights_for(omega, grid)
    if not np.any(w > 0):
        raise SpectralError("omega is empty")
    modes = grid.band_modes(lam)
    if modes.size == 0:
        raise SpectralError("empty band")
    A = band_form(w, grid, modes)
    try:
        d = float(linalg.eigvalsh(A, subset_by_index=[0, 0])[0])
    except linalg.LinAlgError as exc:
        raise SpectralError(f"eigen-solver failure: {exc}") from exc
    return d


_MP_MAX_DIGITS = 4000
_MP_GUARD = 25  # digits kept beyond the size of 1/d


def _mp_symbol(weights: Sequence[Fraction], grid: GridSpec, mmax: int, ctx) -> list:
    """``tau(m)`` for ``0 <= m <= mmax`` in the context's precision.

    Runs of cells with equal weight are summed as geometric series, so a set
    made of few intervals costs a handful of terms per ``m``.
    """
    N = grid.N
    runs = []
    j = 0
    while j < N:
        if weights[j] == 0:
            j += 1
            continue
        k = j
        while k + 1 < N and weights[k + 1] == weights[j]:
            k += 1
        runs.append((j, k, ctx.mpf(weights[j].numerator) / weights[j].denominator))
        j = k + 1
    X = ctx.mpf(as_fraction(grid.X).numerator) / as_fraction(grid.X).denominator
    tau = []
    for m in range(mmax + 1):
        total = ctx.mpc(0)
        if m % N == 0:
            for a, b, wt in runs:
                total += wt * (b - a + 1)
        else:
            z = ctx.expjpi(ctx.mpf(2 * m) / N)
            for a, b, wt in runs:
                za = ctx.expjpi(ctx.mpf(2 * m * a) / N)
                zb = ctx.expjpi(ctx.mpf(2 * m * (b + 1)) / N)
                total += wt * (za - zb) / (1 - z)
        tau.append(total / X if m % 2 == 0 else -total / X)
    return tau


def _mp_min_eig(A: list, ctx, rtol) -> object:
    """Smallest eigenvalue of a Hermitian positive definite matrix.

    Cholesky factorisation followed by inverse iteration with a Rayleigh
    quotient stopping rule.  Raises ValueError when the factorisation breaks
    down (precision too low).
    """
    M = len(A)
    L = [[ctx.mpc(0)] * M for _ in range(M)]
    for j in range(M):
        Lj = L[j]
        s = ctx.re(A[j][j]) - ctx.fsum(abs(v) ** 2 for v in Lj[:j])
        if s <= 0:
            raise ValueError("not positive definite at this precision")
        Lj[j] = ctx.sqrt(s)
        inv = 1 / Lj[j]
        conj_row = [ctx.conj(v) for v in Lj[:j]]
        for i in range(j + 1, M):
            L[i][j] = (A[i][j] - ctx.fdot(L[i][:j], conj_row)) * inv
    LH = [[ctx.conj(L[k][i]) for k in range(M)] for i in range(M)]

    x = [ctx.mpc(1)] * M
    mu = None
    for _ in range(200):
        y = [None] * M
        for i in range(M):
            y[i] = (x[i] - ctx.fdot(L[i][:i], y[:i])) / L[i][i]
        z = [None] * M
        for i in reversed(range(M)):
            z[i] = (y[i] - ctx.fdot(LH[i][i + 1:], z[i + 1:])) / LH[i][i]
        nrm = ctx.sqrt(ctx.fsum(abs(v) ** 2 for v in z))
        x = [v / nrm for v in z]
        Ax = [ctx.fdot(row, x) for row in A]
        new = ctx.re(ctx.fdot([ctx.conj(v) for v in x], Ax))
        if mu is not None and abs(new - mu) <= rtol * new:
            return new
        mu = new
    raise SpectralError("inverse iteration did not converge")


def _spectral_constant_mp(weights: Sequence[Fraction], lam: float, grid: GridSpec,
                          digits: int) -> float:
    if not any(weights):
        raise SpectralError("omega is empty")
    ks = [int(k) for k in grid.band_modes(lam)]
    if not ks:
        raise SpectralError("empty band")
    M = len(ks)
    dps = max(int(digits), 20)
    while dps <= _MP_MAX_DIGITS:
        with mpmath.workdps(dps):
            ctx = mpmath.mp
            tau = _mp_symbol(weights, grid, ks[-1] - ks[0], ctx)
            A = [[tau[ks[c] - ks[r]] if ks[c] >= ks[r] else ctx.conj(tau[ks[r] - ks[c]])
                  for c in range(M)] for r in range(M)]
            try:
                d = _mp_min_eig(A, ctx, ctx.mpf(10) ** (-15))
            except ValueError:
                dps *= 2
                continue
            lost = -int(mpmath.floor(mpmath.log10(d))) if d < 1 else 0
            if lost + _MP_GUARD <= dps:
                return float(d)
            dps = max(2 * dps, lost + 2 * _MP_GUARD)
    raise SpectralError(f"d(lambda={lam:g}) not resolved with {_MP_MAX_DIGITS} digits")


@dataclass(frozen=True)
class GrowthFit:
    exponent: float
    r2: float
    lambdas: tuple[float, ...]
    d_values: tuple[float, ...]


def fit_growth(lambdas: Sequence[float], d_values: Sequence[float], floor: float = 1e-13) -> GrowthFit:
    """Slope of ``log(-log d)`` against ``log lambda``.

    Raises SpectralError if some ``d`` is below ``floor`` (not resolved in
    double precision) or not below 1.
    """
    lam = np.asarray(lambdas, dtype=float)
    d = np.asarray(d_values, dtype=float)
    if np.any(d <= floor):
        bad = lam[d <= floor]
        raise SpectralError(f"d(lambda) below resolution {floor:g} at lambda = {bad.tolist()}")
    if np.any(d >= 1):
        raise SpectralError("d(lambda) = 1: no decay to fit")
    x = np.log(lam)
    y = np.log(-np.log(d))
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1 - float(resid @ resid) / ss_tot if ss_tot > 0 else 1.0
    return GrowthFit(float(coef[0]), r2, tuple(lam.tolist()), tuple(d.tolist()))


def fit_spectral_growth(omega: IntervalUnion | np.ndarray, lambdas: Sequence[float],
                        grid: GridSpec, digits: int | None = None) -> GrowthFit:
    """Growth exponent ``e`` with ``-log d(lambda) ~ lambda^e``.

    ``digits`` selects the multi-precision solver, needed when ``d`` drops
    below double resolution (sets with long gaps at large ``lambda``).
    """
    lambdas = sorted(float(v) for v in lambdas)
    if len(lambdas) < 8:
        raise ValueError("need at least 8 values of lambda")
    if lambdas[-1] < 100 * lambdas[0] * (1 - 1e-9):
        raise ValueError("lambdas must span at least two decades")
    if digits is not None:
        d = [spectral_constant(omega, lam, grid, digits=digits) for lam in lambdas]
        return fit_growth(lambdas, d, floor=0.0)
    w = _weights_for(omega, grid)
    d = [spectral_constant(w, lam, grid) for lam in lambdas]
    return fit_growth(lambdas, d)


# ----------------------------------------------------------------------
# observability Gramian


@dataclass
class GramianProblem:
    lam: float
    modes: np.ndarray
    obs_matrix: np.ndarray
    ref_matrix: np.ndarray
    metadata: dict = field(default_factory=dict)

    def check(self, rtol: float = 1e-12) -> None:
        for name, M in (("obs", self.obs_matrix), ("ref", self.ref_matrix)):
            scale = max(float(np.abs(M).max()), 1e-300)
            if float(np.abs(M - M.conj().T).max()) > rtol * scale:
                raise SpectralError(f"{name} matrix is not Hermitian")
        if np.any(np.diag(self.ref_matrix).real <= 0):
            raise SpectralError("reference form is not positive definite")


def gramian_problem(omega: IntervalUnion | np.ndarray, T: float, s: float, lam_max: float,
                    grid: GridSpec, quad_nodes: int = 32) -> GramianProblem:
    """Observation and final-state forms on the band ``xi^2 <= lam_max``."""
    if T <= 0 or s <= 0:
        raise ValueError("T and s must be positive")
    if quad_nodes < 4:
        raise ValueError("need at least 4 quadrature nodes")
    w = _weights_for(omega, grid)
    modes = grid.band_modes(lam_max)
    if modes.size == 0:
        raise SpectralError("empty band")
    A = band_form(w, grid, modes)
    rate = np.abs(2 * math.pi * modes / grid.X) ** s
    nodes, wts = np.polynomial.legendre.leggauss(quad_nodes)
    ts = T * (nodes + 1) / 2
    wts = wts * T / 2
    pair = rate[:, None] + rate[None, :]
    kern = np.zeros_like(pair)
    for t, wt in zip(ts, wts):  # fixed order keeps the sum deterministic
        kern += wt * np.exp(-t * pair)
    obs = A * kern
    ref = np.diag(np.exp(-2 * T * rate)).astype(np.complex128)
    return GramianProblem(lam_max, modes, obs, ref,
                          {"T": T, "s": s, "quad_nodes": quad_nodes, "X": grid.X, "N": grid.N})


def min_generalized_eig(problem: GramianProblem) -> float:
    """Smallest ``mu`` with ``obs v = mu ref v``, by diagonal whitening of ``ref``."""
    problem.check()
    scale = 1 / np.sqrt(np.diag(problem.ref_matrix).real)
    W = problem.obs_matrix * scale[:, None] * scale[None, :]
    # unit-diagonal rescaling before the solve; eigenvalues are unchanged
    try:
        mu = float(linalg.eigvalsh((W + W.conj().T) / 2, subset_by_index=[0, 0])[0])
    except linalg.LinAlgError as exc:
        raise SpectralError(f"eigen-solver failure: {exc}") from exc
    if mu <= 0:
        raise SpectralError("observation form not positive definite at this precision")
    return mu


def observability_constant(omega: IntervalUnion | np.ndarray, T: float, s: float, lam_max: float,
                           grid: GridSpec, quad_nodes: int = 32) -> float:
    """Smallest C with ``||e^{-TA} f||^2 <= C ∫_0^T ||e^{-tA} f||^2_omega dt`` on the band."""
    prob = gramian_problem(omega, T, s, lam_max, grid, quad_nodes)
    return 1.0 / min_generalized_eig(prob)


# ----------------------------------------------------------------------
# Lebeau-Robbiano constants


@dataclass(frozen=True)
class LRConstants:
    """Spectral-inequality constants ``(d0, d1, zeta)`` plus the ``c1..c3`` factors."""

    d0: float
    d1: float
    zeta: float
    c1: float = 1.0
    c2: float = 1.0
    c3: float = 1.0
    kov_K: float | None = None

    def __post_init__(self) -> None:
        if not 0 < self.zeta < 1:
            raise ValueError("zeta must lie in (0, 1)")
        if self.d0 <= 0 or self.d1 < 0:
            raise ValueError("need d0 > 0 and d1 >= 0")
        for v in (self.c1, self.c2, self.c3):
            if not (v > 0 and math.isfinite(v)):
                raise ValueError("c1, c2, c3 must be finite and positive")


def predicted_cobs(lr: LRConstants, T: float) -> float:
    """``c1 d0 (2 d0 + 1)^c2 exp(c3 (d1 / T^zeta)^(1 / (1 - zeta)))``."""
    if T <= 0:
        raise ValueError("T must be positive")
    if not 0 < lr.zeta < 1:
        raise ValueError("zeta must lie in (0, 1)")
    expo = lr.c3 * (lr.d1 / T ** lr.zeta) ** (1 / (1 - lr.zeta))
    return lr.c1 * lr.d0 * (2 * lr.d0 + 1) ** lr.c2 * math.exp(expo)


def fit_lr_envelope(lambdas: Sequence[float], d_values: Sequence[float], zeta: float) -> tuple[float, float]:
    """Tightest ``(d0, d1)`` with ``log d^{-1/2} <= log d0 + d1 lambda^zeta`` at every sample.

    Least squares gives the slope and intercept; the intercept is then raised
    just enough for the envelope to hold at every sample.
    """
    lam = np.asarray(lambdas, dtype=float)
    y = -0.5 * np.log(np.asarray(d_values, dtype=float))
    z = lam ** zeta
    if np.ptp(z) > 0:
        A = np.vstack([np.ones_like(z), z]).T
        (b, d1), *_ = np.linalg.lstsq(A, y, rcond=None)
        d1 = max(float(d1), 0.0)
    else:
        d1 = 0.0
    b = float(np.max(y - d1 * z))
    return math.exp(b), d1


def calibrate_lr_constants(omega: IntervalUnion | np.ndarray, s: float, alpha: float,
                           lambdas: Sequence[float], grid: GridSpec,
                           d_values: Sequence[float] | None = None) -> LRConstants:
    """Spectral-inequality constants for ``(-Delta)^{s/2}`` with ``zeta = alpha / s``.

    ``lambdas`` are levels of the fractional operator; the band identity
    ``1(A <= mu) = 1(-Delta <= mu^{2/s})`` maps each to a Laplacian band.
    ``d_values`` may be given directly (one per level) instead of measured.
    """
    zeta = alpha / s
    if not 0 < zeta < 1:
        raise ValueError("need 0 < alpha < s")
    lambdas = [float(v) for v in lambdas]
    if d_values is None:
        w = _weights_for(omega, grid)
        d_values = [spectral_constant(w, mu ** (2 / s), grid) for mu in lambdas]
    d0, d1 = fit_lr_envelope(lambdas, d_values, zeta)
    return LRConstants(d0=d0, d1=d1, zeta=zeta)


def fit_lr_factors(lr: LRConstants, T_cal: float, C_meas: float) -> LRConstants:
    """Scale ``c1`` so that ``predicted_cobs / T_cal`` equals ``C_meas`` at ``T_cal``."""
    base = predicted_cobs(lr, T_cal) / T_cal
    return LRConstants(lr.d0, lr.d1, lr.zeta, lr.c1 * C_meas / base, lr.c2, lr.c3, lr.kov_K)


# ----------------------------------------------------------------------
# brute-force oracle


def rayleigh_brute_force(quotient, dim: int, samples: int = 4000, refine: int = 8,
                         seed: int = 0) -> float:
    """Minimise a complex Rayleigh quotient by sphere sampling plus local polishing.

    ``quotient(v)`` takes a complex vector of length ``dim``.  Does not use
    any eigen-decomposition.
    """
    rng = np.random.default_rng(seed)
    pts = rng.standard_normal((samples, dim)) + 1j * rng.standard_normal((samples, dim))
    vals = np.array([quotient(p) for p in pts])
    best = np.argsort(vals)[:refine]

    def real_q(u: np.ndarray) -> float:
        return quotient(u[:dim] + 1j * u[dim:])

    out = float(vals[best[0]])
    for i in best:
        u0 = np.concatenate([pts[i].real, pts[i].imag])
        res = optimize.minimize(real_q, u0, method="Nelder-Mead",
                                options={"maxiter": 40000, "maxfev": 40000,
                                         "xatol": 1e-10, "fatol": 1e-14, "adaptive": True})
        out = min(out, float(res.fun))
    return out
