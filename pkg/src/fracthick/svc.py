"""Smith-Volterra-Cantor sets with exact rational endpoints.

``K_0 = [0, 1]``; every closed piece of ``K_n`` loses its open middle part of
relative size ``r_n`` to give ``K_{n+1}``.  All pieces of ``K_n`` share the
length ``l_n`` with ``l_{n+1} = (1 - r_n) / 2 * l_n``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from math import lcm
from typing import Sequence

import mpmath
import numpy as np

from .intervals import IntervalError, IntervalUnion, RationalLike, as_fraction

DEFAULT_PRECISION_BITS = 128
DEFAULT_MAX_INTERVALS = 1 << 20
DEFAULT_MAX_DENOMINATOR_BITS = 1 << 16


class ResourceBudgetError(RuntimeError):
    """An exact construction would exceed the configured size budget."""


class DivergentSeriesError(ValueError):
    """The gap-ratio series does not converge, so K has measure zero."""


def round_dyadic(x: mpmath.mpf, bits: int) -> Fraction:
    """Nearest dyadic rational to ``x > 0`` with ``bits`` significant bits."""
    mant, exp = mpmath.frexp(x)          # x = mant * 2**exp, mant in [1/2, 1)
    scaled = mpmath.ldexp(mant, bits)
    m = int(mpmath.nint(scaled))
    return Fraction(m) * Fraction(2) ** (int(exp) - bits)


@dataclass(frozen=True)
class SvcParams:
    """Gap-ratio sequence ``r_n`` driving an SVC construction.

    Modes
    -----
    ``explicit``
        finite list ``values``; ``r_n`` is undefined past its end.
    ``constant``
        ``r_n = values[0]`` for all ``n``.
    ``geometric``
        ``r_n = first * ratio**n``.
    ``parametric``
        ``r_n = c * exp(-C * 2**(n * alpha))`` rounded to a dyadic rational
        with ``precision_bits`` significant bits.
    """

    mode: str
    values: tuple[Fraction, ...] = ()
    first: Fraction | None = None
    ratio: Fraction | None = None
    c: Fraction | None = None
    C: Fraction | None = None
    alpha: Fraction | None = None
    precision_bits: int = DEFAULT_PRECISION_BITS
    _cache: dict = field(default_factory=dict, compare=False, repr=False, hash=False)

    def __post_init__(self) -> None:
        if self.mode not in ("explicit", "constant", "geometric", "parametric"):
            raise IntervalError(f"unknown SvcParams mode {self.mode!r}")
        if self.precision_bits < 8:
            raise IntervalError("precision_bits must be at least 8")
        if self.mode in ("explicit", "constant"):
            if not self.values:
                raise IntervalError(f"{self.mode} mode needs at least one value")
            for v in self.values:
                _check_ratio(v)
        elif self.mode == "geometric":
            if self.first is None or self.ratio is None:
                raise IntervalError("geometric mode needs first and ratio")
            _check_ratio(self.first)
            if not 0 < self.ratio <= 1:
                raise IntervalError("geometric ratio must lie in (0, 1]")
        else:
            if self.c is None or self.C is None or self.alpha is None:
                raise IntervalError("parametric mode needs c, C and alpha")
            if not 0 < self.c < 1:
                raise IntervalError("c must lie in (0, 1)")
            if self.C <= 0 or self.alpha <= 0:
                raise IntervalError("C and alpha must be positive")

    # constructors ----------------------------------------------------

    @classmethod
    def explicit(cls, values: Sequence[RationalLike]) -> "SvcParams":
        return cls("explicit", values=tuple(as_fraction(v) for v in values))

    @classmethod
    def constant(cls, r: RationalLike) -> "SvcParams":
        return cls("constant", values=(as_fraction(r),))

    @classmethod
    def geometric(cls, first: RationalLike, ratio: RationalLike) -> "SvcParams":
        return cls("geometric", first=as_fraction(first), ratio=as_fraction(ratio))

    @classmethod
    def parametric(cls, c: RationalLike, C: RationalLike, alpha: RationalLike,
                   precision_bits: int = DEFAULT_PRECISION_BITS) -> "SvcParams":
        return cls("parametric", c=as_fraction(c), C=as_fraction(C),
                   alpha=as_fraction(alpha), precision_bits=precision_bits)

    # sequence access -------------------------------------------------

    def defined_upto(self) -> int | None:
        """Number of defined terms, or None when the sequence is infinite."""
        return len(self.values) if self.mode == "explicit" else None

    def r(self, n: int) -> Fraction:
        if n < 0:
            raise IndexError(n)
        if self.mode == "explicit":
            if n >= len(self.values):
                raise IntervalError(f"r_{n} requested but only {len(self.values)} values given")
            return self.values[n]
        if self.mode == "constant":
            return self.values[0]
        if self.mode == "geometric":
            return self.first * self.ratio ** n
        cached = self._cache.get(n)
        if cached is None:
            cached = self._parametric_term(n)
            self._cache[n] = cached
        return cached

    def ratios(self, n: int) -> list[Fraction]:
        return [self.r(k) for k in range(n)]

    def _parametric_term(self, n: int) -> Fraction:
        with mpmath.workprec(self.precision_bits + 64):
            c = mpmath.mpf(self.c.numerator) / self.c.denominator
            C = mpmath.mpf(self.C.numerator) / self.C.denominator
            a = mpmath.mpf(self.alpha.numerator) / self.alpha.denominator
            x = c * mpmath.exp(-C * mpmath.power(2, n * a))
            if mpmath.log(x, 2) < -DEFAULT_MAX_DENOMINATOR_BITS:
                # the dyadic rounding would need a denominator beyond any budget
                raise ResourceBudgetError(
                    f"r_{n} is below 2^-{DEFAULT_MAX_DENOMINATOR_BITS}; use a smaller depth")
            return round_dyadic(x, self.precision_bits)

    def rounding_error_bound(self, n: int) -> Fraction:
        """Bound on ``|r_n - exact r_n|`` (zero except in parametric mode)."""
        if self.mode != "parametric":
            return Fraction(0)
        return self.r(n) * Fraction(1, 2 ** (self.precision_bits - 1))

    def to_json_obj(self) -> dict:
        if self.mode in ("explicit", "constant"):
            return {"mode": self.mode, "values": [str(v) for v in self.values]}
        if self.mode == "geometric":
            return {"mode": "geometric", "first": str(self.first), "ratio": str(self.ratio)}
        return {"mode": "parametric", "c": str(self.c), "C": str(self.C),
                "alpha": str(self.alpha), "precision_bits": self.precision_bits}

    @classmethod
    def from_json_obj(cls, obj: dict) -> "SvcParams":
        mode = obj.get("mode")
        if mode == "explicit":
            return cls.explicit(obj["values"])
        if mode == "constant":
            vals = obj.get("values") or [obj["r"]]
            return cls.constant(vals[0])
        if mode == "geometric":
            return cls.geometric(obj["first"], obj["ratio"])
        if mode == "parametric":
            return cls.parametric(obj["c"], obj["C"], obj["alpha"],
                                  int(obj.get("precision_bits", DEFAULT_PRECISION_BITS)))
        raise IntervalError(f"unknown SvcParams mode {mode!r}")


def _check_ratio(r: Fraction) -> None:
    if not 0 < r < 1:
        raise IntervalError(f"gap ratio {r} outside (0, 1)")


def piece_lengths(ratios: Sequence[Fraction]) -> list[Fraction]:
    """``[l_0, ..., l_n]`` with ``l_0 = 1`` and ``l_{k+1} = (1 - r_k) / 2 * l_k``."""
    out = [Fraction(1)]
    for r in ratios:
        out.append((1 - r) / 2 * out[-1])
    return out


def svc_construct(params: SvcParams, depth: int,
                  max_intervals: int = DEFAULT_MAX_INTERVALS,
                  max_denominator_bits: int = DEFAULT_MAX_DENOMINATOR_BITS) -> IntervalUnion:
    """Return ``K_depth`` as ``2**depth`` equal-length closed intervals in [0, 1].

    Raises
    ------
    ResourceBudgetError
        if ``2**depth`` exceeds ``max_intervals`` or the common endpoint
        denominator needs more than ``max_denominator_bits`` bits.
    """
    if depth < 0:
        raise IntervalError("depth must be nonnegative")
    if 2 ** depth > max_intervals:
        raise ResourceBudgetError(
            f"depth {depth} gives {2 ** depth} intervals, budget is {max_intervals}")
    ratios = params.ratios(depth)
    for r in ratios:
        _check_ratio(r)
    lengths = piece_lengths(ratios)
    den = 1
    for ln in lengths:
        den = lcm(den, ln.denominator)
    if den.bit_length() > max_denominator_bits:
        raise ResourceBudgetError(
            f"endpoint denominator needs {den.bit_length()} bits, budget is {max_denominator_bits}")
    scaled = [ln.numerator * (den // ln.denominator) for ln in lengths]
    width = scaled[depth]
    shifts = [scaled[j] - scaled[j + 1] for j in range(depth)]
    if den.bit_length() < 63:
        # every endpoint is at most den, so int64 is exact
        arr = np.zeros(1, dtype=np.int64)
        for shift in shifts:
            nxt = np.empty(2 * arr.size, dtype=np.int64)
            nxt[0::2] = arr
            nxt[1::2] = arr + shift
            arr = nxt
        starts = arr.tolist()
        ends = (arr + width).tolist()
    else:
        starts = [0]
        for shift in shifts:
            starts = [x for a in starts for x in (a, a + shift)]
        ends = [a + width for a in starts]
    # gaps r_j l_j > 0 keep the pieces sorted, disjoint and non-touching
    return IntervalUnion._from_normalized(starts, ends, den)


class SvcSet:
    """Structured view of ``K_depth`` that avoids enumerating deep levels.

    Parameters
    ----------
    params : SvcParams
    depth : int
        Nominal construction depth. Queries that only need a coarser level
        (see :meth:`level_for_scale`) work on that level and report the
        certified effect of the omitted levels.
    """

    def __init__(self, params: SvcParams, depth: int,
                 max_intervals: int = DEFAULT_MAX_INTERVALS,
                 max_denominator_bits: int = DEFAULT_MAX_DENOMINATOR_BITS):
        if depth < 0:
            raise IntervalError("depth must be nonnegative")
        self.params = params
        self.depth = depth
        self.max_intervals = max_intervals
        self.max_denominator_bits = max_denominator_bits
        bits = 0
        for r in params.ratios(depth):
            _check_ratio(r)
            bits += r.denominator.bit_length()
        if bits > max_denominator_bits:
            raise ResourceBudgetError(
                f"gap ratios up to depth {depth} need {bits} denominator bits "
                f"(budget {max_denominator_bits})")
        self._levels: dict[int, IntervalUnion] = {}

    @cached_property
    def ratios(self) -> list[Fraction]:
        return self.params.ratios(self.depth)

    @cached_property
    def lengths(self) -> list[Fraction]:
        return piece_lengths(self.ratios)

    def measure(self) -> Fraction:
        """Exact ``Leb(K_depth) = prod_{k < depth} (1 - r_k)``."""
        out = Fraction(1)
        for r in self.ratios:
            out *= 1 - r
        return out

    def level(self, n: int) -> IntervalUnion:
        if not 0 <= n <= self.depth:
            raise IntervalError(f"level {n} outside [0, {self.depth}]")
        u = self._levels.get(n)
        if u is None:
            u = svc_construct(self.params, n, self.max_intervals, self.max_denominator_bits)
            self._levels[n] = u
        return u

    def level_for_scale(self, L: Fraction, ratio: int = 16) -> int:
        """Smallest level ``d <= depth`` with ``l_d < L / ratio`` (or ``depth``)."""
        for d, ln in enumerate(self.lengths):
            if ln * ratio < L:
                return d
        return self.depth

    def survival(self, start: int, stop: int) -> Fraction:
        """``prod_{start <= j < stop} (1 - r_j)``."""
        out = Fraction(1)
        for r in self.ratios[start:stop]:
            out *= 1 - r
        return out
