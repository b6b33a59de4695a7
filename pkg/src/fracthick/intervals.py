"""Exact finite unions of closed intervals.

Endpoints are stored as integer numerators over one shared positive
denominator, so that sweeps over large unions (a depth-16 Cantor
construction has 65536 pieces) run on plain integers without
per-operation gcd reductions.
"""

from __future__ import annotations

import json
from fractions import Fraction
from math import gcd, lcm
from typing import Iterable, Iterator, Sequence, Union

RationalLike = Union[Fraction, int, str]


class IntervalError(ValueError):
    """Invalid interval data or an operation outside its domain."""


def as_fraction(value: RationalLike | float) -> Fraction:
    """Convert ``p/q`` strings, ints and Fractions to an exact Fraction.

    Floats are accepted but converted exactly (binary value), which is
    rarely what a caller wants for set construction.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise IntervalError("booleans are not rationals")
    if isinstance(value, (int, float)):
        return Fraction(value)
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise IntervalError(f"not a rational literal: {value!r}") from exc
    raise IntervalError(f"cannot interpret {value!r} as a rational")


class IntervalUnion:
    """Normalized union of disjoint, sorted, non-touching closed intervals.

    Parameters
    ----------
    intervals : iterable of (a, b) pairs
        Endpoints in any rational-like form. Overlapping or touching
        pieces are merged and zero-length pieces dropped.

    Notes
    -----
    Internally every endpoint is ``num / den`` with one shared ``den``.
    Use :meth:`from_scaled` to build large unions without going through
    Fraction objects.
    """

    __slots__ = ("_lo", "_hi", "_den")

    def __init__(self, intervals: Iterable[Sequence[RationalLike]] = ()):
        pairs = [(as_fraction(a), as_fraction(b)) for a, b in intervals]
        for a, b in pairs:
            if a > b:
                raise IntervalError(f"interval [{a}, {b}] has a > b")
        den = 1
        for a, b in pairs:
            den = lcm(den, a.denominator, b.denominator)
        lo = [a.numerator * (den // a.denominator) for a, _ in pairs]
        hi = [b.numerator * (den // b.denominator) for _, b in pairs]
        self._set(lo, hi, den, presorted=False)

    @classmethod
    def from_scaled(cls, lo: list[int], hi: list[int], den: int,
                    presorted: bool = False) -> "IntervalUnion":
        """Build from integer numerators over a common denominator."""
        if den <= 0:
            raise IntervalError("denominator must be positive")
        if len(lo) != len(hi):
            raise IntervalError("endpoint lists differ in length")
        obj = cls.__new__(cls)
        obj._set(list(lo), list(hi), den, presorted=presorted)
        return obj

    @classmethod
    def _from_normalized(cls, lo: list[int], hi: list[int], den: int) -> "IntervalUnion":
        # caller guarantees sorted, disjoint, non-touching, positive-length pieces
        obj = cls.__new__(cls)
        obj._lo, obj._hi, obj._den = lo, hi, den
        return obj

    def _set(self, lo: list[int], hi: list[int], den: int, presorted: bool) -> None:
        if not presorted:
            order = sorted(range(len(lo)), key=lo.__getitem__)
            lo = [lo[i] for i in order]
            hi = [hi[i] for i in order]
        out_lo: list[int] = []
        out_hi: list[int] = []
        for a, b in zip(lo, hi):
            if b < a:
                raise IntervalError("interval with a > b")
            if b == a:
                continue
            if out_hi and a <= out_hi[-1]:
                if b > out_hi[-1]:
                    out_hi[-1] = b
                continue
            out_lo.append(a)
            out_hi.append(b)
        self._lo = out_lo
        self._hi = out_hi
        self._den = den

    # ------------------------------------------------------------------
    # accessors

    @property
    def den(self) -> int:
        return self._den

    @property
    def scaled(self) -> tuple[list[int], list[int], int]:
        """``(lo, hi, den)`` integer view; do not mutate the lists."""
        return self._lo, self._hi, self._den

    @property
    def intervals(self) -> list[tuple[Fraction, Fraction]]:
        d = self._den
        return [(Fraction(a, d), Fraction(b, d)) for a, b in zip(self._lo, self._hi)]

    def __iter__(self) -> Iterator[tuple[Fraction, Fraction]]:
        return iter(self.intervals)

    def __len__(self) -> int:
        return len(self._lo)

    def __bool__(self) -> bool:
        return bool(self._lo)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, IntervalUnion):
            return NotImplemented
        if len(self) != len(other):
            return False
        d1, d2 = self._den, other._den
        return all(a1 * d2 == a2 * d1 and b1 * d2 == b2 * d1
                   for a1, b1, a2, b2 in zip(self._lo, self._hi, other._lo, other._hi))

    def __hash__(self) -> int:
        return hash(tuple(self.intervals))

    def __repr__(self) -> str:
        shown = ", ".join(f"[{a}, {b}]" for a, b in self.intervals[:4])
        more = f", ... ({len(self)} intervals)" if len(self) > 4 else ""
        return f"IntervalUnion({shown}{more})"

    def hull(self) -> tuple[Fraction, Fraction] | None:
        if not self._lo:
            return None
        return Fraction(self._lo[0], self._den), Fraction(self._hi[-1], self._den)

    def measure(self) -> Fraction:
        """Exact Lebesgue measure."""
        return Fraction(sum(self._hi) - sum(self._lo), self._den)

    def lengths(self) -> list[Fraction]:
        d = self._den
        return [Fraction(b - a, d) for a, b in zip(self._lo, self._hi)]

    def as_floats(self) -> tuple[list[float], list[float]]:
        """Endpoints rounded to float (for plotting and float kernels)."""
        d = self._den
        return [a / d for a in self._lo], [b / d for b in self._hi]

    # ------------------------------------------------------------------
    # operations

    def rescaled(self, den: int) -> tuple[list[int], list[int]]:
        """Numerators over ``den``, which must be a multiple of ``self.den``."""
        if den % self._den:
            raise IntervalError("target denominator is not a multiple")
        f = den // self._den
        if f == 1:
            return self._lo, self._hi
        return [a * f for a in self._lo], [b * f for b in self._hi]

    def translate(self, t: RationalLike) -> "IntervalUnion":
        t = as_fraction(t)
        den = lcm(self._den, t.denominator)
        lo, hi = self.rescaled(den)
        shift = t.numerator * (den // t.denominator)
        return IntervalUnion.from_scaled([a + shift for a in lo], [b + shift for b in hi],
                                         den, presorted=True)

    def scale(self, factor: RationalLike) -> "IntervalUnion":
        factor = as_fraction(factor)
        if factor <= 0:
            raise IntervalError("scale factor must be positive")
        p, q = factor.numerator, factor.denominator
        return IntervalUnion.from_scaled([a * p for a in self._lo], [b * p for b in self._hi],
                                         self._den * q, presorted=True)

    def union(self, other: "IntervalUnion") -> "IntervalUnion":
        den = lcm(self._den, other._den)
        lo1, hi1 = self.rescaled(den)
        lo2, hi2 = other.rescaled(den)
        return IntervalUnion.from_scaled(lo1 + lo2, hi1 + hi2, den)

    def complement_window(self, window: Sequence[RationalLike]) -> "IntervalUnion":
        """Closure of ``window minus self``; requires ``window`` to contain the hull."""
        w0, w1 = as_fraction(window[0]), as_fraction(window[1])
        if w0 > w1:
            raise IntervalError("window has a > b")
        den = lcm(self._den, w0.denominator, w1.denominator)
        lo, hi = self.rescaled(den)
        a0 = w0.numerator * (den // w0.denominator)
        b0 = w1.numerator * (den // w1.denominator)
        if lo and (lo[0] < a0 or hi[-1] > b0):
            raise IntervalError(f"window [{w0}, {w1}] does not contain the union")
        out_lo = [a0]
        out_hi: list[int] = []
        for a, b in zip(lo, hi):
            out_hi.append(a)
            out_lo.append(b)
        out_hi.append(b0)
        return IntervalUnion.from_scaled(out_lo, out_hi, den, presorted=True)

    def intersect_interval(self, a: RationalLike, b: RationalLike) -> "IntervalUnion":
        a, b = as_fraction(a), as_fraction(b)
        den = lcm(self._den, a.denominator, b.denominator)
        lo, hi = self.rescaled(den)
        an = a.numerator * (den // a.denominator)
        bn = b.numerator * (den // b.denominator)
        out_lo, out_hi = [], []
        for x, y in zip(lo, hi):
            x, y = max(x, an), min(y, bn)
            if x < y:
                out_lo.append(x)
                out_hi.append(y)
        return IntervalUnion.from_scaled(out_lo, out_hi, den, presorted=True)

    def measure_in(self, a: RationalLike, b: RationalLike) -> Fraction:
        """Exact measure of ``self`` inside ``[a, b]``."""
        return self.intersect_interval(a, b).measure()

    # ------------------------------------------------------------------
    # serialization

    def to_json_obj(self) -> list[list[str]]:
        out = []
        for a, b in self.intervals:
            out.append([str(a.numerator), str(a.denominator), str(b.numerator), str(b.denominator)])
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj())

    @classmethod
    def from_json_obj(cls, data: Sequence[Sequence[str | int]]) -> "IntervalUnion":
        pairs = []
        for item in data:
            if len(item) != 4:
                raise IntervalError(f"expected [num_a, den_a, num_b, den_b], got {item!r}")
            na, da, nb, db = (int(v) for v in item)
            if da <= 0 or db <= 0:
                raise IntervalError("denominators must be positive")
            pairs.append((Fraction(na, da), Fraction(nb, db)))
        return cls(pairs)

    @classmethod
    def from_json(cls, text: str) -> "IntervalUnion":
        return cls.from_json_obj(json.loads(text))


def reduce_scaled(lo: list[int], hi: list[int], den: int) -> tuple[list[int], list[int], int]:
    """Divide out the common factor of all numerators and the denominator."""
    g = den
    for v in lo:
        g = gcd(g, v)
        if g == 1:
            return lo, hi, den
    for v in hi:
        g = gcd(g, v)
        if g == 1:
            return lo, hi, den
    return [v // g for v in lo], [v // g for v in hi], den // g
