"""Exact and multiprecision scalars shared by the rest of the package.

Matrix entries are kept exact as ``r + sum_d c_d * sqrt(d)`` with rational
``r`` and ``c_d``.  This family is closed under addition and multiplication
by integers, which is all a linear form ``Theta_i(q)`` needs, so integer
combinations of entries stay exact and rational inputs produce exact zeros.
Everything else runs in :mod:`mpmath` at the active working precision.
"""

from __future__ import annotations

import contextlib
import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Union

import mpmath

from .errors import DomainError

DEFAULT_DIGITS = 50
MIN_DIGITS = 30


@dataclass(frozen=True)
class Precision:
    """Working precision in decimal digits."""

    digits: int = DEFAULT_DIGITS

    def __post_init__(self) -> None:
        if int(self.digits) != self.digits or self.digits < MIN_DIGITS:
            raise ValueError(f"precision needs at least {MIN_DIGITS} digits, got {self.digits}")

    @property
    def comparison_tolerance(self) -> mpmath.mpf:
        with mpmath.workdps(self.digits):
            return mpmath.mpf(10) ** (-mpmath.mpf(self.digits) / 2)

    def context(self) -> contextlib.AbstractContextManager:
        return mpmath.workdps(self.digits)

    def doubled(self) -> "Precision":
        return Precision(2 * self.digits)


DEFAULT_PRECISION = Precision()


def resolve(prec: Precision | int | None) -> Precision:
    if prec is None:
        return DEFAULT_PRECISION
    if isinstance(prec, Precision):
        return prec
    return Precision(int(prec))


def tolerance() -> mpmath.mpf:
    """Comparison tolerance for the currently active mpmath precision."""
    return mpmath.mpf(10) ** (-mpmath.mpf(mpmath.mp.dps) / 2)


def _squarefree_split(d: int) -> tuple[int, int]:
    """Return ``(s, r)`` with ``d == s*s*r`` and ``r`` squarefree."""
    s, r = 1, d
    f = 2
    while f * f <= r:
        while r % (f * f) == 0:
            r //= f * f
            s *= f
        f += 1
    return s, r


class QuadraticScalar:
    """Exact real of the form ``rational + sum(coeff * sqrt(d))``."""

    __slots__ = ("rational", "surds")

    def __init__(self, rational: int | Fraction = 0, surds: Iterable[tuple[int, Fraction]] = ()):
        self.rational = Fraction(rational)
        acc: dict[int, Fraction] = {}
        for d, c in surds:
            d = int(d)
            if d < 0:
                raise DomainError(f"sqrt({d}) is not real")
            s, r = _squarefree_split(d) if d > 0 else (0, 1)
            c = Fraction(c) * s
            if r == 1:
                self.rational += c
            elif c:
                acc[r] = acc.get(r, Fraction(0)) + c
        self.surds = tuple(sorted((d, c) for d, c in acc.items() if c))

    @classmethod
    def quadratic(cls, a: int, b: int, d: int, c: int) -> "QuadraticScalar":
        """``(a + b*sqrt(d)) / c``."""
        if c == 0:
            raise DomainError("zero denominator")
        return cls(Fraction(a, c), [(d, Fraction(b, c))])

    @property
    def is_rational(self) -> bool:
        return not self.surds

    def to_mpf(self) -> mpmath.mpf:
        v = mpmath.mpf(self.rational.numerator) / self.rational.denominator
        for d, c in self.surds:
            v += mpmath.mpf(c.numerator) / c.denominator * mpmath.sqrt(d)
        return v

    def __float__(self) -> float:
        with mpmath.workdps(30):
            return float(self.to_mpf())

    def _coerce(self, other) -> "QuadraticScalar":
        if isinstance(other, QuadraticScalar):
            return other
        if isinstance(other, (int, Fraction)):
            return QuadraticScalar(other)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return QuadraticScalar(self.rational + other.rational, self.surds + other.surds)

    __radd__ = __add__

    def __neg__(self) -> "QuadraticScalar":
        return QuadraticScalar(-self.rational, [(d, -c) for d, c in self.surds])

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, Fraction)):
            f = Fraction(other)
            return QuadraticScalar(self.rational * f, [(d, c * f) for d, c in self.surds])
        return NotImplemented

    __rmul__ = __mul__

    def __eq__(self, other) -> bool:
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return self.rational == other.rational and self.surds == other.surds

    def __hash__(self) -> int:
        return hash((self.rational, self.surds))

    def __repr__(self) -> str:
        return f"QuadraticScalar({self})"

    def __str__(self) -> str:
        if not self.surds:
            return str(self.rational)
        if len(self.surds) == 1:
            # canonical "(a+b*sqrt(d))/c", which parse_scalar reads back
            d, coef = self.surds[0]
            c = math.lcm(self.rational.denominator, coef.denominator)
            a, b = int(self.rational * c), int(coef * c)
            num = (f"{a}" if a else "") + ("+" if b > 0 and a else "-" if b < 0 else "") + f"{abs(b)}*sqrt({d})"
            return num if c == 1 and not a else f"({num})/{c}" if c != 1 else f"({num})"
        return " + ".join([str(self.rational)] + [f"{c}*sqrt({d})" for d, c in self.surds])


RealLike = Union[int, Fraction, QuadraticScalar, mpmath.mpf, float]

NAMED_CONSTANTS = {
    "phi": QuadraticScalar.quadratic(1, 1, 5, 2),
    "golden": QuadraticScalar.quadratic(1, 1, 5, 2),
}

_TERM_RE = re.compile(r"([+-]?)(\d+(?:\.\d+)?)?\*?(?:sqrt\(?(\d+)\)?)?")


def _parse_sum(text: str) -> QuadraticScalar:
    """``a + b*sqrt(d) - sqrt7 ...`` as an exact scalar."""
    total, pos = QuadraticScalar(0), 0
    while pos < len(text):
        m = _TERM_RE.match(text, pos)
        if not m or m.end() == pos or not (m.group(2) or m.group(3)):
            raise ValueError(f"cannot parse quadratic irrational {text!r}")
        sign = -1 if m.group(1) == "-" else 1
        coef = Fraction(m.group(2)) if m.group(2) else Fraction(1)
        if m.group(3):
            total = total + QuadraticScalar(0, [(int(m.group(3)), sign * coef)])
        else:
            total = total + QuadraticScalar(sign * coef)
        pos = m.end()
        if pos < len(text) and text[pos] not in "+-":
            raise ValueError(f"cannot parse quadratic irrational {text!r}")
    return total


def parse_scalar(text: str | int | Fraction | QuadraticScalar) -> QuadraticScalar:
    """Parse a decimal, rational, named constant or ``(a+b*sqrt(d))/c`` literal.

    Decimal strings are read exactly, so ``"0.3"`` is the rational 3/10.
    """
    if isinstance(text, QuadraticScalar):
        return text
    if isinstance(text, (int, Fraction)):
        return QuadraticScalar(text)
    if isinstance(text, float):
        return QuadraticScalar(Fraction(repr(text)))
    s = str(text).strip().replace(" ", "")
    low = s.lower()
    if low in NAMED_CONSTANTS:
        return NAMED_CONSTANTS[low]
    if "sqrt" in low:
        num, c = low, Fraction(1)
        m = re.match(r"^(.*)/(\d+)$", low)
        if m and m.group(1).startswith("(") and m.group(1).endswith(")"):
            num, c = m.group(1)[1:-1], Fraction(int(m.group(2)))
        elif low.startswith("(") and low.endswith(")"):
            num = low[1:-1]
        if c == 0:
            raise ValueError(f"zero denominator in {text!r}")
        return _parse_sum(num) * (1 / c)
    try:
        return QuadraticScalar(Fraction(s))
    except (ValueError, ZeroDivisionError) as exc:
        raise ValueError(f"cannot parse real literal {text!r}") from exc


def to_mpf(x: RealLike | str) -> mpmath.mpf:
    """Convert any supported real to an mpf at the active precision."""
    if isinstance(x, mpmath.mpf):
        return +x
    if isinstance(x, QuadraticScalar):
        return x.to_mpf()
    if isinstance(x, Fraction):
        return mpmath.mpf(x.numerator) / x.denominator
    if isinstance(x, int):
        return mpmath.mpf(x)
    if isinstance(x, float):
        return mpmath.mpf(x)
    if isinstance(x, str):
        return parse_scalar(x).to_mpf()
    return mpmath.mpf(x)


def to_fraction(x) -> Fraction:
    """Exact rational for ints, Fractions, decimal strings and float reprs."""
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, float):
        return Fraction(repr(x))
    if isinstance(x, QuadraticScalar):
        if not x.is_rational:
            raise ValueError(f"{x} is irrational")
        return x.rational
    if isinstance(x, str):
        return Fraction(x.strip())
    if isinstance(x, mpmath.mpf):
        man, exp = mpmath.mpf(x).man_exp
        return Fraction(int(man)) * Fraction(2) ** int(exp)
    raise TypeError(f"cannot convert {type(x).__name__} to Fraction")


def _frac_dist(x: Fraction) -> Fraction:
    r = x - math.floor(x)
    return min(r, 1 - r)


def dist_nearest_int(x: RealLike | str) -> mpmath.mpf:
    """``||x||``: distance from ``x`` to the nearest integer, in ``[0, 1/2]``.

    Rational inputs are reduced exactly before conversion, so integers give
    an exact 0 and half-integers an exact 1/2.
    """
    if isinstance(x, str):
        x = parse_scalar(x)
    if isinstance(x, QuadraticScalar) and x.is_rational:
        x = x.rational
    if isinstance(x, (int, Fraction)):
        return to_mpf(_frac_dist(Fraction(x)))
    v = to_mpf(x)
    return abs(v - mpmath.nint(v))


def sup_norm(q: Iterable[int]) -> int:
    return max((abs(int(c)) for c in q), default=0)


def weighted_power(base: RealLike, exponent: RealLike) -> mpmath.mpf:
    """``base ** exponent`` for ``base >= 0``; ``0 ** e`` needs ``e > 0``."""
    b = to_mpf(base)
    e = to_mpf(exponent)
    if b < 0:
        raise DomainError(f"negative base {b}")
    if b == 0:
        if e <= 0:
            raise DomainError("zero base needs a positive exponent")
        return mpmath.mpf(0)
    if e == 0:
        return mpmath.mpf(1)
    return mpmath.power(b, e)


_GUARD_DIGITS = 3


def fmt(x: RealLike) -> str:
    """Decimal string that parses back to the same value at the active precision."""
    if isinstance(x, int):
        return str(x)
    return mpmath.nstr(to_mpf(x), mpmath.mp.dps + _GUARD_DIGITS)
