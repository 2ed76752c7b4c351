"""Exact special numbers and the Faa di Bruno coefficient factor.

Bounds produced by this package routinely exceed the range of IEEE doubles,
so every bound is carried as a :class:`LogMagnitude`, a nonnegative number
stored through its base-10 logarithm.
"""
from __future__ import annotations

import enum
import math
from fractions import Fraction
from functools import lru_cache, total_ordering
from numbers import Real

__all__ = [
    "FactorMode",
    "LogMagnitude",
    "stirling2",
    "bell",
    "touchard",
    "double_factorial",
    "factorial",
    "fdb_coeff",
    "lmax",
    "lsum",
]


class FactorMode(str, enum.Enum):
    """Convention for the Faa di Bruno coefficient mass.

    ``EXACT`` sums the genuine chain-rule weights (a Touchard value),
    ``PAPER`` uses the pre-asymptotic bound ``(2m)^n B(n)``.
    """

    EXACT = "exact"
    PAPER = "paper"

    @classmethod
    def parse(cls, value) -> "FactorMode":
        if isinstance(value, cls):
            return value
        key = str(value).lower()
        aliases = {"exact_touchard": "exact", "paper_asymptotic": "paper"}
        return cls(aliases.get(key, key))


def _log10_exact(x) -> float:
    """log10 of a nonnegative int, Fraction or float, without overflow."""
    if isinstance(x, Fraction):
        if x.numerator == 0:
            return -math.inf
        return math.log10(x.numerator) - math.log10(x.denominator)
    if isinstance(x, int):
        return math.log10(x) if x > 0 else -math.inf
    x = float(x)
    if x == 0.0:
        return -math.inf
    if math.isinf(x):
        return math.inf
    return math.log10(x)


@total_ordering
class LogMagnitude:
    """Nonnegative extended real stored as ``log10``; zero is ``-inf``.

    Parameters
    ----------
    log10 : float
        Base-10 logarithm of the represented value.
    """

    __slots__ = ("log10",)

    def __init__(self, log10: float):
        if math.isnan(log10):
            raise ValueError("LogMagnitude cannot hold NaN")
        object.__setattr__(self, "log10", float(log10))

    def __setattr__(self, name, value):
        raise AttributeError("LogMagnitude is immutable")

    @classmethod
    def of(cls, value) -> "LogMagnitude":
        """Wrap a plain nonnegative number (int, Fraction, float) or pass through."""
        if isinstance(value, LogMagnitude):
            return value
        if value < 0:
            raise ValueError(f"LogMagnitude requires a nonnegative value, got {value}")
        return cls(_log10_exact(value))

    @classmethod
    def zero(cls) -> "LogMagnitude":
        return cls(-math.inf)

    @classmethod
    def one(cls) -> "LogMagnitude":
        return cls(0.0)

    @property
    def is_zero(self) -> bool:
        return self.log10 == -math.inf

    def value(self) -> float:
        """Plain float value; ``inf`` once it leaves the double range."""
        if self.is_zero:
            return 0.0
        if self.log10 > 308.2:
            return math.inf
        return 10.0 ** self.log10

    def __float__(self) -> float:
        return self.value()

    @staticmethod
    def _coerce(other) -> "LogMagnitude":
        if isinstance(other, LogMagnitude):
            return other
        if isinstance(other, (Real, Fraction)):
            return LogMagnitude.of(other)
        return NotImplemented

    def __mul__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        if self.is_zero or other.is_zero:
            return LogMagnitude.zero()
        return LogMagnitude(self.log10 + other.log10)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        if other.is_zero:
            raise ZeroDivisionError("division by a zero LogMagnitude")
        if self.is_zero:
            return LogMagnitude.zero()
        return LogMagnitude(self.log10 - other.log10)

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        if self.is_zero:
            return other
        if other.is_zero:
            return self
        hi, lo = max(self.log10, other.log10), min(self.log10, other.log10)
        return LogMagnitude(hi + math.log10(1.0 + 10.0 ** (lo - hi)))

    __radd__ = __add__

    def __pow__(self, exponent):
        if exponent == 0:
            return LogMagnitude.one()
        if exponent < 0:
            return LogMagnitude.one() / (self ** (-exponent))
        if self.is_zero:
            return LogMagnitude.zero()
        return LogMagnitude(self.log10 * exponent)

    def __eq__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self.log10 == other.log10

    def __lt__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self.log10 < other.log10

    def __hash__(self):
        return hash(self.log10)

    def __repr__(self):
        if self.is_zero:
            return "LogMagnitude(0)"
        return f"LogMagnitude(10^{self.log10:.6g})"


def lmax(*values) -> LogMagnitude:
    """Maximum of LogMagnitudes (or plain numbers); empty input gives zero."""
    out = LogMagnitude.zero()
    for v in values:
        v = LogMagnitude.of(v)
        if v > out:
            out = v
    return out


def lsum(values) -> LogMagnitude:
    out = LogMagnitude.zero()
    for v in values:
        out = out + v
    return out


@lru_cache(maxsize=None)
def stirling2(n: int, k: int) -> int:
    """Stirling number of the second kind S(n, k)."""
    if n < 0 or k < 0:
        raise ValueError("stirling2 requires nonnegative arguments")
    if n == 0 and k == 0:
        return 1
    if n == 0 or k == 0 or k > n:
        return 0
    # iterate the row to keep the recursion depth flat
    row = [1]
    for i in range(1, n + 1):
        new = [0] * (i + 1)
        for j in range(1, i + 1):
            left = row[j] if j < len(row) else 0
            new[j] = j * left + row[j - 1]
        row = new
    return row[k]


@lru_cache(maxsize=None)
def _stirling_row(n: int) -> tuple[int, ...]:
    return tuple(stirling2(n, k) for k in range(n + 1))


def bell(n: int) -> int:
    """Bell number B(n), the number of set partitions of an n-set."""
    if n < 0:
        raise ValueError("bell requires n >= 0")
    return sum(_stirling_row(n))


def touchard(n: int, m: int) -> int:
    """Touchard value T(n, m) = sum_k S(n, k) m^k."""
    if n < 0 or m < 0:
        raise ValueError("touchard requires nonnegative arguments")
    return sum(s * m**k for k, s in enumerate(_stirling_row(n)))


def double_factorial(n: int) -> int:
    """Double factorial of an odd positive integer."""
    if n < 1 or n % 2 == 0:
        raise ValueError(f"double_factorial expects a positive odd integer, got {n}")
    out = 1
    for j in range(n, 0, -2):
        out *= j
    return out


def factorial(n: int) -> int:
    return math.factorial(n)


def fdb_coeff(n: int, m: int, mode="exact") -> LogMagnitude:
    """Coefficient mass of the order-``n`` chain rule with ``m`` inner functions.

    Exact mode returns ``T(n, m)``; paper mode returns ``(2m)^n B(n)``.
    """
    if n < 1 or m < 1:
        raise ValueError("fdb_coeff requires n >= 1 and m >= 1")
    mode = FactorMode.parse(mode)
    if mode is FactorMode.EXACT:
        return LogMagnitude.of(touchard(n, m))
    return LogMagnitude.of((2 * m) ** n * bell(n))
