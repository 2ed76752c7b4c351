"""Multi-indices, the order operator and Faa di Bruno partition sets.

A multi-index is a tuple of nonnegative integers.  The order operator sorts
it nonincreasingly; two multi-indices with the same sorted form share a
derivative type.
"""
from __future__ import annotations

import math
import os
from collections import Counter
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterator, Sequence

__all__ = [
    "ENUM_CAP_ENV",
    "DEFAULT_ENUM_CAP",
    "EnumerationCapError",
    "PartitionTerm",
    "order",
    "norm",
    "mi_factorial",
    "count_equivalent",
    "enum_ordered",
    "precedes",
    "weakly_precedes",
    "enum_partitions",
    "fdb_weight",
    "enumeration_cap",
    "check_cap",
    "type_key",
]

ENUM_CAP_ENV = "TFBOUNDS_ENUM_CAP"
DEFAULT_ENUM_CAP = 8


class EnumerationCapError(ValueError):
    """Raised when a partition enumeration exceeds the configured order cap."""


def enumeration_cap() -> int:
    raw = os.environ.get(ENUM_CAP_ENV)
    if raw is None or raw.strip() == "":
        return DEFAULT_ENUM_CAP
    return int(raw)


def check_cap(n: int, cap: int | None = None) -> None:
    """Raise :class:`EnumerationCapError` if order ``n`` exceeds the cap.

    Called ahead of cached type computations so that lowering the cap takes
    effect even for results already in a cache.
    """
    cap = enumeration_cap() if cap is None else cap
    if n > cap:
        raise EnumerationCapError(f"|alpha| = {n} exceeds the enumeration cap {cap}")


def _as_index(alpha: Sequence[int]) -> tuple[int, ...]:
    out = tuple(int(a) for a in alpha)
    if any(a < 0 for a in out):
        raise ValueError(f"multi-index entries must be nonnegative: {alpha}")
    return out


def order(alpha: Sequence[int]) -> tuple[int, ...]:
    """Sort a multi-index nonincreasingly."""
    return tuple(sorted(_as_index(alpha), reverse=True))


def type_key(alpha: Sequence[int]) -> tuple[int, ...]:
    """Canonical derivative type: sorted nonincreasingly with zeros dropped."""
    return tuple(a for a in order(alpha) if a > 0)


def norm(alpha: Sequence[int]) -> int:
    return sum(alpha)


def mi_factorial(alpha: Sequence[int]) -> int:
    return math.prod(math.factorial(a) for a in alpha)


def count_equivalent(alpha: Sequence[int], k: int | None = None) -> int:
    """Number of multi-indices in N^k whose sorted form equals ``order(alpha)``.

    If ``k`` exceeds ``len(alpha)`` the index is padded with zeros.
    """
    alpha = _as_index(alpha)
    if k is None:
        k = len(alpha)
    if k < len(alpha):
        if any(alpha[k:]):
            return 0
        alpha = alpha[:k]
    padded = alpha + (0,) * (k - len(alpha))
    out = math.factorial(k)
    for mult in Counter(padded).values():
        out //= math.factorial(mult)
    return out


def _partitions(n: int, parts: int, largest: int) -> Iterator[tuple[int, ...]]:
    """Nonincreasing tuples of positive ints summing to n, at most ``parts`` long."""
    if n == 0:
        yield ()
        return
    if parts == 0:
        return
    for first in range(min(n, largest), 0, -1):
        for rest in _partitions(n - first, parts - 1, first):
            yield (first,) + rest


def enum_ordered(k: int, n: int, cumulative: bool = False) -> list[tuple[int, ...]]:
    """Ordered multi-indices of length ``k`` and size ``n`` (or ``<= n``).

    Returned in reverse lexicographic order within each size, sizes ascending.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if n < 0:
        raise ValueError("n must be >= 0")
    sizes = range(n + 1) if cumulative else (n,)
    out = []
    for size in sizes:
        for p in _partitions(size, k, size):
            out.append(p + (0,) * (k - len(p)))
    return out


def precedes(a: Sequence[int], b: Sequence[int]) -> bool:
    """Strict relation used by the chain rule: by size, then lexicographically."""
    sa, sb = sum(a), sum(b)
    if sa != sb:
        return sa < sb
    return tuple(a) < tuple(b)


def weakly_precedes(a: Sequence[int], b: Sequence[int]) -> bool:
    """Type-level relation: ``|a| <= |b|`` and ``a != b``."""
    return sum(a) <= sum(b) and tuple(a) != tuple(b)


@dataclass(frozen=True)
class PartitionTerm:
    """One chain-rule term: ``n`` blocks of (eta, zeta), leading blocks zero."""

    eta: tuple[tuple[int, ...], ...]
    zeta: tuple[tuple[int, ...], ...]

    def blocks(self) -> Iterator[tuple[tuple[int, ...], tuple[int, ...]]]:
        """Nonzero (eta, zeta) blocks."""
        for e, z in zip(self.eta, self.zeta):
            if any(e):
                yield e, z


def _bounded_vectors(limit: tuple[int, ...], total: int) -> Iterator[tuple[int, ...]]:
    """All vectors v with 0 <= v <= limit componentwise and sum(v) == total."""
    if not limit:
        if total == 0:
            yield ()
        return
    tail_cap = sum(limit[1:])
    for first in range(min(limit[0], total), -1, -1):
        if total - first > tail_cap:
            break
        for rest in _bounded_vectors(limit[1:], total - first):
            yield (first,) + rest


@lru_cache(maxsize=4096)
def _zeta_skeletons(alpha: tuple[int, ...]) -> tuple[tuple[tuple[tuple[int, ...], int], ...], ...]:
    """Strictly increasing zeta sequences with multiplicities covering alpha.

    Each skeleton is a tuple of (zeta, c) with sum c * zeta == alpha.
    """
    n = sum(alpha)
    candidates = []
    for size in range(1, n + 1):
        candidates.extend(_bounded_vectors(alpha, size))
    candidates.sort(key=lambda z: (sum(z), z))

    out = []

    def rec(start: int, remaining: tuple[int, ...], acc: list):
        if not any(remaining):
            out.append(tuple(acc))
            return
        for idx in range(start, len(candidates)):
            z = candidates[idx]
            if any(zc > rc for zc, rc in zip(z, remaining)):
                continue
            c = 1
            rem = tuple(r - zc for r, zc in zip(remaining, z))
            while all(r >= 0 for r in rem):
                acc.append((z, c))
                rec(idx + 1, rem, acc)
                acc.pop()
                c += 1
                rem = tuple(r - zc for r, zc in zip(rem, z))

    rec(0, alpha, [])
    return tuple(out)


def _eta_allocations(beta: tuple[int, ...], sizes: Sequence[int]) -> Iterator[tuple[tuple[int, ...], ...]]:
    if not sizes:
        if not any(beta):
            yield ()
        return
    for eta in _bounded_vectors(beta, sizes[0]):
        rest = tuple(b - e for b, e in zip(beta, eta))
        if sum(rest) != sum(sizes[1:]):
            continue
        for tail in _eta_allocations(rest, sizes[1:]):
            yield (eta,) + tail


@lru_cache(maxsize=8192)
def _enum_cached(alpha: tuple[int, ...], beta: tuple[int, ...]) -> tuple[PartitionTerm, ...]:
    n = sum(alpha)
    k, m = len(alpha), len(beta)
    zero_eta, zero_zeta = (0,) * m, (0,) * k
    terms = []
    for skeleton in _zeta_skeletons(alpha):
        sizes = [c for _, c in skeleton]
        if sum(sizes) != sum(beta):
            continue
        zetas = [z for z, _ in skeleton]
        pad = n - len(skeleton)
        for etas in _eta_allocations(beta, sizes):
            terms.append(
                PartitionTerm(
                    eta=(zero_eta,) * pad + tuple(etas),
                    zeta=(zero_zeta,) * pad + tuple(zetas),
                )
            )
    terms.sort(key=lambda t: (tuple(c for z in t.zeta for c in z), tuple(c for e in t.eta for c in e)))
    return tuple(terms)


def enum_partitions(alpha: Sequence[int], beta: Sequence[int], variant: str = "standard",
                    cap: int | None = None) -> list[PartitionTerm]:
    """Enumerate the chain-rule partition set for ``D^alpha (f o g)`` at ``D^beta f``.

    Parameters
    ----------
    alpha : sequence of int
        Outer derivative, length ``k`` (input dimension of the inner map).
    beta : sequence of int
        Derivative of the outer function, length ``m`` (number of inner outputs).
    variant : {"standard", "type"}
        ``"type"`` requires ``beta`` to be sorted; its terms are the canonical
        representatives summed with the multiplicity ``count_equivalent(beta)``.
    cap : int, optional
        Largest admissible ``|alpha|``; defaults to :func:`enumeration_cap`.
    """
    alpha, beta = _as_index(alpha), _as_index(beta)
    n = sum(alpha)
    if n < 1:
        raise ValueError("enum_partitions requires |alpha| >= 1")
    if not 1 <= sum(beta) <= n:
        raise ValueError("enum_partitions requires 1 <= |beta| <= |alpha|")
    check_cap(n, cap)
    if variant == "type":
        if beta != order(beta):
            raise ValueError("type variant expects an ordered beta")
    elif variant != "standard":
        raise ValueError(f"unknown variant {variant!r}")
    return list(_enum_cached(alpha, beta))


def fdb_weight(term: PartitionTerm, alpha: Sequence[int]) -> Fraction:
    """Chain-rule weight ``alpha! / prod_j eta_j! (zeta_j!)^|eta_j|`` as a Fraction."""
    den = 1
    for eta, zeta in term.blocks():
        den *= mi_factorial(eta) * mi_factorial(zeta) ** sum(eta)
    return Fraction(mi_factorial(alpha), den)
