"""Derivative bounds for the building blocks of a transformer.

Every bound is a :class:`LogMagnitude`.  Level bounds depend on the total
derivative order ``n``; type bounds depend on the sorted multi-index and are
never larger than the level bound of the same order.

Domain radii are Euclidean: ``radius`` bounds the norm of the whole input,
hence also every row and every coordinate.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace
from functools import lru_cache
from typing import Callable, Mapping

from .activations import ActivationKind, activation_bound
from .combinatorics import FactorMode, LogMagnitude, double_factorial, fdb_coeff, lmax
from .multiindex import (check_cap, count_equivalent, enum_ordered, enum_partitions, fdb_weight,
                         mi_factorial, type_key)

__all__ = [
    "ArchSpec",
    "BoundTable",
    "compose_type_raw",
    "dotp_bound",
    "softmax_bound",
    "smax_dotp_level",
    "smax_dotp_type",
    "attention_bound_level",
    "attention_bound_type",
    "multihead_bound_level",
    "multihead_bound_type",
    "ln_g_bound",
    "layernorm_bound_level",
    "layernorm_bound_type",
    "sigma_radius",
    "sigma_bound",
    "feedforward_bound_level",
    "feedforward_bound_type",
    "BLOCKS",
]

LM = LogMagnitude
TypeTable = Callable[[tuple], LogMagnitude]


@dataclass(frozen=True)
class ArchSpec:
    """Architecture and weight caps of one transformer block.

    Weight caps bound the absolute value of every matrix entry.  ``radius``
    bounds the Euclidean norm of the block input.  ``C_beta`` caps the
    layer-norm shift entries; ``gamma2`` defaults to ``gamma``.
    ``sigma_convention`` selects the softplus indexing used by the
    feedforward bound (see :func:`tfbounds.activations.activation_bound`).
    """

    M: int = 1
    i: int = 5
    k: int = 3
    v: int = 5
    l: int = 64
    o: int = 5
    H: int = 1
    C_K: float = 0.1
    C_Q: float = 0.1
    C_V: float = 0.1
    C_W: float = 0.1
    C_A: float = 1.0
    C_B1: float = 1.0
    C_B2: float = 1.0
    gamma: float = 1.0
    w: float = 1.0
    activation: str = "softplus"
    radius: float = 1.0
    C_a: float = 0.0
    C_beta: float = 0.0
    gamma2: float | None = None
    sigma_convention: str = "table"

    def __post_init__(self):
        for name in ("M", "i", "k", "v", "l", "o", "H"):
            val = getattr(self, name)
            if int(val) != val or val < 1:
                raise ValueError(f"{name} must be a positive integer, got {val!r}")
        for name in ("C_K", "C_Q", "C_V", "C_W", "C_A", "C_B1", "C_B2", "gamma",
                     "radius", "C_a", "C_beta"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative, got {getattr(self, name)!r}")
        if self.gamma2 is not None and self.gamma2 < 0:
            raise ValueError("gamma2 must be nonnegative")
        if not 0.0 <= self.w <= 1.0:
            raise ValueError(f"w must lie in [0, 1], got {self.w!r}")
        ActivationKind.parse(self.activation)
        if self.sigma_convention not in ("table", "derivative"):
            raise ValueError("sigma_convention must be 'table' or 'derivative'")

    @property
    def gamma_out(self) -> float:
        return self.gamma if self.gamma2 is None else self.gamma2

    def with_(self, **changes) -> "ArchSpec":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass
class BoundTable:
    """Per-order bounds ``C(n)`` with a cumulative view ``C(<= n)``.

    ``entries`` maps an order to its pointwise (non-cumulative) bound.
    """

    entries: dict = field(default_factory=dict)
    mode: FactorMode = FactorMode.EXACT
    variant: str = "level"
    label: str = ""

    @classmethod
    def from_function(cls, fn: Callable[[int], LogMagnitude], max_order: int, **kw) -> "BoundTable":
        return cls({n: LM.of(fn(n)) for n in range(1, max_order + 1)}, **kw)

    @property
    def max_order(self) -> int:
        return max(self.entries) if self.entries else 0

    def at(self, n: int) -> LogMagnitude:
        if n not in self.entries:
            raise KeyError(f"order {n} missing from table {self.label or ''}".strip())
        return self.entries[n]

    def upto(self, n: int) -> LogMagnitude:
        """Cumulative bound over orders ``1..n``."""
        return lmax(*(self.at(j) for j in range(1, n + 1)))

    def cumulative(self) -> dict:
        return {n: self.upto(n) for n in sorted(self.entries)}


# Type composition ----------------------------------------------------------

def compose_type_raw(outer: TypeTable, inner: TypeTable, alpha, m: int) -> LogMagnitude:
    """Type-grouped chain-rule bound for ``f o g`` with ``g`` having ``m`` outputs.

    ``outer`` and ``inner`` are called with canonical types (sorted, zeros
    dropped).  Evaluates
    ``sum_beta N(beta) C^f(beta) sum_P alpha!/(...) prod C^g(o(zeta))^|eta|``
    over sorted ``beta`` of size ``1..|alpha|``.
    """
    a = type_key(alpha)
    n = sum(a)
    if n == 0:
        raise ValueError("compose_type needs |alpha| >= 1")
    check_cap(n)
    total = LM.zero()
    for size in range(1, n + 1):
        for beta in enum_ordered(min(m, size), size):
            b = tuple(x for x in beta if x > 0)
            cf = LM.of(outer(b))
            if cf.is_zero:
                continue
            inner_sum = LM.zero()
            for term in enum_partitions(a, b, variant="type"):
                prod = LM.of(fdb_weight(term, a))
                for eta, zeta in term.blocks():
                    prod = prod * LM.of(inner(type_key(zeta))) ** sum(eta)
                    if prod.is_zero:
                        break
                inner_sum = inner_sum + prod
            total = total + LM.of(count_equivalent(b, m)) * cf * inner_sum
    return total


def _max1(x: LogMagnitude) -> LogMagnitude:
    # sup-norm tables with the order-0 value (bounded by one) folded in
    return lmax(LM.one(), x)


# Dot product and softmax ---------------------------------------------------

def dotp_bound(spec: ArchSpec, order: int) -> LogMagnitude:
    """Bound on order-``order`` derivatives of one attention score."""
    if order < 1:
        raise ValueError("order must be >= 1")
    if order == 1:
        return LM.of(2 * spec.i * spec.k * spec.radius * spec.C_Q * spec.C_K)
    if order == 2:
        return LM.of(2 * spec.k * spec.C_Q * spec.C_K)
    return LM.zero()


def _dotp_upto(spec: ArchSpec, n: int) -> LogMagnitude:
    return lmax(*(dotp_bound(spec, j) for j in range(1, min(n, 2) + 1)))


def softmax_bound(order: int) -> LogMagnitude:
    """Softmax derivatives of order ``s`` are bounded by ``s!``."""
    if order < 1:
        raise ValueError("order must be >= 1")
    return LM.of(math.factorial(order))


@lru_cache(maxsize=None)
def smax_dotp_level(spec: ArchSpec, n: int, mode: FactorMode) -> LogMagnitude:
    """Level bound of softmax composed with the ``M`` scores of one query."""
    dp = _dotp_upto(spec, n)
    best = lmax(*(softmax_bound(q) * dp**q for q in range(1, n + 1)))
    return best * fdb_coeff(n, spec.M, mode)


def _smax_dotp_upto(spec: ArchSpec, n: int, mode: FactorMode) -> LogMagnitude:
    if n == 0:
        return LM.one()
    return _max1(lmax(*(smax_dotp_level(spec, j, mode) for j in range(1, n + 1))))


@lru_cache(maxsize=None)
def smax_dotp_type(spec: ArchSpec, alpha: tuple) -> LogMagnitude:
    """Type bound of softmax composed with the scores; order zero gives 1."""
    a = type_key(alpha)
    if not a:
        return LM.one()
    return compose_type_raw(lambda b: softmax_bound(sum(b)),
                            lambda z: dotp_bound(spec, sum(z)), a, spec.M)


# Attention and multi-head --------------------------------------------------

def attention_bound_level(spec: ArchSpec, n: int, mode="exact") -> LogMagnitude:
    """``i M C_V C^{smax o dp}(<= n) (r + n i M)`` for one head."""
    if n < 1:
        raise ValueError("n must be >= 1")
    mode = FactorMode.parse(mode)
    s = _smax_dotp_upto(spec, n, mode)
    return LM.of(spec.i * spec.M * spec.C_V) * s * (spec.radius + n * spec.i * spec.M)


def attention_bound_type(spec: ArchSpec, alpha) -> LogMagnitude:
    """Leibniz bound ``i M C_V (r C(alpha) + sum_l alpha_l C(alpha - e_l))`` for one head."""
    a = type_key(alpha)
    if not a:
        raise ValueError("|alpha| must be >= 1")
    check_cap(sum(a))
    shift = LM.zero()
    for pos in range(len(a)):
        lowered = list(a)
        lowered[pos] -= 1
        shift = shift + LM.of(a[pos]) * smax_dotp_type(spec, type_key(lowered))
    main = LM.of(spec.radius) * smax_dotp_type(spec, a)
    return LM.of(spec.i * spec.M * spec.C_V) * (main + shift)


def multihead_bound_level(spec: ArchSpec, n: int, mode="exact") -> LogMagnitude:
    """``H n! v C_W`` times the single-head attention level bound."""
    att = attention_bound_level(spec, n, mode)
    return LM.of(spec.H * math.factorial(n) * spec.v * spec.C_W) * att


def multihead_bound_type(spec: ArchSpec, alpha, mode="exact") -> LogMagnitude:
    """``H alpha! v C_W`` times the single-head attention type bound.

    ``mode`` is accepted for symmetry; type bounds use exact chain-rule weights.
    """
    a = type_key(alpha)
    return LM.of(spec.H * mi_factorial(a) * spec.v * spec.C_W) * attention_bound_type(spec, a)


# Layer norm ----------------------------------------------------------------

def ln_g_bound(m: int, constants: str = "paper") -> float:
    """Bound on the m-th derivative of ``u -> (1 + u)^(-1/2)`` for ``u >= 0``.

    ``"paper"`` gives ``(2m+1)!!/4^m``; ``"exact"`` gives the true supremum
    ``(2m-1)!!/2^m``; ``"safe"`` takes the larger of the two.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    paper = double_factorial(2 * m + 1) / 4**m
    exact = (double_factorial(2 * m - 1) if m > 0 else 1) / 2**m
    if constants == "paper":
        return paper
    if constants == "exact":
        return exact
    if constants == "safe":
        return max(paper, exact)
    raise ValueError(f"unknown constants {constants!r}")


def _sigma_stat_bound(radius: float, w: float, order: int) -> float:
    # derivatives of the weighted variance statistic
    if order == 1:
        return 2.0 * w * radius
    if order == 2:
        return 2.0 * w
    return 0.0


@lru_cache(maxsize=None)
def _ln_inner_level(radius: float, w: float, n: int, mode: FactorMode, constants: str) -> LogMagnitude:
    # C^Sigma(<= n) * max_{m <= n} C^g(m) * coef(n, 1), following the level corollary
    c_sigma = max(_sigma_stat_bound(radius, w, j) for j in range(1, min(n, 2) + 1))
    c_g = max(ln_g_bound(j, constants) for j in range(1, n + 1))
    return LM.of(c_sigma * c_g) * fdb_coeff(n, 1, mode)


def layernorm_bound_level(radius: float, width: int, gamma: float, w: float, n: int,
                          mode="exact", constants: str = "paper") -> LogMagnitude:
    """Level bound ``gamma G(<= n) (r + width n)`` for a layer norm on ``R^width``.

    ``G(<= n)`` is ``2 w r (2n+1)!! 4^-n`` times the coefficient factor, with
    the order-0 value 1 folded in.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0.0 <= w <= 1.0:
        raise ValueError("w must lie in [0, 1]")
    mode = FactorMode.parse(mode)
    g = _max1(lmax(*(_ln_inner_level(float(radius), float(w), j, mode, constants)
                     for j in range(1, n + 1))))
    return LM.of(gamma) * g * (radius + width * n)


@lru_cache(maxsize=None)
def _g_sigma_type(radius: float, w: float, alpha: tuple, constants: str) -> LogMagnitude:
    if not alpha:
        return LM.one()
    return compose_type_raw(lambda b: LM.of(ln_g_bound(sum(b), constants)),
                            lambda z: LM.of(_sigma_stat_bound(radius, w, sum(z))), alpha, 1)


def layernorm_bound_type(radius: float, width: int, gamma: float, w: float, alpha,
                         constants: str = "paper") -> LogMagnitude:
    """Type bound from the product rule ``gamma D^alpha (f (g o Sigma))``.

    ``|f| <= r`` and ``|D f| <= 1``, so the bound is
    ``gamma (r C(alpha) + sum_l alpha_l C(alpha - e_l))`` with ``C`` the
    type bound of ``g o Sigma`` and ``C(0) = 1``.
    """
    a = type_key(alpha)
    if not a:
        raise ValueError("|alpha| must be >= 1")
    check_cap(sum(a))
    if not 0.0 <= w <= 1.0:
        raise ValueError("w must lie in [0, 1]")
    radius, w = float(radius), float(w)
    shift = LM.zero()
    for pos in range(len(a)):
        lowered = list(a)
        lowered[pos] -= 1
        shift = shift + LM.of(a[pos]) * _g_sigma_type(radius, w, type_key(lowered), constants)
    main = LM.of(radius) * _g_sigma_type(radius, w, a, constants)
    product_rule = LM.of(gamma) * (main + shift)
    # the level corollary is linear in the variance bound, so it can undercut
    # the expansion; the type bound is capped by it to keep type <= level
    level = layernorm_bound_level(radius, width, gamma, w, sum(a), FactorMode.EXACT, constants)
    return min(product_rule, level)


# Feedforward ---------------------------------------------------------------

def sigma_radius(spec: ArchSpec, radius: float | None = None) -> float:
    """Radius of the pre-activation interval ``C_a + C_A sqrt(i) r``."""
    r = spec.radius if radius is None else radius
    return spec.C_a + spec.C_A * math.sqrt(spec.i) * r


def sigma_bound(spec: ArchSpec, n: int, radius: float | None = None) -> float:
    rho = sigma_radius(spec, radius)
    return activation_bound(spec.activation, n, (-rho, rho), spec.sigma_convention)


def _sigma_upto(spec: ArchSpec, n: int, radius: float | None) -> float:
    return max(sigma_bound(spec, j, radius) for j in range(1, n + 1))


def feedforward_bound_level(spec: ArchSpec, n: int, mode="exact", radius: float | None = None) -> LogMagnitude:
    """``C_B1 [n = 1] + l n! C_B2 C^sigma(<= n) C_A^n`` times the coefficient factor."""
    if n < 1:
        raise ValueError("n must be >= 1")
    mode = FactorMode.parse(mode)
    skip = LM.of(spec.C_B1) if n == 1 else LM.zero()
    core = (LM.of(spec.l * math.factorial(n) * spec.C_B2 * _sigma_upto(spec, n, radius))
            * LM.of(spec.C_A) ** n * fdb_coeff(n, 1, mode))
    return skip + core


def feedforward_bound_type(spec: ArchSpec, alpha, radius: float | None = None) -> LogMagnitude:
    """``C_B1 [|alpha| = 1] + l C_B2 C^{sigma o A}(alpha)`` with an affine inner map."""
    a = type_key(alpha)
    if not a:
        raise ValueError("|alpha| must be >= 1")
    skip = LM.of(spec.C_B1) if sum(a) == 1 else LM.zero()
    inner = compose_type_raw(lambda b: LM.of(sigma_bound(spec, sum(b), radius)),
                             lambda z: LM.of(spec.C_A) if sum(z) == 1 else LM.zero(), a, 1)
    return skip + LM.of(spec.l * spec.C_B2) * inner


# Dispatch used by the CLI --------------------------------------------------

def _block_level(spec: ArchSpec, block: str, n: int, mode) -> LogMagnitude:
    if block == "dotp":
        return dotp_bound(spec, n)
    if block == "softmax":
        return softmax_bound(n)
    if block == "attention":
        return attention_bound_level(spec, n, mode)
    if block == "multihead":
        return multihead_bound_level(spec, n, mode)
    if block == "layernorm":
        return layernorm_bound_level(spec.radius, spec.i, spec.gamma, spec.w, n, mode)
    if block == "feedforward":
        return feedforward_bound_level(spec, n, mode)
    raise ValueError(f"unknown block {block!r}")


def _block_type(spec: ArchSpec, block: str, alpha, mode) -> LogMagnitude:
    n = sum(alpha)
    if block == "dotp":
        return dotp_bound(spec, n)
    if block == "softmax":
        return softmax_bound(n)
    if block == "attention":
        return attention_bound_type(spec, alpha)
    if block == "multihead":
        return multihead_bound_type(spec, alpha, mode)
    if block == "layernorm":
        return layernorm_bound_type(spec.radius, spec.i, spec.gamma, spec.w, alpha)
    if block == "feedforward":
        return feedforward_bound_type(spec, alpha)
    raise ValueError(f"unknown block {block!r}")


BLOCKS: Mapping[str, tuple] = {
    name: (name,) for name in ("dotp", "softmax", "attention", "multihead", "layernorm", "feedforward")
}


def block_input_dim(spec: ArchSpec, block: str) -> int:
    """Number of scalar inputs of a component, used to enumerate types."""
    if block == "softmax":
        return spec.M
    if block in ("layernorm", "feedforward"):
        return spec.i
    return spec.M * spec.i


def block_bound(spec: ArchSpec, block: str, variant: str, alpha_or_n, mode="exact") -> LogMagnitude:
    """Level bound (``alpha_or_n`` an int) or type bound (a multi-index)."""
    if variant == "level":
        return _block_level(spec, block, int(alpha_or_n), FactorMode.parse(mode))
    if variant == "type":
        return _block_type(spec, block, tuple(alpha_or_n), FactorMode.parse(mode))
    raise ValueError(f"unknown variant {variant!r}")
