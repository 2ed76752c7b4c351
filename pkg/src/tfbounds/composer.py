"""Chain-rule composition of bound tables, transformer blocks and deep stacks."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

from .activations import activation_sup
from .combinatorics import FactorMode, LogMagnitude, fdb_coeff, lmax
from .multiindex import EnumerationCapError, check_cap, enum_ordered, mi_factorial, type_key
from .primitives import (ArchSpec, BoundTable, compose_type_raw, feedforward_bound_level,
                         feedforward_bound_type, layernorm_bound_level, layernorm_bound_type,
                         multihead_bound_level, multihead_bound_type, sigma_radius)

__all__ = [
    "GrowthClass",
    "TransformerSpec",
    "BlockRadii",
    "block_radii",
    "compose_level",
    "compose_type",
    "tblock_bound_level",
    "tblock_bound_type",
    "tblock_table",
    "transformer_bound",
    "transformer_table",
    "loss_constant",
]

LM = LogMagnitude


@dataclass(frozen=True)
class GrowthClass:
    """Growth of ``C^s`` norms in ``s``: ``C s^r`` (poly), ``C e^(s r)`` (exp) or ``C`` (none)."""

    kind: str = "none"
    C: float = 1.0
    r: float = 0.0

    def __post_init__(self):
        if self.kind not in ("poly", "exp", "none"):
            raise ValueError(f"unknown growth kind {self.kind!r}")
        if self.C < 0 or self.r < 0:
            raise ValueError("growth constants must be nonnegative")

    def value(self, s: int) -> LogMagnitude:
        c = LM.of(self.C)
        if self.kind == "poly":
            return c * LM.of(float(s)) ** self.r
        if self.kind == "exp":
            return c * LM(s * self.r / math.log(10.0))
        return c


@dataclass(frozen=True)
class TransformerSpec:
    """A stack of blocks followed by an affine read-out ``R^(M o_L) -> R^d``.

    The first block's ``radius`` is the input radius; later radii are
    propagated from the block outputs.
    """

    blocks: tuple
    final_A_bound: float = 1.0
    final_b_bound: float = 0.0
    out_dim: int = 1

    def __post_init__(self):
        blocks = tuple(self.blocks)
        object.__setattr__(self, "blocks", blocks)
        if not blocks:
            raise ValueError("a transformer needs at least one block")
        for a, b in zip(blocks, blocks[1:]):
            if a.o != b.i:
                raise ValueError(f"dimension chain broken: o={a.o} feeds i={b.i}")
            if a.M != b.M:
                raise ValueError("all blocks must share the sequence length M")
        if self.final_A_bound < 0 or self.final_b_bound < 0:
            raise ValueError("final bounds must be nonnegative")
        if self.out_dim < 1:
            raise ValueError("out_dim must be >= 1")

    @property
    def depth(self) -> int:
        return len(self.blocks)


# Composition engines -------------------------------------------------------

def compose_level(outer: BoundTable, inner: BoundTable, m: int, n: int, mode="exact") -> LogMagnitude:
    """Level bound ``max_{n' <= n} C^f(n') C^g(<= n)^n' * coef(n, m)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if outer.max_order < n or inner.max_order < n:
        raise KeyError(f"tables must cover order {n}")
    g = inner.upto(n)
    best = lmax(*(outer.at(q) * g**q for q in range(1, n + 1)))
    return best * fdb_coeff(n, m, FactorMode.parse(mode))


def compose_type(outer: Callable, inner: Callable, alpha, m: int) -> LogMagnitude:
    """Type bound of ``f o g``; ``outer``/``inner`` map canonical types to bounds."""
    return compose_type_raw(outer, inner, alpha, m)


# Domain radii --------------------------------------------------------------

@dataclass(frozen=True)
class BlockRadii:
    """Euclidean radii of intermediate values of one block (per row unless noted)."""

    r_in: float
    r1: float
    r2: float
    sigma: float
    r3: float
    r_out_row: float
    r_out: float


def _ln_out_radius(r: float, width: int, gamma: float, w: float, beta_cap: float) -> float:
    # |f g| <= min(|f|, sqrt(width / w)) and |f| <= |u|
    core = r if w == 0 else min(r, math.sqrt(width / w))
    return gamma * core + math.sqrt(width) * beta_cap


def block_radii(spec: ArchSpec) -> BlockRadii:
    r = spec.radius
    # every attention output coordinate is a convex combination of V x_j entries
    mh_coord = spec.H * spec.v * spec.C_W * spec.C_V * math.sqrt(spec.i) * r
    r1 = r + math.sqrt(spec.i) * mh_coord
    r2 = _ln_out_radius(r1, spec.i, spec.gamma, spec.w, spec.C_beta)
    rho = sigma_radius(spec, r2)
    ff_coord = spec.C_B1 * math.sqrt(spec.i) * r2 + spec.l * spec.C_B2 * activation_sup(spec.activation, rho)
    r3 = math.sqrt(spec.o) * ff_coord
    r_out_row = _ln_out_radius(r3, spec.o, spec.gamma_out, spec.w, spec.C_beta)
    return BlockRadii(r, r1, r2, rho, r3, r_out_row, math.sqrt(spec.M) * r_out_row)


# Transformer block ---------------------------------------------------------

@lru_cache(maxsize=None)
def _block_level_tables(spec: ArchSpec, n: int, mode: FactorMode):
    rad = block_radii(spec)
    orders = range(1, n + 1)
    c1 = BoundTable({j: (LM.one() if j == 1 else LM.zero()) + multihead_bound_level(spec, j, mode)
                     for j in orders}, mode, "level", "identity+multihead")
    ln1 = BoundTable({j: layernorm_bound_level(rad.r1, spec.i, spec.gamma, spec.w, j, mode)
                      for j in orders}, mode, "level", "layernorm1")
    c2 = BoundTable({j: compose_level(ln1, c1, spec.i, j, mode) for j in orders}, mode, "level", "C2")
    ff = BoundTable({j: feedforward_bound_level(spec, j, mode, radius=rad.r2) for j in orders},
                    mode, "level", "feedforward")
    c3 = BoundTable({j: compose_level(ff, c2, spec.i, j, mode) for j in orders}, mode, "level", "C3")
    ln2 = BoundTable({j: layernorm_bound_level(rad.r3, spec.o, spec.gamma_out, spec.w, j, mode)
                      for j in orders}, mode, "level", "layernorm2")
    tb = BoundTable({j: compose_level(ln2, c3, spec.o, j, mode) for j in orders}, mode, "level", "block")
    return tb


def tblock_bound_level(spec: ArchSpec, n: int, mode="exact") -> LogMagnitude:
    """Level bound of one block: identity+multi-head, layer norm, feedforward, layer norm."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return _block_level_tables(spec, n, FactorMode.parse(mode)).at(n)


@lru_cache(maxsize=None)
def _c1_type(spec: ArchSpec, a: tuple) -> LogMagnitude:
    ident = LM.one() if sum(a) == 1 else LM.zero()
    return ident + multihead_bound_type(spec, a)


@lru_cache(maxsize=None)
def _c2_type(spec: ArchSpec, a: tuple) -> LogMagnitude:
    r1 = block_radii(spec).r1
    return compose_type_raw(lambda b: layernorm_bound_type(r1, spec.i, spec.gamma, spec.w, b),
                            lambda z: _c1_type(spec, z), a, spec.i)


@lru_cache(maxsize=None)
def _c3_type(spec: ArchSpec, a: tuple) -> LogMagnitude:
    r2 = block_radii(spec).r2
    return compose_type_raw(lambda b: feedforward_bound_type(spec, b, radius=r2),
                            lambda z: _c2_type(spec, z), a, spec.i)


@lru_cache(maxsize=None)
def _tb_type(spec: ArchSpec, a: tuple) -> LogMagnitude:
    r3 = block_radii(spec).r3
    return compose_type_raw(lambda b: layernorm_bound_type(r3, spec.o, spec.gamma_out, spec.w, b),
                            lambda z: _c3_type(spec, z), a, spec.o)


def tblock_bound_type(spec: ArchSpec, alpha, mode="exact") -> LogMagnitude:
    """Type bound of one block via three nested type compositions.

    ``mode`` is accepted for interface symmetry; type bounds use exact weights.
    """
    a = type_key(alpha)
    if not a:
        raise ValueError("|alpha| must be >= 1")
    check_cap(sum(a))
    return _tb_type(spec, a)


def _types_of_order(dim: int, n: int) -> list[tuple]:
    return [type_key(t) for t in enum_ordered(min(dim, n), n)]


def tblock_table(spec: ArchSpec, max_order: int, variant: str = "level", mode="exact") -> BoundTable:
    """Per-order block bounds; the type variant takes the worst type of each order."""
    mode = FactorMode.parse(mode)
    if variant == "level":
        entries = {n: tblock_bound_level(spec, n, mode) for n in range(1, max_order + 1)}
    elif variant == "type":
        entries = {n: lmax(*(tblock_bound_type(spec, t) for t in _types_of_order(spec.M * spec.i, n)))
                   for n in range(1, max_order + 1)}
    else:
        raise ValueError(f"unknown variant {variant!r}")
    return BoundTable(entries, mode, variant, "block")


# Deep transformer ----------------------------------------------------------

def _chained_blocks(spec: TransformerSpec) -> list[ArchSpec]:
    out = [spec.blocks[0]]
    for nxt in spec.blocks[1:]:
        out.append(nxt.with_(radius=block_radii(out[-1]).r_out))
    return out


def _prefactor(spec: TransformerSpec) -> LogMagnitude:
    # o^L M C_A, with o^L read as the product of block output widths
    widths = math.prod(b.o for b in spec.blocks)
    return LM.of(widths * spec.blocks[0].M) * LM.of(spec.final_A_bound)


def transformer_bound(spec: TransformerSpec, alpha, mode="exact", variant: str = "type",
                      fallback: bool = True) -> LogMagnitude:
    """Derivative bound of the full transformer ``o^L M alpha! C_A C^L(alpha)``.

    The type variant folds block type bounds through the chain rule; if the
    enumeration cap is hit and ``fallback`` is set, the level recursion is used
    instead and a warning is issued.
    """
    a = type_key(alpha)
    if not a:
        raise ValueError("|alpha| must be >= 1")
    mode = FactorMode.parse(mode)
    n = sum(a)
    blocks = _chained_blocks(spec)
    if variant == "type":
        try:
            inner = lambda t, b=blocks[0]: tblock_bound_type(b, t)  # noqa: E731
            for blk in blocks[1:]:
                inner = _fold_type(blk, inner)
            core = inner(a)
        except EnumerationCapError:
            if not fallback:
                raise
            warnings.warn(f"order {n} exceeds the enumeration cap; using the level recursion",
                          RuntimeWarning, stacklevel=2)
            return transformer_bound(spec, a, mode, "level")
        return _prefactor(spec) * LM.of(mi_factorial(a)) * core
    if variant == "level":
        table = tblock_table(blocks[0], n, "level", mode)
        for blk in blocks[1:]:
            outer = tblock_table(blk, n, "level", mode)
            table = BoundTable({j: compose_level(outer, table, blk.M * blk.i, j, mode)
                                for j in range(1, n + 1)}, mode, "level", "stack")
        return _prefactor(spec) * LM.of(math.factorial(n)) * table.at(n)
    raise ValueError(f"unknown variant {variant!r}")


def _fold_type(blk: ArchSpec, inner: Callable) -> Callable:
    cache: dict = {}

    def outer_of(t):
        return tblock_bound_type(blk, t)

    def composed(t):
        t = type_key(t)
        if t not in cache:
            cache[t] = compose_type_raw(outer_of, inner, t, blk.M * blk.i)
        return cache[t]

    return composed


def transformer_table(spec: TransformerSpec, max_order: int, variant: str = "type", mode="exact") -> BoundTable:
    """Per-order transformer bounds (worst type per order for the type variant)."""
    mode = FactorMode.parse(mode)
    dim = spec.blocks[0].M * spec.blocks[0].i
    entries = {}
    for n in range(1, max_order + 1):
        if variant == "level":
            entries[n] = transformer_bound(spec, (n,), mode, "level")
        else:
            entries[n] = lmax(*(transformer_bound(spec, t, mode, variant) for t in _types_of_order(dim, n)))
    return BoundTable(entries, mode, variant, "transformer")


def loss_constant(transformer_table: BoundTable, target: GrowthClass, loss: GrowthClass, D: int, s: int,
                  mode="exact") -> LogMagnitude:
    """Composition constant ``C~_s (C1 C2)^s coef(s, 2D)`` of loss, target and model.

    ``C~_s`` comes from the loss growth class, ``C1`` is the target growth at
    order ``s`` and ``C2`` the cumulative transformer bound up to ``s``.
    """
    if s < 1:
        raise ValueError("s must be >= 1")
    if D < 1:
        raise ValueError("D must be >= 1")
    c1 = target.value(s)
    c2 = transformer_table.upto(s)
    return loss.value(s) * (c1 * c2) ** s * fdb_coeff(s, 2 * D, FactorMode.parse(mode))
