"""Right-hand side of the pathwise generalization bound.

The bound at derivative order ``s`` is ``C_s (kappa^t + rate_s(N) + sqrt(2 ln(1/delta)) / sqrt(N))``
with an absolute constant set to one.  Natural logarithms throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .combinatorics import LogMagnitude

__all__ = [
    "DEFAULT_TAU_CAP",
    "GenBoundInput",
    "rate",
    "log_rate",
    "bound_terms",
    "assembled_bound",
    "envelope",
    "transition_times",
]

DEFAULT_TAU_CAP = 10**12
LM = LogMagnitude


@dataclass(frozen=True)
class GenBoundInput:
    """Inputs of the bound: contraction ``kappa``, confidence ``delta``, samples ``N``,
    horizon ``t`` (``math.inf`` allowed), lifted dimension ``Md`` and constants ``C_s``."""

    kappa: float
    delta: float
    N: int
    t: float
    Md: int
    constants: Mapping[int, LogMagnitude] = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 < self.kappa < 1.0:
            raise ValueError("kappa must lie in (0, 1)")
        if not 0.0 < self.delta <= 1.0:
            raise ValueError("delta must lie in (0, 1]")
        if self.N < 1:
            raise ValueError("N must be >= 1")
        if not (self.t == math.inf or self.t >= self.N):
            raise ValueError("t must satisfy t >= N or be infinite")
        if self.Md < 1:
            raise ValueError("Md must be >= 1")
        consts = {int(s): LM.of(c) for s, c in dict(self.constants).items()}
        if not consts:
            raise ValueError("constants must be nonempty")
        keys = sorted(consts)
        if keys[0] not in (0, 1) or keys != list(range(keys[0], keys[-1] + 1)):
            raise ValueError("constants must be indexed contiguously from 0 or 1")
        object.__setattr__(self, "constants", consts)

    def with_(self, **changes) -> "GenBoundInput":
        data = dict(kappa=self.kappa, delta=self.delta, N=self.N, t=self.t, Md=self.Md,
                    constants=self.constants)
        data.update(changes)
        return GenBoundInput(**data)

    @property
    def orders(self) -> list[int]:
        return sorted(self.constants)


def log_rate(N: float, s: int, Md: int, kappa: float) -> float:
    """Natural log of :func:`rate`, usable far beyond float range of N."""
    c = 1.0 - kappa
    if N < 1 or c * N <= 1.0:
        raise ValueError("rate requires c N > 1 with c = 1 - kappa")
    if s < 0:
        raise ValueError("s must be >= 0")
    L = math.log(math.log(c * N))
    lnN, lnc = math.log(N), math.log(c)
    if Md > 2 * s:
        p = Md - 2 * s + s / Md
        q = s / Md
        return p * L - q * lnc - q * lnN
    if Md == 2 * s:
        return L - lnc - 0.5 * lnN
    return Md / (2 * s + 1) * L - lnc - 0.5 * lnN


def rate(N: float, s: int, Md: int, kappa: float) -> float:
    """Three-phase rate: polylog over a power of ``N`` depending on ``Md`` versus ``2s``."""
    return math.exp(log_rate(N, s, Md, kappa))


def bound_terms(inp: GenBoundInput, s: int) -> tuple[float, float, float]:
    """(time, complexity, high-probability) terms of the bound at order ``s``."""
    time_term = 0.0 if inp.t == math.inf else inp.kappa ** inp.t
    hprob = math.sqrt(2.0 * math.log(1.0 / inp.delta)) / math.sqrt(inp.N)
    return time_term, rate(inp.N, s, inp.Md, inp.kappa), hprob


def assembled_bound(inp: GenBoundInput, s: int) -> LogMagnitude:
    """``C_s`` times the sum of the three terms."""
    if s not in inp.constants:
        raise KeyError(f"no constant for order {s}")
    return inp.constants[s] * LM.of(sum(bound_terms(inp, s)))


def envelope(inp: GenBoundInput, N_range: Sequence[int], s_max: int) -> list[tuple[int, int, LogMagnitude]]:
    """Per ``N`` the order minimizing the assembled bound (ties go to the smaller order)."""
    if not N_range:
        raise ValueError("N_range must be nonempty")
    orders = [s for s in inp.orders if s <= s_max]
    if not orders:
        raise ValueError("no constants at or below s_max")
    out = []
    for N in N_range:
        cur = inp.with_(N=int(N), t=max(inp.t, N))
        best_s, best = None, None
        for s in orders:
            val = assembled_bound(cur, s)
            if best is None or val < best:
                best_s, best = s, val
        out.append((int(N), best_s, best))
    return out


def _log_bound_at(inp: GenBoundInput, s: int, N: int) -> float:
    cur = inp.with_(N=N, t=N)
    return assembled_bound(cur, s).log10


def transition_times(inp: GenBoundInput, s_max: int, cap: int = DEFAULT_TAU_CAP) -> list[int | None]:
    """Transition times ``tau_0 = 0`` and, for ``s >= 1``, the least ``N >= tau_{s-1}``
    at which the order-``s`` bound (with ``t = N``) drops to the order-``(s-1)`` bound.

    Entries are ``None`` when no such ``N`` exists below ``cap``; all later
    entries are then ``None`` as well.
    """
    orders = inp.orders
    if orders[0] != 0:
        raise ValueError("transition times need a constant for s = 0")
    if s_max > orders[-1]:
        raise ValueError("constants do not cover s_max")
    # rate needs (1 - kappa) N > 1
    n_min = math.floor(1.0 / (1.0 - inp.kappa)) + 1
    taus: list[int | None] = [0]
    for s in range(1, s_max + 1):
        prev = taus[-1]
        if prev is None:
            taus.append(None)
            continue
        lo = max(prev, n_min)

        def ok(N, s=s):
            return _log_bound_at(inp, s, N) <= _log_bound_at(inp, s - 1, N)

        if ok(lo):
            taus.append(lo)
            continue
        hi = lo
        while not ok(hi):
            if hi >= cap:
                hi = None
                break
            hi = min(2 * hi, cap)
        if hi is None:
            taus.append(None)
            continue
        # ok(lo) is false and ok(hi) true; bisect for the first crossing
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if ok(mid):
                hi = mid
            else:
                lo = mid
        taus.append(hi)
    return taus
