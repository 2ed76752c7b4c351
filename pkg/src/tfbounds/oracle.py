"""Concrete small transformers and a finite-difference soundness oracle.

Networks are sampled with every parameter uniform in ``[-cap, cap]`` and
evaluated in batch.  Mixed partial derivatives are estimated with tensor
product central differences and one Richardson step, then compared with the
analytic type and level bounds.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .activations import activation
from .combinatorics import FactorMode
from .composer import TransformerSpec, tblock_bound_level, tblock_bound_type
from .multiindex import type_key
from .primitives import (ArchSpec, attention_bound_level, attention_bound_type, dotp_bound,
                         feedforward_bound_level, feedforward_bound_type, layernorm_bound_level,
                         layernorm_bound_type, multihead_bound_level, multihead_bound_type)

__all__ = [
    "COMPONENTS",
    "ConcreteNetwork",
    "EmpiricalEstimate",
    "default_step",
    "numeric_partial",
    "sample_ball",
    "empirical_cs",
    "analytic_bounds",
    "soundness_check",
]

COMPONENTS = ("dotp", "attention", "multihead", "layernorm", "feedforward", "block")


def _uniform(rng: np.random.Generator, cap: float, shape) -> np.ndarray:
    return rng.uniform(-cap, cap, size=shape)


@dataclass
class ConcreteNetwork:
    """A sampled instance of one component (or a whole transformer).

    Parameters
    ----------
    spec : ArchSpec or TransformerSpec
    component : str
        One of :data:`COMPONENTS`, or ``"transformer"`` for a TransformerSpec.
    seed : int
    """

    spec: object
    component: str = "block"
    seed: int = 0
    params: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if isinstance(self.spec, TransformerSpec):
            self.component = "transformer"
        elif self.component not in COMPONENTS:
            raise ValueError(f"unknown component {self.component!r}")
        rng = np.random.default_rng(self.seed)
        if self.component == "transformer":
            self.params = {"blocks": [self._sample_block(rng, b) for b in self.spec.blocks]}
            last = self.spec.blocks[-1]
            din = last.M * last.o
            self.params["A_out"] = _uniform(rng, self.spec.final_A_bound, (self.spec.out_dim, din))
            self.params["b_out"] = _uniform(rng, self.spec.final_b_bound, (self.spec.out_dim,))
        else:
            self.params = self._sample_block(rng, self.spec)

    @staticmethod
    def _sample_block(rng: np.random.Generator, s: ArchSpec) -> dict:
        return {
            "Q": _uniform(rng, s.C_Q, (s.H, s.k, s.i)),
            "K": _uniform(rng, s.C_K, (s.H, s.k, s.i)),
            "V": _uniform(rng, s.C_V, (s.H, s.v, s.i)),
            "W": _uniform(rng, s.C_W, (s.H, s.i, s.v)),
            "gamma1": float(_uniform(rng, s.gamma, ())),
            "beta1": _uniform(rng, s.C_beta, (s.i,)),
            "A": _uniform(rng, s.C_A, (s.l, s.i)),
            "a": _uniform(rng, s.C_a, (s.l,)),
            "B1": _uniform(rng, s.C_B1, (s.o, s.i)),
            "B2": _uniform(rng, s.C_B2, (s.o, s.l)),
            "gamma2": float(_uniform(rng, s.gamma_out, ())),
            "beta2": _uniform(rng, s.C_beta, (s.o,)),
        }

    @property
    def input_dim(self) -> int:
        s = self.spec.blocks[0] if self.component == "transformer" else self.spec
        if self.component in ("layernorm", "feedforward"):
            return s.i
        return s.M * s.i

    # forward pieces; all take a batch of shape (B, M, i) or (B, i)

    @staticmethod
    def _scores(p: dict, s: ArchSpec, x: np.ndarray, head: int) -> np.ndarray:
        q = np.einsum("ki,bmi->bmk", p["Q"][head], x)
        k = np.einsum("ki,bmi->bmk", p["K"][head], x)
        return np.einsum("bmk,bjk->bmj", q, k) / math.sqrt(s.k)

    @classmethod
    def _attention(cls, p: dict, s: ArchSpec, x: np.ndarray, head: int) -> np.ndarray:
        sc = cls._scores(p, s, x, head)
        sc = sc - sc.max(axis=-1, keepdims=True)
        wts = np.exp(sc)
        wts /= wts.sum(axis=-1, keepdims=True)
        vals = np.einsum("vi,bji->bjv", p["V"][head], x)
        return np.einsum("bmj,bjv->bmv", wts, vals)

    @classmethod
    def _multihead(cls, p: dict, s: ArchSpec, x: np.ndarray) -> np.ndarray:
        out = 0.0
        for h in range(s.H):
            out = out + np.einsum("iv,bmv->bmi", p["W"][h], cls._attention(p, s, x, h))
        return out

    @staticmethod
    def _layernorm(u: np.ndarray, gamma: float, beta: np.ndarray, w: float) -> np.ndarray:
        width = u.shape[-1]
        f = u - w * u.mean(axis=-1, keepdims=True)
        var = (w / width) * np.sum(f * f, axis=-1, keepdims=True)
        return gamma * f / np.sqrt(1.0 + var) + beta

    @staticmethod
    def _feedforward(p: dict, s: ArchSpec, x: np.ndarray) -> np.ndarray:
        pre = x @ p["A"].T + p["a"]
        return x @ p["B1"].T + activation(s.activation, pre) @ p["B2"].T

    @classmethod
    def _block(cls, p: dict, s: ArchSpec, x: np.ndarray) -> np.ndarray:
        u = x + cls._multihead(p, s, x)
        xp = cls._layernorm(u, p["gamma1"], p["beta1"], s.w)
        z = cls._feedforward(p, s, xp)
        return cls._layernorm(z, p["gamma2"], p["beta2"], s.w)

    def evaluate(self, x) -> np.ndarray:
        """Forward pass; accepts one flat input or a batch ``(B, input_dim)``."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        xb = np.atleast_2d(x)
        if xb.shape[-1] != self.input_dim:
            raise ValueError(f"expected inputs of dimension {self.input_dim}, got {xb.shape[-1]}")
        out = self._forward(xb)
        out = out.reshape(out.shape[0], -1)
        return out[0] if single else out

    __call__ = evaluate

    def _forward(self, xb: np.ndarray) -> np.ndarray:
        c, p = self.component, self.params
        if c == "transformer":
            s0 = self.spec.blocks[0]
            h = xb.reshape(-1, s0.M, s0.i)
            for blk, bp in zip(self.spec.blocks, p["blocks"]):
                h = self._block(bp, blk, h)
            flat = h.reshape(h.shape[0], -1)
            return flat @ p["A_out"].T + p["b_out"]
        s = self.spec
        if c == "layernorm":
            return self._layernorm(xb, p["gamma1"], p["beta1"], s.w)
        if c == "feedforward":
            return self._feedforward(p, s, xb)
        x3 = xb.reshape(-1, s.M, s.i)
        if c == "dotp":
            return self._scores(p, s, x3, 0)
        if c == "attention":
            return self._attention(p, s, x3, 0)
        if c == "multihead":
            return self._multihead(p, s, x3)
        return self._block(p, s, x3)


@dataclass(frozen=True)
class EmpiricalEstimate:
    alpha: tuple
    value: float
    step: float
    sample_points: int


def default_step(order: int) -> float:
    return 1e-3 if order <= 1 else 1e-2


# one-dimensional central stencils: (offsets, weights), error O(h^2)
_STENCILS = {
    0: ((0,), (1.0,)),
    1: ((-1, 1), (-0.5, 0.5)),
    2: ((-1, 0, 1), (1.0, -2.0, 1.0)),
    3: ((-2, -1, 1, 2), (-0.5, 1.0, -1.0, 0.5)),
}


def _stencil(alpha: tuple) -> tuple[np.ndarray, np.ndarray]:
    axes = [(c, a) for c, a in enumerate(alpha) if a > 0]
    offs, wts = [], []
    for combo in itertools.product(*(zip(*_STENCILS[a]) for _, a in axes)):
        off = np.zeros(len(alpha))
        w = 1.0
        for (c, _), (o, wt) in zip(axes, combo):
            off[c] = o
            w *= wt
        offs.append(off)
        wts.append(w)
    return np.array(offs), np.array(wts)


def _batched_partial(f: Callable, xs: np.ndarray, alpha: tuple, h: float) -> np.ndarray:
    """Richardson-extrapolated estimate of D^alpha f at every row of ``xs``."""
    n = sum(alpha)
    if n == 0:
        return np.atleast_2d(f(xs))
    if n > 3:
        raise ValueError("numeric_partial supports |alpha| <= 3")
    offs, wts = _stencil(alpha)

    def est(step):
        pts = xs[:, None, :] + step * offs[None, :, :]
        vals = np.asarray(f(pts.reshape(-1, xs.shape[1])), dtype=float)
        vals = vals.reshape(xs.shape[0], len(wts), -1)
        return np.einsum("bsq,s->bq", vals, wts) / step**n

    coarse, fine = est(h), est(h / 2.0)
    out = (4.0 * fine - coarse) / 3.0
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite function values in finite differences")
    return out


def numeric_partial(f: Callable, x, alpha, h: float | None = None) -> np.ndarray:
    """Nested central-difference estimate of ``D^alpha f(x)``.

    Parameters
    ----------
    f : callable
        Maps a batch ``(B, k)`` to ``(B, q)`` or ``(B,)``; a scalar function of
        one point is wrapped automatically.
    x : array_like, shape (k,)
    alpha : sequence of int, ``|alpha| <= 3``
    h : float, optional
        Step in ``[1e-5, 1e-1]``; defaults to :func:`default_step`.
    """
    alpha = tuple(int(a) for a in alpha)
    x = np.asarray(x, dtype=float).reshape(1, -1)
    if len(alpha) != x.shape[1]:
        raise ValueError("alpha and x have different dimensions")
    h = default_step(sum(alpha)) if h is None else float(h)
    if not 1e-5 <= h <= 1e-1:
        raise ValueError("step must lie in [1e-5, 1e-1]")

    def fb(pts):
        try:
            out = np.asarray(f(pts), dtype=float)
            if out.shape[:1] == (pts.shape[0],):
                return out.reshape(pts.shape[0], -1)
        except Exception:
            pass
        return np.array([np.atleast_1d(f(p)) for p in pts], dtype=float)

    out = _batched_partial(fb, x, alpha, h)[0]
    return out[0] if out.size == 1 else out


def sample_ball(dim: int, radius: float, count: int, seed: int) -> np.ndarray:
    """Deterministic points in the closed Euclidean ball, a quarter on the sphere."""
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((count, dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = radius * rng.uniform(0.0, 1.0, size=(count, 1)) ** (1.0 / dim)
    r[: max(count // 4, 1)] = radius
    return g * r


def _all_indices(dim: int, n: int):
    for combo in itertools.combinations_with_replacement(range(dim), n):
        alpha = [0] * dim
        for c in combo:
            alpha[c] += 1
        yield tuple(alpha)


def empirical_cs(net: ConcreteNetwork, radius: float, n: int, grid: int = 64, seed: int = 0,
                 step: float | None = None) -> dict:
    """Largest finite-difference derivative per type with ``|alpha| = n``.

    Points are sampled in the Euclidean ball of ``radius`` shrunk by the
    stencil reach, so every function evaluation stays inside the domain.
    """
    if not 1 <= n <= 3:
        raise ValueError("n must be in 1..3")
    h = default_step(n) if step is None else step
    reach = 2.0 * h * math.sqrt(n) if n == 3 else h * math.sqrt(n)
    inner = max(radius - reach, 0.0)
    xs = sample_ball(net.input_dim, inner, grid, seed)
    out: dict = {}
    for alpha in _all_indices(net.input_dim, n):
        val = float(np.max(np.abs(_batched_partial(net.evaluate, xs, alpha, h))))
        key = type_key(alpha)
        if key not in out or val > out[key].value:
            out[key] = EmpiricalEstimate(alpha, val, h, grid)
    return out


def analytic_bounds(spec: ArchSpec, component: str, alpha: tuple, mode="exact") -> tuple[float, float]:
    """(type bound, level bound) of a component as plain floats."""
    a = type_key(alpha)
    n = sum(a)
    mode = FactorMode.parse(mode)
    if component == "dotp":
        b = dotp_bound(spec, n)
        return b.value(), b.value()
    if component == "attention":
        return attention_bound_type(spec, a).value(), attention_bound_level(spec, n, mode).value()
    if component == "multihead":
        return multihead_bound_type(spec, a).value(), multihead_bound_level(spec, n, mode).value()
    if component == "layernorm":
        return (layernorm_bound_type(spec.radius, spec.i, spec.gamma, spec.w, a).value(),
                layernorm_bound_level(spec.radius, spec.i, spec.gamma, spec.w, n, mode).value())
    if component == "feedforward":
        return feedforward_bound_type(spec, a).value(), feedforward_bound_level(spec, n, mode).value()
    if component == "block":
        return tblock_bound_type(spec, a).value(), tblock_bound_level(spec, n, mode).value()
    raise ValueError(f"unknown component {component!r}")


def soundness_check(spec: ArchSpec, n_max: int, trials: int, seed: int = 0, component: str = "block",
                    grid: int = 64, step: float | None = None, mode="exact", atol: float = 1e-6) -> dict:
    """Compare empirical derivatives of sampled networks against the analytic bounds.

    Softplus bounds are evaluated with the genuine derivative indexing, since
    the table indexing is a reproduction convention rather than a bound.

    Returns a JSON-ready report; ``violations`` lists every entry where an
    empirical value exceeds either bound by more than ``atol`` (relative to
    the bound plus an absolute floor).
    """
    if not 1 <= n_max <= 3:
        raise ValueError("n_max must be in 1..3")
    bound_spec = spec.with_(sigma_convention="derivative")
    entries, violations = [], []
    for trial in range(trials):
        tseed = seed * 100_003 + trial
        net = ConcreteNetwork(spec, component, seed=tseed)
        for n in range(1, n_max + 1):
            est = empirical_cs(net, spec.radius, n, grid=grid, seed=tseed, step=step)
            for key, e in sorted(est.items()):
                tb, lb = analytic_bounds(bound_spec, component, key, mode)
                row = {
                    "trial": trial,
                    "seed": tseed,
                    "type": list(key),
                    "alpha": list(e.alpha),
                    "empirical": e.value,
                    "analytic_type": tb,
                    "analytic_level": lb,
                    "margin_type": tb - e.value,
                    "margin_level": lb - e.value,
                }
                tol = atol * (1.0 + max(tb, lb, 0.0))
                row["violation"] = bool(e.value > tb + tol or e.value > lb + tol)
                entries.append(row)
                if row["violation"]:
                    violations.append(row)
    return {
        "component": component,
        "n_max": n_max,
        "trials": trials,
        "seed": seed,
        "entries": entries,
        "violations": violations,
    }
