"""Closed-form activation derivatives and their sup-norm bounds.

Supported activations are softplus (whose derivatives are sigmoid
derivatives), GeLU, tanh and SWISH.  Bounds come from a dense grid search
refined by a bounded scalar maximizer.
"""
from __future__ import annotations

import enum
import math
from functools import lru_cache

import numpy as np
from numpy.polynomial import hermite_e
from scipy.optimize import minimize_scalar
from scipy.special import expit, log_expit, ndtr

from .combinatorics import stirling2

__all__ = [
    "ActivationKind",
    "GRID_POINTS",
    "SEARCH_RADIUS",
    "activation",
    "sigmoid_deriv",
    "gaussian_density_deriv",
    "gelu_deriv",
    "gelu_corollary_bound",
    "tanh_bound_poly",
    "swish_deriv",
    "activation_deriv",
    "activation_bound",
    "activation_bound_upto",
    "activation_sup",
]

GRID_POINTS = 100_001
SEARCH_RADIUS = 30.0
_SQRT_2PI = math.sqrt(2.0 * math.pi)


class ActivationKind(str, enum.Enum):
    SOFTPLUS = "softplus"
    GELU = "gelu"
    TANH = "tanh"
    SWISH = "swish"

    @classmethod
    def parse(cls, value) -> "ActivationKind":
        if isinstance(value, cls):
            return value
        key = str(value).lower()
        if key == "softmax":
            # the perceptron table's label for its base activation
            key = "softplus"
        return cls(key)


def activation(kind, x):
    """Evaluate the activation itself."""
    kind = ActivationKind.parse(kind)
    x = np.asarray(x, dtype=float)
    if kind is ActivationKind.SOFTPLUS:
        return np.logaddexp(0.0, x)
    if kind is ActivationKind.GELU:
        return x * ndtr(x)
    if kind is ActivationKind.TANH:
        return np.tanh(x)
    return x * expit(x)


def sigmoid_deriv(n: int, x):
    """n-th derivative of the logistic sigmoid via Stirling numbers.

    ``sum_k (-1)^(n+k) k! S(n,k) s (1-s)^k`` with ``s = sigmoid(x)``.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    x = np.asarray(x, dtype=float)
    s = expit(x)
    if n == 0:
        return s
    # 1 - sigmoid(x) = sigmoid(-x), accurate in both tails
    q = expit(-x)
    out = np.zeros_like(s)
    for k in range(1, n + 1):
        coef = (-1) ** (n + k) * math.factorial(k) * stirling2(n, k)
        out = out + coef * s * q**k
    return out


def gaussian_density_deriv(n: int, x, signed: bool = True):
    """n-th derivative of the standard normal density.

    With ``signed=True`` this is ``(-1)^n He_n(x) phi(x)``.  ``signed=False``
    evaluates the same coefficients with all signs positive, which is not a
    derivative but is kept for comparison with that published form.
    """
    if n < 0:
        raise ValueError("n must be >= 0")
    x = np.asarray(x, dtype=float)
    phi = np.exp(-0.5 * x * x) / _SQRT_2PI
    if not signed:
        poly = sum(math.comb(n, 2 * k) * _odd_double_factorial(2 * k - 1) * x ** (n - 2 * k)
                   for k in range(n // 2 + 1))
        return phi * poly
    coeffs = np.zeros(n + 1)
    coeffs[n] = 1.0
    return (-1) ** n * hermite_e.hermeval(x, coeffs) * phi


def _odd_double_factorial(n: int) -> int:
    return 1 if n <= 0 else math.prod(range(n, 0, -2))


def gelu_deriv(n: int, x):
    """n-th derivative of ``x * Phi(x)``: ``n phi^(n-2) + x phi^(n-1)`` for n >= 2."""
    if n < 1:
        raise ValueError("n must be >= 1")
    x = np.asarray(x, dtype=float)
    if n == 1:
        return ndtr(x) + x * gaussian_density_deriv(0, x)
    return n * gaussian_density_deriv(n - 2, x) + x * gaussian_density_deriv(n - 1, x)


def gelu_corollary_bound(n: int) -> float:
    """Closed-form product bound ``(n a_{n-2} b_{n-2} + a_{n-1} c_{n-1}) / (sqrt(2 pi) Gamma(1/2))``.

    Much looser than direct maximization; provided for comparison only.
    """
    if n < 2:
        raise ValueError("the product bound is stated for n >= 2")
    xs = np.linspace(-SEARCH_RADIUS, SEARCH_RADIUS, GRID_POINTS)
    g = np.exp(-0.5 * xs * xs)

    def a(j):
        return sum(math.comb(j, 2 * k) * 2**k * math.gamma(k + 0.5) for k in range(j // 2 + 1))

    def poly(j):
        return sum(xs ** (j - k) for k in range(j // 2 + 1))

    b = float(np.max(g * poly(n - 2)))
    c = float(np.max(g * xs * poly(n - 1)))
    return (n * a(n - 2) * b + a(n - 1) * c) / (_SQRT_2PI * math.gamma(0.5))


def tanh_bound_poly(n: int, z):
    """Polynomial ``C_n(z) = (-2)^n (z+1) sum_k k!/2^k binom(n,k) (z-1)^k``.

    Its maximum modulus on ``[-1, 1]`` bounds the n-th derivative of tanh.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    z = np.asarray(z, dtype=float)
    inner = sum(math.factorial(k) / 2**k * math.comb(n, k) * (z - 1.0) ** k for k in range(n + 1))
    return (-2.0) ** n * (z + 1.0) * inner


def swish_deriv(n: int, x):
    """n-th derivative of ``x * sigmoid(x)``: ``n s^(n-1) + x s^(n)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    x = np.asarray(x, dtype=float)
    return n * sigmoid_deriv(n - 1, x) + x * sigmoid_deriv(n, x)


def _tanh_true_deriv(n: int, x):
    # derivative polynomial in t = tanh(x): p_{n+1}(t) = (1 - t^2) p_n'(t)
    p = np.polynomial.Polynomial([0.0, 1.0])
    one_minus = np.polynomial.Polynomial([1.0, 0.0, -1.0])
    for _ in range(n):
        p = one_minus * p.deriv()
    return p(np.tanh(np.asarray(x, dtype=float)))


def activation_deriv(kind, n: int, x):
    """True n-th derivative of the activation (n >= 1)."""
    kind = ActivationKind.parse(kind)
    if kind is ActivationKind.SOFTPLUS:
        return sigmoid_deriv(n - 1, x)
    if kind is ActivationKind.GELU:
        return gelu_deriv(n, x)
    if kind is ActivationKind.TANH:
        return _tanh_true_deriv(n, x)
    return swish_deriv(n, x)


def _maximize_abs(f, lo: float, hi: float, points: int = GRID_POINTS) -> float:
    """sup |f| on [lo, hi] via a grid plus bounded refinement near the grid argmax."""
    if lo > hi:
        raise ValueError("empty interval")
    if lo == hi:
        return float(abs(f(np.array([lo]))[0]))
    # beyond SEARCH_RADIUS every supported derivative is monotone toward its limit,
    # so the grid covers the clipped window and the true endpoints are added
    glo, ghi = max(lo, -SEARCH_RADIUS), min(hi, SEARCH_RADIUS)
    extra = np.array([lo, hi, glo, ghi])
    if glo < ghi:
        xs = np.linspace(glo, ghi, points)
    else:
        xs = np.array([glo])
    vals = np.abs(f(xs))
    best = float(max(vals.max(), np.abs(f(extra)).max()))
    if len(xs) > 2:
        i = int(np.argmax(vals))
        a, b = xs[max(i - 1, 0)], xs[min(i + 1, len(xs) - 1)]
        res = minimize_scalar(lambda t: -abs(float(f(np.array([t]))[0])), bounds=(a, b),
                              method="bounded", options={"xatol": 1e-10})
        best = max(best, -float(res.fun))
    return best


@lru_cache(maxsize=None)
def _bound_cached(kind: ActivationKind, n: int, lo: float, hi: float, convention: str) -> float:
    if kind is ActivationKind.TANH:
        return _maximize_abs(lambda z: tanh_bound_poly(n, z), -1.0, 1.0)
    if kind is ActivationKind.SOFTPLUS:
        # "table": order s holds sup|sigmoid^(s)|; "derivative": the true softplus^(s)
        shift = 0 if convention == "table" else 1
        return _maximize_abs(lambda x: sigmoid_deriv(n - shift, x), lo, hi)
    if kind is ActivationKind.GELU:
        return _maximize_abs(lambda x: gelu_deriv(n, x), lo, hi)
    return _maximize_abs(lambda x: swish_deriv(n, x), lo, hi)


def activation_bound(kind, n: int, domain=(-SEARCH_RADIUS, SEARCH_RADIUS),
                     convention: str = "table") -> float:
    """Sup over ``domain`` of the order-``n`` derivative bound of an activation.

    Parameters
    ----------
    kind : ActivationKind or str
    n : int
        Derivative order, ``n >= 1``.
    domain : (float, float)
        Interval of pre-activation values.  Ignored for tanh, whose bound
        polynomial is maximized over ``z = tanh(x)`` in ``[-1, 1]``.
    convention : {"table", "derivative"}
        Softplus only.  ``"table"`` stores ``sup|sigmoid^(n)|`` at order n,
        reproducing the published activation table; ``"derivative"`` stores
        the genuine ``sup|softplus^(n)| = sup|sigmoid^(n-1)|``.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if convention not in ("table", "derivative"):
        raise ValueError(f"unknown convention {convention!r}")
    lo, hi = float(domain[0]), float(domain[1])
    return _bound_cached(ActivationKind.parse(kind), int(n), lo, hi, convention)


def activation_bound_upto(kind, n: int, domain=(-SEARCH_RADIUS, SEARCH_RADIUS),
                          convention: str = "table") -> float:
    """Cumulative bound ``max_{1 <= j <= n}`` of :func:`activation_bound`."""
    return max(activation_bound(kind, j, domain, convention) for j in range(1, n + 1))


def activation_sup(kind, radius: float) -> float:
    """Upper bound on ``|activation(x)|`` for ``|x| <= radius``."""
    kind = ActivationKind.parse(kind)
    if kind is ActivationKind.TANH:
        return math.tanh(radius)
    if kind is ActivationKind.SOFTPLUS:
        return float(-log_expit(-radius))
    # |x Phi(x)| and |x sigmoid(x)| are at most |x|
    return float(radius)
