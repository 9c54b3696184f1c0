"""Scalar analysis layer: the piecewise-affine variational free-energy
asymptotic, its kink structure, the Bernoulli-field heuristic, rigorous upper
bounds (full and fractional moments), and the rho-function calculus.

The variational curve is

    G(h) = max over integer n >= 0 of  [ p_n h - p_n^2 v / 2 ],
    p_n = theta1 * exp(-4 beta n),   v = Var(xi),

with G(0) = 0 by the supremum convention.  Its kinks sit at
h_n = theta1 * v * exp(-4 beta n) (1 + exp(-4 beta)) / 2 and form a geometric
sequence with ratio exp(-4 beta); slopes are the p_n, intercepts shrink by
exp(-8 beta) per piece.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .disorder import DisorderSpec
from .errors import InputError

_GOLD = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True)
class GParams:
    """Inputs of the variational curve."""

    beta: float
    alpha: float
    theta1: float
    var_xi: float

    def __post_init__(self):
        if self.theta1 <= 0:
            raise InputError("theta1 must be positive")
        if self.var_xi < 0:
            raise InputError("var_xi must be nonnegative")

    @classmethod
    def from_spec(cls, beta: float, alpha: float, spec: DisorderSpec, theta1: float) -> "GParams":
        return cls(beta=beta, alpha=alpha, theta1=theta1, var_xi=spec.xi_variance(alpha))

    def p(self, n: int) -> float:
        return self.theta1 * math.exp(-4.0 * self.beta * n)


def _inner(params: GParams, n: int, h: float) -> float:
    p = params.p(n)
    return p * h - 0.5 * p * p * params.var_xi


def _n_cap(params: GParams, h: float) -> int:
    # include every n whose density is not hopelessly dominated
    if h <= 0:
        return 0
    n = 0
    while params.p(n) >= h * 1e-6 and n < 10_000:
        n += 1
    return n + 1


def G(params: GParams, h: float) -> float:
    """The variational asymptotic; 0 at h = 0 by the supremum convention."""
    if h < 0:
        raise InputError("G is defined for h >= 0")
    if h == 0.0:
        return 0.0
    return max(_inner(params, n, h) for n in range(_n_cap(params, h) + 1))


def n_argmax(params: GParams, h: float) -> int:
    """True maximizer of the inner expression, smallest index on ties."""
    if h <= 0:
        raise InputError("n_argmax needs h > 0")
    best_n, best = 0, _inner(params, 0, h)
    for n in range(1, _n_cap(params, h) + 1):
        val = _inner(params, n, h)
        if val > best:
            best_n, best = n, val
    return best_n

def n_G(params: GParams, h: float) -> int:
    """Closed-form approximate maximizer: max(0, ceil(log(theta1 v / 2h) / 4 beta)).
    Within one unit of the true argmax (they differ because the exact piece
    boundary carries an extra factor (1 + e^{-4 beta}))."""
    if h <= 0:
        raise InputError("n_G needs h > 0")
    arg = params.theta1 * params.var_xi / (2.0 * h)
    if arg <= 1.0:
        return 0
    return max(0, math.ceil(math.log(arg) / (4.0 * params.beta)))


@dataclass(frozen=True)
class KinkSequence:
    """Kink locations (descending) and the slopes of the affine pieces."""

    kinks: tuple[float, ...]
    slopes: tuple[float, ...]


def kink_sequence(params: GParams, count: int) -> KinkSequence:
    """First `count` kinks of the curve: h_n solves equality of pieces n and
    n+1, giving theta1 v e^{-4 beta n} (1 + e^{-4 beta}) / 2."""
    r = math.exp(-4.0 * params.beta)
    kinks = tuple(0.5 * params.theta1 * params.var_xi * r ** n * (1.0 + r) for n in range(count))
    slopes = tuple(params.p(n) for n in range(count + 1))
    return KinkSequence(kinks=kinks, slopes=slopes)


def solve_kink(params: GParams, n: int) -> float:
    """Kink between pieces n and n+1 found numerically from the affine
    intersection (cross-check for the closed form)."""
    pn, pn1 = params.p(n), params.p(n + 1)
    return 0.5 * params.var_xi * (pn + pn1)


# ---------------------------------------------------------------------------
# Bernoulli-field heuristic and bounds


def bernoulli_free_energy(p: float, spec: DisorderSpec, alpha: float, h: float) -> float:
    """E[log(1 + p (e^h xi - 1))]: the free energy of an IID contact field of
    density p against the same disorder."""
    if not 0.0 <= p <= 1.0:
        raise InputError("p must lie in [0, 1]")
    eh = math.exp(h)
    return spec.expect_xi(alpha, lambda xi: np.log1p(p * (eh * xi - 1.0)))


def taylor_gap(p: float, spec: DisorderSpec, alpha: float, h: float) -> float:
    """|bernoulli_free_energy - (p h - p^2 v / 2)|; the quadratic model error."""
    v = spec.xi_variance(alpha)
    return abs(bernoulli_free_energy(p, spec, alpha, h) - (p * h - 0.5 * p * p * v))


def _golden_max(f, lo: float, hi: float, tol: float = 1e-12) -> tuple[float, float]:
    a, b = lo, hi
    c1, c2 = b - _GOLD * (b - a), a + _GOLD * (b - a)
    f1, f2 = f(c1), f(c2)
    while b - a > tol:
        if f1 < f2:
            a, c1, f1 = c1, c2, f2
            c2 = a + _GOLD * (b - a)
            f2 = f(c2)
        else:
            b, c2, f2 = c2, c1, f1
            c1 = b - _GOLD * (b - a)
            f1 = f(c1)
    x = c1 if f1 >= f2 else c2
    return x, max(f1, f2)


def upper_bound_max_p(spec: DisorderSpec, alpha: float, h: float) -> tuple[float, float]:
    """(value, p*) of max over p in [0,1] of E[log(1 + p(e^h xi - 1))].
    Bounds the excess free energy of any contact process against this
    disorder, whatever the law of the contact set."""
    if h < 0:
        raise InputError("h must be nonnegative")
    if h == 0.0:
        return 0.0, 0.0
    eh = math.exp(h)

    def f(p):
        return spec.expect_xi(alpha, lambda xi: np.log1p(p * (eh * xi - 1.0)))

    p_star, val = _golden_max(f, 0.0, 1.0)
    return val, p_star


def fractional_upper_bound(spec: DisorderSpec, alpha: float, h: float, theta: float) -> float:
    """max over p of theta^{-1} log E[(1 + p(e^h xi - 1))^theta]."""
    if not 0.0 < theta < 1.0:
        raise InputError("theta must lie in (0, 1)")
    eh = math.exp(h)

    def f(p):
        return math.log(spec.expect_xi(
            alpha, lambda xi: np.power(1.0 + p * (eh * xi - 1.0), theta))) / theta

    _, val = _golden_max(f, 0.0, 1.0)
    return val


def rho_functions(p: float, theta: float, spec: DisorderSpec, alpha: float) -> tuple[float, float, float]:
    """The three auxiliary exponents of the fractional-moment cell estimate:

        rho1 = (1-theta)/theta * log E[(1 + p(xi-1))^{theta/(1-theta)}]
        rho2 = log E[(1 + p(xi-1))^{-1}]
        rho3 = log E[(1 + p(xi-1))^{-1} xi] - rho2
    """
    if not 0.0 < p < 0.5 or not 0.0 < theta < 0.5:
        raise InputError("rho functions need p, theta in (0, 1/2)")
    # 1 + p(xi - 1) >= 1 - p > 1/2 since xi > 0; guard discrete support anyway
    sup = spec.support()
    if sup is not None:
        lam = spec.log_mgf(alpha)
        xi_min = float(np.exp(alpha * sup[0] - lam).min())
        if 1.0 + p * (xi_min - 1.0) <= 0.0:
            raise InputError("p(xi - 1) reaches -1 on the support")
    s = theta / (1.0 - theta)
    e1 = spec.expect_xi(alpha, lambda xi: np.power(1.0 + p * (xi - 1.0), s))
    e2 = spec.expect_xi(alpha, lambda xi: 1.0 / (1.0 + p * (xi - 1.0)))
    e3 = spec.expect_xi(alpha, lambda xi: xi / (1.0 + p * (xi - 1.0)))
    rho1 = (1.0 - theta) / theta * math.log(e1)
    rho2 = math.log(e2)
    rho3 = math.log(e3) - rho2
    return rho1, rho2, rho3


def rho_inequality_constant(spec: DisorderSpec, alpha: float,
                            p_grid: np.ndarray, theta_grid: np.ndarray) -> float:
    """Smallest single constant C making the three bounds hold on the grid:

        rho1 <= -p^2 v/2 + C (p^3 + theta p^2)
        rho2 <=  p^2 v   + C p^3
        rho3 <= -p  v    + C p^2
    """
    v = spec.xi_variance(alpha)
    need = 0.0
    for p in p_grid:
        r2_seen = r3_seen = None
        for theta in theta_grid:
            r1, r2, r3 = rho_functions(float(p), float(theta), spec, alpha)
            need = max(need, (r1 + 0.5 * p * p * v) / (p ** 3 + theta * p * p))
            r2_seen, r3_seen = r2, r3
        need = max(need, (r2_seen - p * p * v) / p ** 3)
        need = max(need, (r3_seen + p * v) / (p * p))
    return float(need)


def p_h_maximizer(spec: DisorderSpec, alpha: float, h: float) -> tuple[float, float]:
    """(p_h, max value - 1) for the square-root moment functional
    E[sqrt(1 + p(e^h xi - 1))]; p_h ~ 2h / Var(xi) as h -> 0."""
    if h < 0:
        raise InputError("h must be nonnegative")
    if h == 0.0:
        return 0.0, 0.0
    eh = math.exp(h)

    def f(p):
        return spec.expect_xi(alpha, lambda xi: np.sqrt(1.0 + p * (eh * xi - 1.0)))

    p_star, val = _golden_max(f, 0.0, 1.0)
    return p_star, val - 1.0
