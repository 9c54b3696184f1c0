import math

import numpy as np
import pytest

from sospin.asymptotics import (G, GParams, KinkSequence, bernoulli_free_energy,
                                fractional_upper_bound, kink_sequence, n_G, n_argmax,
                                p_h_maximizer, rho_functions, rho_inequality_constant,
                                solve_kink, taylor_gap, upper_bound_max_p)
from sospin.disorder import DisorderSpec
from sospin.errors import InputError

RAD = DisorderSpec.rademacher()
GAUSS = DisorderSpec.gaussian()


def gparams(beta=3.5, theta1=1.0037, spec=RAD, alpha=1.0):
    return GParams.from_spec(beta, alpha, spec, theta1)


def test_G_at_zero_and_large_h():
    gp = gparams()
    assert G(gp, 0.0) == 0.0
    # h beyond theta1 v / 2: the n = 0 branch wins
    h = gp.theta1 * gp.var_xi
    assert G(gp, h) == pytest.approx(gp.theta1 * h - 0.5 * gp.theta1 ** 2 * gp.var_xi, rel=1e-14)
    assert n_G(gp, h) == 0 and n_argmax(gp, h) == 0


def test_kinks_form_geometric_sequence():
    gp = gparams()
    ks = kink_sequence(gp, 8)
    r = math.exp(-4 * gp.beta)
    for a, b in zip(ks.kinks, ks.kinks[1:]):
        assert b / a == pytest.approx(r, rel=1e-12)
    for n in range(8):
        assert solve_kink(gp, n) == pytest.approx(ks.kinks[n], rel=1e-12)
    # slopes are the densities p_n; intercept magnitudes shrink by e^{-8 beta}
    for n, s in enumerate(ks.slopes):
        assert s == pytest.approx(gp.p(n), rel=1e-14)
    intercepts = [0.5 * gp.p(n) ** 2 * gp.var_xi for n in range(4)]
    for a, b in zip(intercepts, intercepts[1:]):
        assert b / a == pytest.approx(math.exp(-8 * gp.beta), rel=1e-12)


def test_G_continuous_at_kinks():
    gp = gparams()
    for n in range(4):
        h = solve_kink(gp, n)
        left = gp.p(n) * h - 0.5 * gp.p(n) ** 2 * gp.var_xi
        right = gp.p(n + 1) * h - 0.5 * gp.p(n + 1) ** 2 * gp.var_xi
        assert left == pytest.approx(right, rel=1e-12)
        assert G(gp, h) == pytest.approx(left, rel=1e-12)


def test_closed_form_argmax_within_one_of_true_argmax():
    gp = gparams()
    for h in np.exp(np.linspace(math.log(1e-12), math.log(1.0), 1000)):
        assert abs(n_G(gp, float(h)) - n_argmax(gp, float(h))) <= 1
    gp5 = gparams(beta=5.0)
    for h in np.exp(np.linspace(math.log(1e-14), math.log(1.0), 200)):
        assert abs(n_G(gp5, float(h)) - n_argmax(gp5, float(h))) <= 1


def test_argmax_asymptotically_logarithmic():
    gp = gparams()
    errs = [abs(n_argmax(gp, float(h)) - abs(math.log(h)) / (4 * gp.beta))
            for h in np.exp(np.linspace(math.log(1e-12), math.log(1e-2), 300))]
    assert max(errs) < 2.0


def test_argmax_invariant_under_common_scaling():
    gp = gparams()
    for h in (1e-3, 2.3e-5, 1e-7):
        n0 = n_argmax(gp, h)
        for c in (0.1, 3.0, 17.0):
            scaled = GParams(beta=gp.beta, alpha=gp.alpha, theta1=gp.theta1,
                             var_xi=gp.var_xi * c)
            assert n_argmax(scaled, h * c) == n0


def test_bernoulli_free_energy_basics():
    assert bernoulli_free_energy(0.0, RAD, 1.0, 0.123) == 0.0
    # h = 0: nonpositive by Jensen since E[xi] = 1
    for p in (0.05, 0.2, 0.6):
        assert bernoulli_free_energy(p, RAD, 1.0, 0.0) <= 0.0
        assert bernoulli_free_energy(p, GAUSS, 0.7, 0.0) <= 1e-14


def test_bernoulli_closed_form_vs_monte_carlo():
    p, h, alpha = 0.1, 0.05, 1.0
    lam = math.log(math.cosh(alpha))
    exact = bernoulli_free_energy(p, RAD, alpha, h)
    two_point = 0.5 * (math.log1p(p * (math.exp(h + alpha - lam) - 1.0))
                       + math.log1p(p * (math.exp(h - alpha - lam) - 1.0)))
    assert exact == pytest.approx(two_point, rel=1e-13)
    rng = np.random.default_rng(8)
    omega = rng.choice([1.0, -1.0], size=2_000_000)
    mc = np.log1p(p * (np.exp(h + alpha * omega - lam) - 1.0)).mean()
    sigma = np.log1p(p * (np.exp(h + alpha * omega - lam) - 1.0)).std() / math.sqrt(len(omega))
    assert abs(exact - mc) <= 3 * sigma


def test_taylor_gap_cubic_control():
    assert taylor_gap(0.0, RAD, 1.0, 0.1) == 0.0
    worst = 0.0
    for p in np.linspace(0.02, 0.5, 12):
        for h in np.linspace(0.0, 0.5, 11):
            gap = taylor_gap(float(p), RAD, 1.0, float(h))
            worst = max(worst, gap / (h * h * p + h * p * p + p ** 3))
    assert worst < 2.0


def test_upper_bound_dominates_G_and_has_gff_limit():
    theta1 = 1.0037
    gp = gparams(theta1=theta1)
    for h in [10.0 ** (-k) for k in range(3, 9)]:
        val, p_star = upper_bound_max_p(RAD, 1.0, h)
        assert val >= G(gp, h)
        assert 0.0 <= p_star <= 1.0
    assert upper_bound_max_p(RAD, 1.0, 0.0) == (0.0, 0.0)
    v = GAUSS.xi_variance(1.0)
    for h, tol in [(1e-2, 0.03), (1e-4, 3e-4), (1e-6, 3e-6)]:
        val, _ = upper_bound_max_p(GAUSS, 1.0, h)
        assert val / (h * h / (2 * v)) == pytest.approx(1.0, abs=tol)


def test_fractional_bound_limits_and_jensen():
    h, alpha = 1e-3, 1.0
    full, _ = upper_bound_max_p(RAD, alpha, h)
    # theta -> 0+ recovers the full quenched bound (Lyapunov monotonicity in
    # theta; at theta -> 1- the bound relaxes to the annealed value instead)
    assert fractional_upper_bound(RAD, alpha, h, 0.01) == pytest.approx(full, rel=0.1)
    assert fractional_upper_bound(RAD, alpha, h, 0.5) >= full
    annealed = math.log1p(1.0 * (math.exp(h) - 1.0))  # p = 1 maximizes log E
    assert fractional_upper_bound(RAD, alpha, h, 0.5) <= annealed + 1e-12
    # determinism at the spec's operating point
    a = fractional_upper_bound(RAD, 1.0, 1e-4, 1e-4 ** 0.05)
    b = fractional_upper_bound(RAD, 1.0, 1e-4, 1e-4 ** 0.05)
    assert a == b and math.isfinite(a)


def test_rho_functions_vanish_at_small_p():
    for spec in (RAD, GAUSS):
        r1, r2, r3 = rho_functions(1e-8, 0.2, spec, 1.0)
        assert abs(r1) < 1e-12 and abs(r2) < 1e-12 and abs(r3) < 1e-6
    # rho2 >= 0: Jensen for 1/x
    for p in (0.05, 0.2, 0.4):
        assert rho_functions(p, 0.2, RAD, 1.0)[1] >= 0.0


def test_rho_inequalities_single_constant():
    grid = np.linspace(0.45 / 50, 0.45, 50)
    for spec in (RAD, GAUSS):
        c = rho_inequality_constant(spec, 1.0, grid, grid)
        assert c <= 50.0


def test_p_h_maximizer_asymptotics():
    v = RAD.xi_variance(1.0)
    assert p_h_maximizer(RAD, 1.0, 0.0) == (0.0, 0.0)
    for h in (1e-3, 1e-4, 1e-5):
        ph, excess = p_h_maximizer(RAD, 1.0, h)
        assert 0.9 <= ph * v / (2 * h) <= 1.1
        assert excess / h ** 2 <= 1.0 / (2 * v) + 0.1


def test_G_shape_properties():
    gp = gparams()
    ks = kink_sequence(gp, 6)
    hs = np.exp(np.linspace(math.log(ks.kinks[4]), math.log(ks.kinks[0] * 2), 3000))
    vals = np.array([G(gp, float(h)) for h in hs])
    assert (vals >= 0).all()
    assert (np.diff(vals) >= -1e-18).all()          # non-decreasing
    # convex: secant slopes non-decreasing in h
    slopes = np.diff(vals) / np.diff(hs)
    assert (np.diff(slopes) >= -1e-10).all()
    ratio = vals / hs ** 2
    assert ratio.max() / ratio.min() >= 1.01        # no h^2 limit
    assert ratio.max() <= gp.theta1 ** 2 / (2 * gp.var_xi) / min(1.0, gp.var_xi) * 10
    # right derivative at 0 vanishes: G(h)/h -> 0
    small = np.array([G(gp, 10.0 ** (-k)) / 10.0 ** (-k) for k in range(4, 10)])
    assert (np.diff(small) < 0).all() and small[-1] < 1e-12


def test_domain_errors():
    gp = gparams()
    with pytest.raises(InputError):
        G(gp, -0.1)
    with pytest.raises(InputError):
        bernoulli_free_energy(1.5, RAD, 1.0, 0.1)
    with pytest.raises(InputError):
        rho_functions(0.6, 0.2, RAD, 1.0)
    with pytest.raises(InputError):
        fractional_upper_bound(RAD, 1.0, 0.1, 1.0)
