import math

import numpy as np
import pytest

from tcbsde.errors import PreconditionError, SchemeError, StructuralError
from tcbsde.timechange import IncreasingProcess, TimeChangeMap, TimeGrid, build_phi
from tcbsde.wiener import (
    check_uniform_lipschitz,
    probe_mode_conditions,
    probe_monotone_transform,
    simulate_brownian,
    transform_brownian,
    transform_driver,
)
from util import clock_on, coeffs_on, grid_uniform, linear_problem


# ---------------------------------------------------------------------------
# simulate_brownian
# ---------------------------------------------------------------------------


def test_brownian_step_variance():
    # chi-square oracle: sample variance of n=1e4 draws of N(0, 0.01) stays
    # within +-5% (about 3.5 sigma) for almost every seed
    g = grid_uniform(1.0, 101)
    W = simulate_brownian(g, paths=10_000, dim=1, seed=11)
    var = np.var(W.increments[:, :, 0], axis=0)
    assert np.all(var > 0.0095) and np.all(var < 0.0105)


def test_brownian_determinism():
    g = grid_uniform(1.0, 51)
    a = simulate_brownian(g, 100, 2, seed=5)
    b = simulate_brownian(g, 100, 2, seed=5)
    assert np.array_equal(a.increments, b.increments)


def test_brownian_cross_correlation():
    g = grid_uniform(1.0, 21)
    P = 10_000
    W = simulate_brownian(g, P, 2, seed=3)
    x = W.values[:, -1, 0]
    y = W.values[:, -1, 1]
    corr = float(np.mean(x * y) / (np.std(x) * np.std(y)))
    assert abs(corr) <= 3.0 / math.sqrt(P)


def test_brownian_rejects_bad_shape():
    with pytest.raises(PreconditionError):
        simulate_brownian(grid_uniform(1.0, 11), 0, 1, seed=0)


# ---------------------------------------------------------------------------
# transform_brownian
# ---------------------------------------------------------------------------


def test_transform_identity_clock():
    g = grid_uniform(1.0, 101)
    W = simulate_brownian(g, 50, 1, seed=1)
    out = transform_brownian(W, TimeChangeMap.identity(g))
    assert np.allclose(out.increments, W.increments)


def test_transform_constant_clock_rescales_exactly():
    # alpha^2 = 4: phi(t) = 4t, target step 0.04 pulls back to source step 0.01
    # and the increment doubles; Var(dW~) = 4 * 0.01 = 0.04
    src = grid_uniform(1.0, 401)  # step 0.0025 refines the pulled-back step 0.01
    W = simulate_brownian(src, 4000, 1, seed=7)
    clock = clock_on(src, 4.0, eps=1.0, target=TimeGrid.uniform(4.0, 101))
    out = transform_brownian(W, clock)
    assert out.grid.t_end == pytest.approx(4.0)
    # variance algebra oracle
    var = float(np.var(out.increments[:, :, 0]))
    assert var == pytest.approx(0.04, rel=0.05)
    # the first target increment spans source [0, 0.01]: exactly twice W(0.01)
    snapped = W.values[:, 4, 0]  # node 4 = t 0.01
    assert np.allclose(out.increments[:, 0, 0], 2.0 * snapped)


def test_transform_levy_variance_monte_carlo():
    # Monte Carlo CI oracle: Var(W~_1) = 1 under the clock alpha^2 = 1 + 2s
    src = grid_uniform(1.0, 1001)
    W = simulate_brownian(src, 10_000, 1, seed=2)
    clock = clock_on(src, 1.0 + 2.0 * src.nodes, eps=0.5, target=TimeGrid.uniform(1.0, 101))
    out = transform_brownian(W, clock)
    w1 = np.sum(out.increments[:, :, 0], axis=1)
    assert 0.95 <= float(np.var(w1)) <= 1.05
    # per-step variance invariant and step independence (numerical Levy face)
    var = np.var(out.increments[:, :, 0], axis=0)
    assert np.allclose(var, out.grid.steps, rtol=0.12)
    lag = np.mean(out.increments[:, :-1, 0] * out.increments[:, 1:, 0], axis=0)
    assert np.max(np.abs(lag)) <= 4.0 * np.max(out.grid.steps) / math.sqrt(out.paths)


def test_transform_requires_fine_source():
    src = grid_uniform(1.0, 11)
    W = simulate_brownian(src, 10, 1, seed=0)
    clock = clock_on(src, 1.0, eps=0.5, target=TimeGrid.uniform(1.0, 401))
    with pytest.raises(StructuralError):
        transform_brownian(W, clock)  # target finer than source: snapping collides


# ---------------------------------------------------------------------------
# transform_driver / check_uniform_lipschitz
# ---------------------------------------------------------------------------


def test_transform_zero_driver():
    from dataclasses import replace

    g = grid_uniform(1.0, 101)

    def zero(t, w, y, z):
        return np.zeros(y.shape)

    prob = replace(linear_problem(g, 0.0, 0.0, (0.0,), eps=0.5), driver=zero)
    clock = build_phi(prob.coeffs, IncreasingProcess.identity(g))
    tp = transform_driver(prob, clock)
    out = tp.problem.driver(0.3, np.zeros((4, 1)), np.ones(4), np.ones((4, 1)))
    assert np.allclose(out, 0.0)


def test_transform_linear_y_driver():
    # f = 2y with alpha^2 = 2 transforms to exactly y
    g = grid_uniform(1.0, 101)
    prob = linear_problem(g, 2.0, 0.0, (1.0,), eps=1.0)
    clock = build_phi(prob.coeffs, IncreasingProcess.identity(g))
    tp = transform_driver(prob, clock)
    y = np.array([0.3, -1.2, 2.0])
    out = tp.problem.driver(0.5, np.zeros((3, 1)), y, np.zeros((3, 1)))
    assert np.allclose(out, y)


def test_transform_linear_z_driver():
    # f = 3z with alpha^2 = 9: z rescaled by alpha then scaled by 1/9 -> z
    g = grid_uniform(1.0, 101)
    prob = linear_problem(g, 0.0, 3.0, (1.0,), eps=1.0)
    clock = build_phi(prob.coeffs, IncreasingProcess.identity(g))
    tp = transform_driver(prob, clock)
    z = np.array([[0.4], [-2.0], [1.0]])
    out = tp.problem.driver(1.5, np.zeros((3, 1)), np.zeros(3), z)
    assert np.allclose(out, z[:, 0])


def test_lipschitz_ratio_zero_driver():
    assert check_uniform_lipschitz(lambda t, w, y, z: np.zeros(y.shape), 1000, 2.0) == 0.0


def test_lipschitz_ratio_transformed_vs_raw():
    g = grid_uniform(1.0, 201)
    prob = linear_problem(g, 2.0, 0.0, (1.0,), eps=1.0)
    clock = build_phi(prob.coeffs, IncreasingProcess.identity(g))
    tp = transform_driver(prob, clock)
    ratio_t = check_uniform_lipschitz(tp.problem.driver, 2000, 2.0, t_range=(0.0, 2.0), seed=4)
    assert ratio_t == pytest.approx(1.0, abs=1e-12)
    ratio_raw = check_uniform_lipschitz(prob.driver, 2000, 2.0, seed=4)
    assert ratio_raw == pytest.approx(2.0, abs=1e-12)


def test_lipschitz_ratio_time_varying_never_exceeds_one():
    g = grid_uniform(1.0, 301)
    prob = linear_problem(g, 1.0 + 20.0 * g.nodes**2, 2.0 + 3.0 * g.nodes, (1.0,), eps=0.5)
    clock = build_phi(prob.coeffs, IncreasingProcess.identity(g))
    tp = transform_driver(prob, clock)
    horizon = clock.forward.values[-1]
    ratio = check_uniform_lipschitz(
        tp.problem.driver, 4000, 3.0, t_range=(0.0, float(horizon)), seed=9
    )
    assert ratio <= 1.0 + 1e-9


def test_probe_mode_conditions_linear():
    g = grid_uniform(1.0, 101)
    prob = linear_problem(g, 1.5, 0.5, (1.0,), eps=0.5)
    worst = probe_mode_conditions(prob, n_probes=300, seed=1)
    assert worst["y_lipschitz"] >= -1e-9
    assert worst["z_lipschitz"] >= -1e-9


def test_monotone_transform_constants():
    # monotone mode: f = -3 y^3 / (1 + y^2) + l(t) with growth l; transformed
    # monotonicity and growth probe at or below 1
    g = grid_uniform(1.0, 201)
    c = coeffs_on(g, 0.0, 1.0, eps=0.5, mode="monotone", l=2.0 + g.nodes)

    def driver(t, w, y, z):
        lt = 2.0 + t
        return -lt * y + float(c.u.at(t)) * z[:, 0]

    from tcbsde.wiener import TerminalRule, WienerBSDEProblem, PolynomialPayoff

    prob = WienerBSDEProblem(
        k=1, d=1, driver=driver, coeffs=c,
        terminal=TerminalRule(kind="fixed"), payoff=PolynomialPayoff((1.0,)),
        mode="monotone",
    )
    clock = build_phi(c, IncreasingProcess.identity(g))
    tp = transform_driver(prob, clock)
    mono, growth = probe_monotone_transform(tp, n_probes=300, seed=2)
    assert mono <= 1.0 + 1e-9
    assert growth <= 1.0 + 1e-9
