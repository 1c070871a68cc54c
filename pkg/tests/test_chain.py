import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tcbsde.errors import InvariantError, PreconditionError
from tcbsde.timechange import LINEAR, SampledPath, TimeChangeMap, TimeGrid
from tcbsde.chain import (
    BalanceReport,
    ChainPath,
    GammaBalancedDriver,
    MarkovChainModel,
    chain_clock,
    check_gamma_balanced,
    doob_meyer_martingale,
    occupancy,
    psi_matrix,
    semi_norm,
    simulate_chain,
    transform_chain,
    transform_chain_driver,
)


def two_state_model(lam=1.0, mu=1.0, initial=0):
    A = np.array([[-lam, mu], [lam, -mu]])
    return MarkovChainModel(2, lambda t: A, initial, rate_bound=max(lam, mu))


def flat_driver(grid, model, c=0.0, gamma=1.0):
    return GammaBalancedDriver(
        f=lambda t, i, y, z: -c * y,
        eta=lambda t, i, z, zp: model.rates(t)[:, i],
        gamma=gamma,
        c_path=SampledPath(grid, np.full(grid.n_nodes, c), LINEAR),
        c1=0.0,
        c2=0.0,
        beta_hat=0.0,
        beta=1.0,
        beta_tilde=1.0,
        k1=lambda t: 1.0,
        k2=lambda t: 1.0,
    )


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------


def test_holding_time_mean():
    # exponential-mean oracle: unit rates give unit mean holding times; only
    # the first hold per path is used so horizon censoring cannot bias it
    model = two_state_model(1.0, 1.0)
    paths = simulate_chain(model, horizon=10.0, paths=10_000, seed=42)
    holds = [p.jump_times[0] for p in paths if p.jump_times.size]
    mean = float(np.mean(holds))
    assert 0.97 <= mean <= 1.03


def test_absorbing_state_never_exits():
    A = np.array([[-1.0, 0.0], [1.0, 0.0]])  # state 1 absorbing
    model = MarkovChainModel(2, lambda t: A, 0, rate_bound=1.0)
    for p in simulate_chain(model, 20.0, 200, seed=1):
        states = p.states
        if 1 in states:
            assert states[-1] == 1
            assert np.all(states[np.argmax(states == 1) :] == 1)


def test_symmetric_occupancy():
    # stationary distribution oracle for the symmetric 2-state chain
    model = two_state_model(1.0, 1.0)
    P = 10_000
    paths = simulate_chain(model, 10.0, P, seed=7)
    occ = occupancy(paths, 10.0, 2)
    assert abs(occ[0] - 0.5) <= 3.0 / math.sqrt(P)


def test_simulation_deterministic_per_seed():
    model = two_state_model(2.0, 0.5)
    a = simulate_chain(model, 5.0, 50, seed=9)
    b = simulate_chain(model, 5.0, 50, seed=9)
    for pa, pb in zip(a, b):
        assert np.array_equal(pa.jump_times, pb.jump_times)
        assert np.array_equal(pa.states, pb.states)


def test_rate_above_bound_rejected():
    A = np.array([[-3.0, 0.0], [3.0, 0.0]])
    model = MarkovChainModel(2, lambda t: A, 0, rate_bound=1.0)
    with pytest.raises(InvariantError):
        simulate_chain(model, 50.0, 200, seed=0)


# ---------------------------------------------------------------------------
# compensated indicator process
# ---------------------------------------------------------------------------


def test_martingale_mean_vanishes():
    model = two_state_model(1.0, 1.0)
    grid = TimeGrid.uniform(1.0, 21)
    paths = simulate_chain(model, 1.0, 10_000, seed=3)
    M1 = np.array([doob_meyer_martingale(p, model, grid).values[-1] for p in paths])
    mean = M1.mean(axis=0)
    se = M1.std(axis=0) / math.sqrt(len(paths))
    assert np.all(np.abs(mean) <= 3.0 * se)


def test_martingale_forced_jump_formula():
    # direct formula: drift -A e_old t before the jump at 0.5, then the unit
    # jump e_new - e_old plus drift -A e_new (t - 0.5)
    model = two_state_model(1.0, 2.0)
    path = ChainPath(np.array([0.5]), np.array([0, 1]), horizon=1.0)
    grid = TimeGrid.uniform(1.0, 5)
    A = model.rates(0.0)
    M = doob_meyer_martingale(path, model, grid).values
    e0, e1 = np.eye(2)
    want_before = -A @ e0 * 0.25
    assert np.allclose(M[1], want_before)
    want_after = (e1 - e0) - A @ e0 * 0.5 - A @ e1 * 0.25
    assert np.allclose(M[3], want_after)


def test_martingale_absorbing_constant():
    A = np.array([[0.0, 1.0], [0.0, -1.0]])  # state 0 absorbing
    model = MarkovChainModel(2, lambda t: A, 0, rate_bound=1.0)
    path = ChainPath(np.array([]), np.array([0]), horizon=1.0)
    grid = TimeGrid.uniform(1.0, 11)
    M = doob_meyer_martingale(path, model, grid).values
    assert np.allclose(M, 0.0)


# ---------------------------------------------------------------------------
# bracket density
# ---------------------------------------------------------------------------


def test_psi_two_state_hand_computed():
    lam, mu = 1.7, 0.4
    A = np.array([[-lam, mu], [lam, -mu]])
    psi = psi_matrix(A, np.array([1.0, 0.0]))
    assert np.array_equal(psi, psi.T)
    assert np.allclose(psi, [[lam, -lam], [-lam, lam]])
    eig = np.linalg.eigvalsh(psi)
    assert np.allclose(sorted(eig), [0.0, 2 * lam], atol=1e-12)


def test_psi_zero_generator():
    assert np.allclose(psi_matrix(np.zeros((3, 3)), np.eye(3)[1]), 0.0)


def test_psi_random_generators_psd():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = int(rng.integers(2, 6))
        A = rng.uniform(0.0, 3.0, size=(n, n))
        np.fill_diagonal(A, 0.0)
        A -= np.diag(A.sum(axis=0))
        for i in range(n):
            psi = psi_matrix(A, np.eye(n)[i])
            assert np.array_equal(psi, psi.T)
            assert np.linalg.eigvalsh(psi).min() >= -1e-12


def test_semi_norm_values():
    lam = 0.9
    psi = np.array([[lam, -lam], [-lam, lam]])
    assert semi_norm(np.zeros(2), psi) == 0.0
    assert semi_norm(np.array([1.0, 1.0]), psi) == pytest.approx(0.0, abs=1e-12)
    assert semi_norm(np.array([1.0, 0.0]), psi) == pytest.approx(lam)
    with pytest.raises(PreconditionError):
        semi_norm(np.ones(2), np.array([[0.0, 1.0], [0.0, 0.0]]))


@settings(max_examples=50, deadline=None)
@given(shift=st.floats(-5.0, 5.0), z0=st.floats(-3.0, 3.0), z1=st.floats(-3.0, 3.0))
def test_semi_norm_shift_invariance(shift, z0, z1):
    A = np.array([[-1.0, 2.0], [1.0, -2.0]])
    psi = psi_matrix(A, np.array([0.0, 1.0]))
    z = np.array([z0, z1])
    a = semi_norm(z, psi)
    b = semi_norm(z + shift, psi)
    assert a == pytest.approx(b, abs=1e-9 * (1 + abs(a)))


# ---------------------------------------------------------------------------
# balance checks
# ---------------------------------------------------------------------------


def test_compensator_driver_is_balanced():
    grid = TimeGrid.uniform(1.0, 11)
    model = two_state_model(1.0, 2.0)
    rep = check_gamma_balanced(flat_driver(grid, model), model, probes=200, seed=1)
    assert rep.passed
    assert rep.worst_ratio_deviation == 0.0


def test_weighted_eta_balanced_for_half_gamma():
    # constructed ratios (1, 1.5, 0.5) on a 3-state generator, gamma = 0.5
    A = np.array([[-2.0, 0.0, 0.0], [1.0, -1.0, 0.0], [1.0, 1.0, 0.0]])
    model = MarkovChainModel(3, lambda t: A, 0, rate_bound=2.0)
    w = np.array([1.0, 1.5, 0.5])

    def eta(t, i, z, zp):
        return w * A[:, i] if i == 0 else A[:, i]

    def f(t, i, y, z):
        e = eta(t, i, z, zp=None)
        return float(z @ (e - A[:, i]))

    grid = TimeGrid.uniform(1.0, 11)
    drv = GammaBalancedDriver(
        f=f, eta=eta, gamma=0.5, c_path=SampledPath(grid, np.zeros(11), LINEAR),
        c1=0.0, c2=0.0, beta_hat=0.0, beta=1.0, beta_tilde=1.0,
        k1=lambda t: 1.0, k2=lambda t: 1.0,
    )
    rep = check_gamma_balanced(drv, model, probes=400, seed=2)
    assert rep.passed


def test_sum_violation_reported_with_magnitude_one():
    grid = TimeGrid.uniform(1.0, 11)
    model = two_state_model(1.0, 2.0)
    base = flat_driver(grid, model)

    def bad_eta(t, i, z, zp):
        return model.rates(t)[:, i] + np.array([1.0, 0.0])

    bad = GammaBalancedDriver(
        f=base.f, eta=bad_eta, gamma=1.0, c_path=base.c_path,
        c1=0.0, c2=0.0, beta_hat=0.0, beta=1.0, beta_tilde=1.0,
        k1=base.k1, k2=base.k2,
    )
    rep = check_gamma_balanced(bad, model, probes=100, seed=3)
    assert not rep.passed
    assert rep.worst_sum == pytest.approx(1.0)


# ---------------------------------------------------------------------------
# chain transforms
# ---------------------------------------------------------------------------


def test_transform_chain_identity():
    grid = TimeGrid.uniform(1.0, 51)
    model = two_state_model(1.0, 2.0)
    tilde = transform_chain(model, TimeChangeMap.identity(grid))
    assert np.allclose(tilde.rates(0.5), model.rates(0.5))


def test_transform_chain_constant_density():
    # alpha^2 = 2: rates halve and run on the stretched scale
    grid = TimeGrid.uniform(1.0, 101)
    model = two_state_model(1.0, 2.0)
    clock = chain_clock(SampledPath(grid, np.full(101, 2.0), LINEAR), c2=0.0)
    tilde = transform_chain(model, clock)
    assert np.allclose(tilde.rates(1.0), model.rates(0.5) / 2.0, atol=1e-9)
    cols = tilde.rates(1.0).sum(axis=0)
    assert np.allclose(cols, 0.0, atol=1e-12)


def test_transform_chain_rejects_fast_clock():
    grid = TimeGrid.uniform(1.0, 51)
    from tcbsde.timechange import IncreasingProcess, build_clock_from_density

    slow = build_clock_from_density(
        SampledPath(grid, np.full(51, 0.5), LINEAR), IncreasingProcess.identity(grid), eps=0.5
    )
    with pytest.raises(InvariantError):
        transform_chain(two_state_model(), slow)


def test_transform_occupancy_law():
    # occupancy of the transformed chain at t matches the original at inv(t)
    P = 10_000
    grid = TimeGrid.uniform(2.0, 101)
    model = two_state_model(1.0, 1.0)
    clock = chain_clock(SampledPath(grid, np.full(101, 2.0), LINEAR), c2=0.0)
    tilde = transform_chain(model, clock)
    t = 1.5
    occ_tilde = occupancy(simulate_chain(tilde, 2.0, P, seed=11), t, 2)
    s = float(clock.inverse_at(t))
    occ_orig = occupancy(simulate_chain(model, 2.0, P, seed=12), s, 2)
    assert np.max(np.abs(occ_tilde - occ_orig)) <= 3.0 / math.sqrt(P)


def test_transform_driver_rescales_coefficient():
    # C = 4, C2 = 1: density 4, transformed y-coefficient exactly 1
    grid = TimeGrid.uniform(1.0, 101)
    model = two_state_model(1.0, 2.0)
    drv = flat_driver(grid, model, c=4.0)
    clock = chain_clock(drv.c_path, c2=1.0)
    tilde = transform_chain_driver(drv, clock)
    assert np.allclose(tilde.c_path.values, 1.0, atol=1e-9)
    y = 0.7
    got = tilde.f(2.0, 0, y, np.zeros(2))
    assert got == pytest.approx(-1.0 * y, rel=1e-9)


def test_balance_survives_transform_with_same_gamma():
    A = np.array([[-2.0, 0.0, 0.0], [1.0, -1.0, 0.0], [1.0, 1.0, 0.0]])
    model = MarkovChainModel(3, lambda t: A, 0, rate_bound=2.0)
    grid = TimeGrid.uniform(1.0, 101)
    w = np.array([1.0, 1.5, 0.5])

    def eta(t, i, z, zp):
        return w * A[:, i] if i == 0 else A[:, i]

    def f(t, i, y, z):
        return float(z @ (eta(t, i, z, None) - A[:, i])) - (1.0 + 3.0 * t) * y

    c = SampledPath(grid, 1.0 + 3.0 * grid.nodes, LINEAR)
    drv = GammaBalancedDriver(
        f=f, eta=eta, gamma=0.5, c_path=c,
        c1=0.0, c2=0.0, beta_hat=0.0, beta=1.0, beta_tilde=1.0,
        k1=lambda t: 1.0, k2=lambda t: 1.0,
    )
    clock = chain_clock(c, c2=0.0)
    tilde_model = transform_chain(model, clock)
    tilde_drv = transform_chain_driver(drv, clock)
    rep = check_gamma_balanced(
        tilde_drv, tilde_model, probes=300, t_max=float(clock.target_grid.t_end), seed=5
    )
    assert rep.passed
    assert np.all(tilde_drv.c_path.values <= 1.0 + 1e-9)
