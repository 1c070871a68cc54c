"""Brownian-driven backward SDEs and their time-change transforms.

The equation solved throughout is, in its sign convention,

    Y_t = xi + int_t^tau f(s, Y_s, Z_s) ds + int_t^tau Z_s dW_s,

with the martingale integral *added* after the driver term.  The discrete
consequences, validated against the fixed-point oracle before any closed form
is trusted:

    Y_j = E[Y_{j+1} | F_j] + f(t_j, Y_j, Z_j) dt_j
    Z_j = - E[Y_{j+1} dW_j | F_j] / dt_j

and the linear driver ``f = r y + u z`` prices as
``Y_0 = exp(int r) E[xi(G)]`` with ``G ~ N(-int u, T)``.

A driver with time-varying Lipschitz coefficients ``r_t`` (in y) and ``u_t``
(in z) is tamed by the clock with density ``alpha^2 = max(r, u^2)``: under the
time change the driver

    f~(s, y, z) = f(inv(s), y, z * alpha(inv(s))) / alpha^2(inv(s))

has uniform Lipschitz constant 1, the rescaled noise is again Brownian, and
solutions map back via ``Y_t = y(phi(t))``, ``Z_t = z(phi(t)) sqrt(phi'(t))``.

Schemes: explicit backward Euler with least-squares regression for
conditional expectations (global polynomial basis, or bound-preserving
equal-count bins), plus an independent fixed-point oracle that iterates the
frozen-driver equation on a state grid with Gauss-Hermite quadrature.
Everything is deterministic given the seed; regressions reduce over paths in
a fixed order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import (
    InvariantError,
    PreconditionError,
    SchemeError,
    StructuralError,
    UnsupportedError,
)
from .timechange import (
    LINEAR,
    CoefficientProcesses,
    SampledPath,
    TimeChangeMap,
    TimeGrid,
)

Driver = Callable[..., np.ndarray]  # f(t, w, y, z) -> per-path values
Payoff = Callable[[np.ndarray, np.ndarray], np.ndarray]  # xi(tau, w_tau) -> per-path


# ---------------------------------------------------------------------------
# noise
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class BrownianEnsemble:
    """P paths of d-dimensional Brownian increments on a shared grid."""

    grid: TimeGrid
    increments: np.ndarray  # (P, n_steps, d)
    seed: int

    def __post_init__(self):
        if self.increments.ndim != 3:
            raise InvariantError("increments must be (paths, steps, dim)")
        if self.increments.shape[1] != self.grid.n_nodes - 1:
            raise InvariantError("one increment per grid step required")

    @property
    def paths(self) -> int:
        return self.increments.shape[0]

    @property
    def dim(self) -> int:
        return self.increments.shape[2]

    @cached_property
    def values(self) -> np.ndarray:
        """Path values W on the grid nodes, (P, n_nodes, d), starting at 0."""
        P, _, d = self.increments.shape
        out = np.empty((P, self.grid.n_nodes, d))
        out[:, 0, :] = 0.0
        np.cumsum(self.increments, axis=1, out=out[:, 1:, :])
        return out


def simulate_brownian(grid: TimeGrid, paths: int, dim: int, seed: int) -> BrownianEnsemble:
    """Gaussian increments with variance equal to the step size; deterministic per seed."""
    if paths < 1 or dim < 1:
        raise PreconditionError("need paths >= 1 and dim >= 1")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((paths, grid.n_nodes - 1, dim))
    z *= np.sqrt(grid.steps)[None, :, None]
    return BrownianEnsemble(grid=grid, increments=z, seed=seed)


def restrict_brownian(W: BrownianEnsemble, grid: TimeGrid) -> BrownianEnsemble:
    """The same Brownian paths read on a coarser grid (increments aggregated).

    Used to couple a direct solve on the original grid with a transformed
    solve fed from the same fine simulation.
    """
    idx = _snap_to_grid(W.grid.nodes, grid.nodes)
    idx[0] = 0
    if np.any(np.diff(idx) < 1):
        raise StructuralError("target grid is finer than the simulated one")
    if np.max(np.abs(W.grid.nodes[idx] - grid.nodes)) > grid.max_step:
        raise StructuralError("grids are not nested closely enough to restrict")
    vals = W.values[:, idx, :]
    return BrownianEnsemble(grid=grid, increments=np.diff(vals, axis=1), seed=W.seed)


# ---------------------------------------------------------------------------
# problems
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TerminalRule:
    """Deterministic horizon (the grid end) or first exit of one noise coordinate.

    Exits are detected at grid nodes, i.e. the stopping time is snapped to the
    next node; paths that never exit are truncated at the grid end and counted
    in the solver metadata.
    """

    kind: str = "fixed"  # "fixed" | "first_exit"
    coord: int = 0
    lower: float = -math.inf
    upper: float = math.inf

    def stop_indices(self, state: np.ndarray) -> np.ndarray:
        n = state.shape[1]
        if self.kind == "fixed":
            return np.full(state.shape[0], n - 1, dtype=int)
        if self.kind != "first_exit":
            raise InvariantError(f"unknown terminal rule {self.kind!r}")
        x = state[:, :, self.coord]
        outside = (x <= self.lower) | (x >= self.upper)
        hit = np.argmax(outside, axis=1)
        hit[~outside.any(axis=1)] = n - 1
        return hit


@dataclass(frozen=True)
class WienerBSDEProblem:
    """Driver, coefficient processes, terminal rule and payoff for one equation.

    ``driver(t, w, y, z)`` is vectorized over paths: ``w`` is ``(m, d)``,
    ``y`` is ``(m,)`` and ``z`` is ``(m, d)``.  ``payoff(tau, w_tau)`` maps the
    stopped time/state arrays to terminal values.
    """

    k: int
    d: int
    driver: Driver
    coeffs: CoefficientProcesses
    terminal: TerminalRule
    payoff: Payoff
    mode: str = "lipschitz"  # "lipschitz" | "monotone"


@dataclass(eq=False)
class SolutionEnsemble:
    grid: TimeGrid
    Y: np.ndarray  # (P, n_nodes)
    Z: np.ndarray  # (P, n_nodes, d)
    stop_idx: np.ndarray  # (P,)
    scheme: str
    seed: int
    metadata: dict = field(default_factory=dict)

    @property
    def paths(self) -> int:
        return self.Y.shape[0]

    def y0(self) -> float:
        return float(self.Y[0, 0])

    def y0_se(self) -> float:
        # Y_0 is the F_0 expectation; its error is driven by the terminal-layer
        # Monte Carlo average, reported via the metadata when available.
        return float(self.metadata.get("y0_se", np.nan))


@dataclass(eq=False)
class TransformedProblem:
    """A problem rewritten on the clock's time scale, plus matching ensembles.

    ``problem`` is a genuine :class:`WienerBSDEProblem` with the transformed
    driver (uniform Lipschitz constant at most 1) on the target grid.
    ``noise`` carries the rescaled Brownian increments and ``state`` the
    time-changed original Brownian path, which is the Markov state of the
    transformed equation; ``state_var`` holds its per-step transition
    variances.
    """

    base: WienerBSDEProblem
    clock: TimeChangeMap
    problem: WienerBSDEProblem
    noise: BrownianEnsemble | None = None
    state: np.ndarray | None = None
    state_var: np.ndarray | None = None

    @property
    def grid(self) -> TimeGrid:
        return self.clock.target_grid


# ---------------------------------------------------------------------------
# transforms
# ---------------------------------------------------------------------------


def _snap_to_grid(nodes: np.ndarray, times: np.ndarray) -> np.ndarray:
    idx = np.searchsorted(nodes, times)
    idx = np.clip(idx, 1, nodes.size - 1)
    left_closer = (times - nodes[idx - 1]) < (nodes[idx] - times)
    idx = np.where(left_closer, idx - 1, idx)
    return idx


def _snapped_inverse_indices(W: BrownianEnsemble, clock: TimeChangeMap) -> np.ndarray:
    inv = clock.inverse.values
    if np.any(~np.isfinite(inv)):
        raise StructuralError("clock does not cover its own target horizon")
    if inv[-1] > W.grid.t_end + 1e-9:
        raise StructuralError("noise grid does not cover the clock image")
    idx = _snap_to_grid(W.grid.nodes, inv)
    idx[0] = 0
    if np.any(np.diff(idx) < 1):
        raise StructuralError(
            "noise grid does not refine the clock image; use a finer simulation grid"
        )
    return idx


def transform_brownian(W: BrownianEnsemble, clock: TimeChangeMap) -> BrownianEnsemble:
    """Rescaled increments of the time-changed Brownian path.

    Over target step j the increment is
    ``(W(inv(t_{j+1})) - W(inv(t_j))) / sqrt(d inv_j / dt_j)``; the inverse
    times are snapped to the simulation grid and the realized gaps are used as
    the derivative sample, so every increment has variance exactly ``dt_j``.
    """
    idx = _snapped_inverse_indices(W, clock)
    src_times = W.grid.nodes[idx]
    gaps = np.diff(src_times)
    dt = clock.target_grid.steps
    vals = W.values[:, idx, :]
    inc = np.diff(vals, axis=1) * np.sqrt(dt / gaps)[None, :, None]
    return BrownianEnsemble(grid=clock.target_grid, increments=inc, seed=W.seed)


def transform_driver(
    problem: WienerBSDEProblem,
    clock: TimeChangeMap,
    W: BrownianEnsemble | None = None,
) -> TransformedProblem:
    """Rewrite the problem on the clock's scale; attach ensembles when noise is given.

    The new driver is
    ``f~(s, y, z) = f(inv(s), y, z / sqrt(inv'(s))) * inv'(s)`` with
    ``inv'(s) = 1 / alpha^2(inv(s))`` composed exactly through the clock's
    density, which is what keeps the probed Lipschitz ratio at or below 1 to
    rounding rather than to grid tolerance.
    """
    if clock.density is None:
        raise StructuralError("clock must carry its density to transform a driver")
    if not clock.source_grid.same_as(problem.coeffs.grid):
        raise StructuralError("clock and problem coefficients live on different grids")

    base_driver = problem.driver
    inverse_at = clock.inverse_at
    density_at = clock.density_at

    def tilde_driver(s, w, y, z):
        t = float(inverse_at(s))
        a2 = float(density_at(t))
        return base_driver(t, w, y, z * math.sqrt(a2)) / a2

    base_payoff = problem.payoff

    def tilde_payoff(tau, w_tau):
        return base_payoff(np.asarray(clock.inverse_at(tau)), w_tau)

    tgt = clock.target_grid
    ones = np.ones(tgt.n_nodes)
    tilde_coeffs = CoefficientProcesses(
        r=SampledPath(tgt, ones, LINEAR),
        u=SampledPath(tgt, ones, LINEAR),
        alpha_sq=SampledPath(tgt, ones, LINEAR),
        eps=1.0,
        mode=problem.coeffs.mode,
        l=SampledPath(tgt, ones, LINEAR) if problem.coeffs.mode == "monotone" else None,
    )
    if problem.terminal.kind == "fixed":
        tilde_terminal = TerminalRule(kind="fixed")
    else:
        tilde_terminal = problem.terminal  # exit interval applies to the same state

    tilde_problem = WienerBSDEProblem(
        k=problem.k,
        d=problem.d,
        driver=tilde_driver,
        coeffs=tilde_coeffs,
        terminal=tilde_terminal,
        payoff=tilde_payoff,
        mode=problem.mode,
    )
    out = TransformedProblem(base=problem, clock=clock, problem=tilde_problem)
    if W is not None:
        idx = _snapped_inverse_indices(W, clock)
        out.noise = transform_brownian(W, clock)
        out.state = W.values[:, idx, :]
        out.state_var = np.diff(W.grid.nodes[idx])
    return out


def check_uniform_lipschitz(
    driver: Driver,
    n_probes: int,
    box: float,
    *,
    dim: int = 1,
    t_range: tuple[float, float] = (0.0, 1.0),
    seed: int = 0,
    n_time_batches: int = 50,
) -> float:
    """Max probed ratio ``|f(t,y,z) - f(t,y',z')| / (|y-y'| + |z-z'|)``.

    Probes are grouped by sampled time (drivers are vectorized per time) and
    split into y-only, z-only and joint perturbations so linear drivers attain
    their constant exactly.  Zero-denominator probes are skipped.
    """
    if n_probes < 1:
        raise PreconditionError("need at least one probe")
    rng = np.random.default_rng(seed)
    per_batch = max(1, n_probes // n_time_batches)
    worst = 0.0
    for _ in range(n_time_batches):
        t = float(rng.uniform(*t_range))
        m = per_batch
        w = rng.uniform(-box, box, size=(m, dim))
        y = rng.uniform(-box, box, size=m)
        yp = rng.uniform(-box, box, size=m)
        z = rng.uniform(-box, box, size=(m, dim))
        zp = rng.uniform(-box, box, size=(m, dim))
        third = m // 3
        zp[:third] = z[:third]  # y-only
        yp[third : 2 * third] = y[third : 2 * third]  # z-only
        num = np.abs(driver(t, w, y, z) - driver(t, w, yp, zp))
        den = np.abs(y - yp) + np.linalg.norm(z - zp, axis=-1)
        ok = den > 0
        if np.any(ok):
            worst = max(worst, float(np.max(num[ok] / den[ok])))
    return worst


# ---------------------------------------------------------------------------
# solvers
# ---------------------------------------------------------------------------


def _unpack(problem_or_transformed, ensemble, state, state_var):
    if isinstance(problem_or_transformed, TransformedProblem):
        tp = problem_or_transformed
        ensemble = ensemble if ensemble is not None else tp.noise
        state = state if state is not None else tp.state
        state_var = state_var if state_var is not None else tp.state_var
        if ensemble is None:
            raise StructuralError("transformed problem carries no noise ensemble")
        return tp.problem, ensemble, state, state_var, True
    return problem_or_transformed, ensemble, state, state_var, False


def _contraction_guard(problem: WienerBSDEProblem, grid: TimeGrid, transformed: bool):
    if transformed:
        lip = 1.0
    else:
        lip = float(np.max(problem.coeffs.alpha_sq.values))
    bad = grid.steps * lip >= 1.0
    if np.any(bad):
        j = int(np.argmax(bad))
        raise SchemeError(
            f"per-step contraction fails at step {j}: dt * max Lipschitz = "
            f"{grid.steps[j] * lip:.3g} >= 1"
        )


def _poly_features(x: np.ndarray, degree: int) -> np.ndarray:
    cols = [np.ones(x.shape[0])]
    for j in range(x.shape[1]):
        for p in range(1, degree + 1):
            cols.append(x[:, j] ** p)
    return np.column_stack(cols)


class _Regressor:
    """Least-squares conditional expectation on a fixed design, reused per step."""

    def __init__(self, x, basis, degree, n_bins):
        self.kind = basis
        self.rank_deficient = False
        if basis == "poly":
            self.A = _poly_features(x, degree)
        elif basis == "bins":
            # Equal-count bins on the first coordinate: local averaging keeps
            # estimates inside the data range, which global polynomials do not.
            order = np.argsort(x[:, 0], kind="stable")
            self.order = order
            edges = np.linspace(0, x.shape[0], n_bins + 1).astype(int)
            self.slices = [
                (edges[i], edges[i + 1]) for i in range(n_bins) if edges[i + 1] > edges[i]
            ]
        else:
            raise PreconditionError(f"unknown basis {basis!r}")

    def fit_predict(self, y: np.ndarray) -> np.ndarray:
        if self.kind == "poly":
            coef, _, rank, _ = np.linalg.lstsq(self.A, y, rcond=None)
            if rank < self.A.shape[1]:
                self.rank_deficient = True
                return np.full(y.shape[0], float(np.mean(y)))
            return self.A @ coef
        out = np.empty(y.shape[0])
        ys = y[self.order]
        for lo, hi in self.slices:
            out[self.order[lo:hi]] = np.mean(ys[lo:hi])
        return out


def solve_lsmc(
    problem_or_transformed,
    ensemble: BrownianEnsemble | None = None,
    *,
    basis: str = "poly",
    degree: int = 3,
    n_bins: int = 50,
    state: np.ndarray | None = None,
    state_var: np.ndarray | None = None,
) -> SolutionEnsemble:
    """Backward induction with regressed conditional expectations.

    Stopped paths are frozen at their payoff; regression runs on the still
    active subset (the not-yet-stopped indicator interacting with the whole
    basis).  Rank-deficient designs fall back to the ensemble mean and set
    ``metadata["rank_deficient"]``.
    """
    problem, ensemble, state, _, transformed = _unpack(
        problem_or_transformed, ensemble, state, state_var
    )
    if problem.k != 1:
        raise UnsupportedError("solvers cover scalar solutions (k = 1)")
    grid = ensemble.grid
    _contraction_guard(problem, grid, transformed)
    if state is None:
        state = ensemble.values
    P, n, d = state.shape
    dt = grid.steps

    stop_idx = problem.terminal.stop_indices(state)
    truncated = float(np.mean(stop_idx == n - 1)) if problem.terminal.kind == "first_exit" else 0.0
    tau = grid.nodes[stop_idx]
    w_tau = state[np.arange(P), stop_idx, :]
    xi = np.asarray(problem.payoff(tau, w_tau), dtype=float)

    # payoff held from the stopped index on
    after_stop = np.arange(n)[None, :] >= stop_idx[:, None]
    Y = np.where(after_stop, xi[:, None], 0.0)
    Z = np.zeros((P, n, d))

    rank_flag = False
    drv_acc = np.zeros(P)  # running sum of driver * dt along each path
    for j in range(n - 2, -1, -1):
        active = stop_idx > j
        y_next = Y[:, j + 1]
        if not np.any(active):
            continue
        if j == 0:
            pred = np.full(int(np.sum(active)), float(np.mean(y_next[active])))
            zj = -np.mean(y_next[active, None] * ensemble.increments[active, 0, :], axis=0) / dt[0]
            zj = np.broadcast_to(zj, (pred.size, d))
        else:
            reg = _Regressor(state[active, j, :], basis, degree, n_bins)
            pred = reg.fit_predict(y_next[active])
            zj = np.empty((pred.size, d))
            for a in range(d):
                zj[:, a] = -reg.fit_predict(
                    y_next[active] * ensemble.increments[active, j, a]
                ) / dt[j]
            rank_flag = rank_flag or reg.rank_deficient
        drv = np.asarray(
            problem.driver(float(grid.nodes[j]), state[active, j, :], pred, zj), dtype=float
        )
        Y[active, j] = pred + drv * dt[j]
        Z[active, j, :] = zj
        drv_acc[active] += drv * dt[j]

    # Regression preserves cross-path means step by step, so Y_0 is the mean
    # of the per-path discounted target; its spread gives the honest SE.
    target = xi + drv_acc
    meta = {
        "rank_deficient": rank_flag,
        "truncated_fraction": truncated,
        "y0_se": float(np.std(target) / math.sqrt(P)),
        "basis": basis,
    }
    return SolutionEnsemble(
        grid=grid, Y=Y, Z=Z, stop_idx=stop_idx, scheme="lsmc", seed=ensemble.seed, metadata=meta
    )


def solve_picard_oracle(
    problem_or_transformed,
    ensemble: BrownianEnsemble | None = None,
    iterations: int = 8,
    *,
    n_space: int = 201,
    n_quad: int = 21,
    span_sigmas: float = 6.0,
    state: np.ndarray | None = None,
    state_var: np.ndarray | None = None,
) -> SolutionEnsemble:
    """Fixed-point oracle: iterate the frozen-driver equation on a state grid.

    Starting from ``(Y, Z) = (0, 0)``, each sweep solves the discrete backward
    equation with the driver evaluated at the previous iterate, using
    Gauss-Hermite quadrature for the one-step conditional expectations --
    deliberately independent of the regression machinery it is used to check.
    Scalar problems with one noise only; small instances intended.
    """
    problem, ensemble, state, state_var, transformed = _unpack(
        problem_or_transformed, ensemble, state, state_var
    )
    if problem.k != 1 or problem.d != 1:
        raise UnsupportedError("the fixed-point oracle covers k = d = 1 problems")
    grid = ensemble.grid
    _contraction_guard(problem, grid, transformed)
    if state is None:
        state = ensemble.values
    if state_var is None:
        state_var = grid.steps.copy()
    P, n, _ = state.shape
    dt = grid.steps

    total_sd = math.sqrt(float(np.sum(state_var)))
    span = span_sigmas * max(total_sd, 1e-8)
    xs = np.linspace(-span, span, n_space)
    gh_x, gh_w = np.polynomial.hermite_e.hermegauss(n_quad)
    gh_w = gh_w / math.sqrt(2.0 * math.pi)

    rule = problem.terminal
    if rule.kind == "first_exit" and rule.coord != 0:
        raise UnsupportedError("oracle exit rule must watch the single coordinate")

    def absorbed(x):
        if rule.kind == "fixed":
            return np.zeros(x.shape, dtype=bool)
        return (x <= rule.lower) | (x >= rule.upper)

    def payoff_on(tnode, x):
        return np.asarray(problem.payoff(np.full(x.shape, tnode), x[:, None]), dtype=float)

    y_field = np.zeros((n, n_space))
    z_field = np.zeros((n, n_space))
    distances = []
    diverging = 0

    for _ in range(max(1, iterations)):
        y_new = np.zeros_like(y_field)
        z_new = np.zeros_like(z_field)
        y_new[n - 1] = payoff_on(grid.nodes[-1], xs)
        for j in range(n - 2, -1, -1):
            sd = math.sqrt(state_var[j])
            shift = xs[:, None] + sd * gh_x[None, :]
            np.clip(shift, xs[0], xs[-1], out=shift)
            # cubic evaluation: linear interpolation systematically inflates
            # convex fields and the bias accumulates linearly in the step count
            nxt = CubicSpline(xs, y_new[j + 1])(shift)
            cond = nxt @ gh_w
            # E[y(x + dX) dX] = var * d/dx E[y(x + dX)] (Gaussian integration
            # by parts); the convolved field is smooth, so its grid gradient
            # is far more accurate than the raw odd quadrature moment.
            z_new[j] = -np.gradient(cond, xs) * math.sqrt(state_var[j] / dt[j])
            drv = np.asarray(
                problem.driver(float(grid.nodes[j]), xs[:, None], y_field[j], z_field[j][:, None]),
                dtype=float,
            )
            y_new[j] = cond + drv * dt[j]
            mask = absorbed(xs)
            if np.any(mask):
                y_new[j][mask] = payoff_on(grid.nodes[j], xs[mask])
                z_new[j][mask] = 0.0
        dist = float(np.max(np.abs(y_new - y_field)) + np.max(np.abs(z_new - z_field)))
        if distances and dist > distances[-1]:
            diverging += 1
        else:
            diverging = 0
        distances.append(dist)
        y_field, z_field = y_new, z_new

    Y = np.empty((P, n))
    Z = np.empty((P, n, 1))
    for j in range(n):
        Y[:, j] = np.interp(state[:, j, 0], xs, y_field[j])
        Z[:, j, 0] = np.interp(state[:, j, 0], xs, z_field[j])
    stop_idx = rule.stop_indices(state)
    tau = grid.nodes[stop_idx]
    w_tau = state[np.arange(P), stop_idx, :]
    xi = np.asarray(problem.payoff(tau, w_tau), dtype=float)
    for p in range(P):
        Y[p, stop_idx[p] :] = xi[p]
        Z[p, stop_idx[p] :, :] = 0.0

    meta = {
        "iterate_distances": distances,
        "diverging": diverging >= 2,
        "state_values": (xs, y_field),
    }
    return SolutionEnsemble(
        grid=grid, Y=Y, Z=Z, stop_idx=stop_idx, scheme="picard", seed=ensemble.seed, metadata=meta
    )


# ---------------------------------------------------------------------------
# closed form for the linear equation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PolynomialPayoff:
    """Terminal value ``p(W_T)`` with plain power-basis coefficients ``c0 + c1 x + ...``."""

    coefficients: tuple

    def __call__(self, tau, w_tau):
        x = np.asarray(w_tau)[..., 0]
        out = np.zeros_like(x, dtype=float)
        for c in reversed(self.coefficients):
            out = out * x + c
        return out


def _gaussian_poly_mean(coeffs, mean, var):
    # E[p(X)] for X ~ N(mean, var) via the moment recursion
    # M_n = mean M_{n-1} + (n-1) var M_{n-2}.
    deg = len(coeffs) - 1
    M = [1.0, mean]
    for nn in range(2, deg + 1):
        M.append(mean * M[nn - 1] + (nn - 1) * var * M[nn - 2])
    return float(sum(c * M[i] for i, c in enumerate(coeffs)))


def closed_form_linear(
    r: SampledPath, u: SampledPath, payoff: PolynomialPayoff, T: float
) -> float:
    """Exact time-zero value of the linear equation ``f = r y + u z`` at horizon T.

    Under this package's sign convention the value is
    ``exp(int_0^T r) E[p(G)]`` with ``G ~ N(-int_0^T u, T)``; the measure
    shift enters with a minus sign because the martingale integral is added.
    The derivation is validated against the fixed-point oracle in the test
    suite before this function is used as an oracle itself.
    """
    if not isinstance(payoff, PolynomialPayoff):
        raise UnsupportedError("closed form supports polynomial terminal values only")
    nodes = r.grid.nodes
    if T > nodes[-1] + 1e-12:
        raise PreconditionError("horizon exceeds the coefficient grid")
    mask = nodes <= T + 1e-12
    rr = np.trapezoid(r.values[mask], nodes[mask])
    uu = np.trapezoid(u.values[mask], nodes[mask])
    mean = _gaussian_poly_mean(payoff.coefficients, -uu, T)
    return math.exp(rr) * mean


# ---------------------------------------------------------------------------
# solution mapping and weighted norms
# ---------------------------------------------------------------------------


def _interp_paths(grid_from: TimeGrid, arr: np.ndarray, times: np.ndarray) -> np.ndarray:
    # shared query times: one searchsorted, then a vectorized blend over paths
    nodes = grid_from.nodes
    t = np.clip(times, nodes[0], nodes[-1])
    hi = np.clip(np.searchsorted(nodes, t), 1, nodes.size - 1)
    lo = hi - 1
    w = (t - nodes[lo]) / (nodes[hi] - nodes[lo])
    shape = (1, times.size) + (1,) * (arr.ndim - 2)
    w = w.reshape(shape)
    return arr[:, lo] * (1.0 - w) + arr[:, hi] * w


def map_solution(
    sol: SolutionEnsemble, clock: TimeChangeMap, direction: str = "from_transformed"
) -> SolutionEnsemble:
    """Carry a solution across the clock.

    ``from_transformed``: ``Y_t = y(phi(t))``, ``Z_t = z(phi(t)) sqrt(phi'(t))``
    onto the clock's source grid.  ``to_transformed`` applies the reciprocal
    scaling onto the target grid.  The two directions compose to the identity
    up to interpolation tolerance.
    """
    if clock.density is None:
        raise StructuralError("clock must carry its density to rescale Z")
    if direction == "from_transformed":
        out_grid = clock.source_grid
        times = np.asarray(clock.forward.values)
        scale = np.sqrt(clock.density.values)
        if times[-1] > sol.grid.t_end + 1e-9:
            raise StructuralError("solution grid does not cover the clock range")
    elif direction == "to_transformed":
        out_grid = clock.target_grid
        times = np.asarray(clock.inverse.values)
        scale = np.sqrt(np.asarray(clock.derivative_at(out_grid.nodes)))
        if np.any(~np.isfinite(times)):
            raise StructuralError("clock inverse leaves the solution grid")
    else:
        raise PreconditionError(f"unknown direction {direction!r}")

    Y = _interp_paths(sol.grid, sol.Y[:, :, None], times)[:, :, 0]
    Z = _interp_paths(sol.grid, sol.Z, times) * scale[None, :, None]
    stop_times = sol.grid.nodes[sol.stop_idx]
    if direction == "from_transformed":
        mapped_stop = np.asarray(clock.inverse_at(np.minimum(stop_times, times[-1])))
    else:
        mapped_stop = np.asarray(clock.forward_at(np.minimum(stop_times, clock.source_grid.t_end)))
    stop_idx = np.searchsorted(out_grid.nodes, mapped_stop + 1e-12) - 1
    stop_idx = np.clip(stop_idx, 0, out_grid.n_nodes - 1)
    return SolutionEnsemble(
        grid=out_grid,
        Y=Y,
        Z=Z,
        stop_idx=stop_idx,
        scheme=sol.scheme,
        seed=sol.seed,
        metadata=dict(sol.metadata),
    )


@dataclass(frozen=True)
class WeightedNormReport:
    rho: float
    y_weighted: tuple  # (estimate, standard error) of int e^{rho phi} |alpha Y|^2
    z_weighted: tuple  # same for int e^{rho phi} |Z|^2
    sup_weighted: tuple  # same for sup e^{rho phi} |Y|^2
    per_path: dict


def weighted_norms(sol: SolutionEnsemble, clock: TimeChangeMap, rho: float) -> WeightedNormReport:
    """Monte Carlo estimates of the exponentially weighted solution norms."""
    if clock.density is None:
        raise StructuralError("clock must carry its density (alpha^2 samples)")
    grid = sol.grid
    phi = np.asarray(clock.forward_at(grid.nodes))
    a2 = np.asarray(clock.density_at(grid.nodes))
    w = np.exp(rho * phi)
    dt = grid.steps
    P, n = sol.Y.shape
    alive = np.arange(n)[None, :] < sol.stop_idx[:, None]
    ynorm = np.sum(np.where(alive[:, :-1], (w * a2)[None, :-1] * sol.Y[:, :-1] ** 2, 0.0) * dt, axis=1)
    z2 = np.sum(sol.Z**2, axis=2)
    znorm = np.sum(np.where(alive[:, :-1], w[None, :-1] * z2[:, :-1], 0.0) * dt, axis=1)
    upto = np.arange(n)[None, :] <= sol.stop_idx[:, None]
    supnorm = np.max(np.where(upto, w[None, :] * sol.Y**2, -np.inf), axis=1)

    def stat(v):
        return (float(np.mean(v)), float(np.std(v) / math.sqrt(P)))

    return WeightedNormReport(
        rho=rho,
        y_weighted=stat(ynorm),
        z_weighted=stat(znorm),
        sup_weighted=stat(supnorm),
        per_path={"y": ynorm, "z": znorm, "sup": supnorm},
    )


# ---------------------------------------------------------------------------
# verification experiments
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StabilityReport:
    lhs: float
    rhs: float
    beta: float
    delta: float
    components: dict


def stability_gap(
    problem_a: WienerBSDEProblem,
    problem_b: WienerBSDEProblem,
    ensemble: BrownianEnsemble,
    theta: float,
    *,
    beta: float = 0.1,
    delta: float = 1.0,
    solver_kwargs: dict | None = None,
) -> StabilityReport:
    """Both sides of the perturbation-stability estimate, for inspection.

    lhs = |dY(0)|^2 + beta E int e^{theta phi} alpha^2 (|dY|^2 + |dZ|^2)
    rhs = E |e^{theta phi(tau)/2} xi - e^{theta phi(tau')/2} xi'|^2
          + delta^{-1} E int e^{theta phi} |(f - f')(t, Y, Z)/alpha|^2

    ``beta`` and ``delta`` are configuration inputs: the estimate asserts such
    constants exist without giving values, so the two sides are returned for
    reporting, never hard-failed internally.
    """
    if theta <= 3.0:
        raise PreconditionError("the stability estimate requires theta > 3")
    if problem_a.k != problem_b.k or problem_a.d != problem_b.d:
        raise PreconditionError("problems must share dimensions")
    kw = solver_kwargs or {}
    sol_a = solve_lsmc(problem_a, ensemble, **kw)
    sol_b = solve_lsmc(problem_b, ensemble, **kw)
    clock_grid = problem_a.coeffs.grid
    if not clock_grid.same_as(ensemble.grid):
        raise StructuralError("coefficients and noise must share a grid")
    from .timechange import IncreasingProcess, build_phi

    clock = build_phi(problem_a.coeffs, IncreasingProcess.identity(clock_grid))
    grid = ensemble.grid
    phi = np.asarray(clock.forward_at(grid.nodes))
    a2 = problem_a.coeffs.alpha_sq.values
    w = np.exp(theta * phi)
    dt = grid.steps
    P, n = sol_a.Y.shape

    dY = sol_a.Y - sol_b.Y
    dZ = np.sum((sol_a.Z - sol_b.Z) ** 2, axis=2)
    alive = np.arange(n)[None, :] < np.maximum(sol_a.stop_idx, sol_b.stop_idx)[:, None]
    integ = np.sum(
        np.where(alive[:, :-1], (w * a2)[None, :-1] * (dY[:, :-1] ** 2 + dZ[:, :-1]), 0.0) * dt,
        axis=1,
    )
    dy0 = float(np.mean(sol_a.Y[:, 0]) - np.mean(sol_b.Y[:, 0]))
    lhs = dy0**2 + beta * float(np.mean(integ))

    tau_a = grid.nodes[sol_a.stop_idx]
    tau_b = grid.nodes[sol_b.stop_idx]
    xi_a = sol_a.Y[np.arange(P), sol_a.stop_idx]
    xi_b = sol_b.Y[np.arange(P), sol_b.stop_idx]
    term_t = float(
        np.mean(
            (
                np.exp(theta * np.asarray(clock.forward_at(tau_a)) / 2.0) * xi_a
                - np.exp(theta * np.asarray(clock.forward_at(tau_b)) / 2.0) * xi_b
            )
            ** 2
        )
    )
    fdiff = np.zeros((P, n - 1))
    for j in range(n - 1):
        wj = ensemble.values[:, j, :]
        fa = np.asarray(problem_a.driver(float(grid.nodes[j]), wj, sol_a.Y[:, j], sol_a.Z[:, j, :]))
        fb = np.asarray(problem_b.driver(float(grid.nodes[j]), wj, sol_a.Y[:, j], sol_a.Z[:, j, :]))
        fdiff[:, j] = (fa - fb) ** 2 / a2[j]
    term_f = float(np.mean(np.sum(np.where(alive[:, :-1], w[None, :-1] * fdiff, 0.0) * dt, axis=1)))
    rhs = term_t + term_f / delta
    return StabilityReport(
        lhs=lhs,
        rhs=rhs,
        beta=beta,
        delta=delta,
        components={"dy0_sq": dy0**2, "integral": float(np.mean(integ)), "terminal": term_t, "driver": term_f},
    )


@dataclass(frozen=True)
class ComparisonReport:
    min_gap_pathwise: float
    node_means: np.ndarray
    node_ses: np.ndarray
    violating_nodes: int
    violation_fraction: float
    passed: bool


def comparison_experiment(
    problem_a: WienerBSDEProblem,
    problem_b: WienerBSDEProblem,
    ensemble: BrownianEnsemble,
    *,
    probe_count: int = 200,
    probe_box: float = 2.0,
    seed: int = 0,
    solver_kwargs: dict | None = None,
) -> ComparisonReport:
    """Order check for a dominated pair: solve both on shared noise, compare Y.

    Dominance of the inputs (driver and payoff) is verified on random probes
    first.  The verdict counts grid nodes whose mean gap is below ``-3 SE``;
    the raw pathwise minimum is reported alongside.
    Scalar solutions only: the multidimensional comparison machinery is out
    of scope.
    """
    if problem_a.k != 1 or problem_b.k != 1:
        raise UnsupportedError("comparison covers scalar solutions only")
    rng = np.random.default_rng(seed)
    t_end = ensemble.grid.t_end
    for _ in range(probe_count):
        t = float(rng.uniform(0.0, t_end))
        w = rng.uniform(-probe_box, probe_box, size=(1, problem_a.d))
        y = rng.uniform(-probe_box, probe_box, size=1)
        z = rng.uniform(-probe_box, probe_box, size=(1, problem_a.d))
        fa = float(np.asarray(problem_a.driver(t, w, y, z)).ravel()[0])
        fb = float(np.asarray(problem_b.driver(t, w, y, z)).ravel()[0])
        if fa < fb - 1e-9:
            raise PreconditionError("driver dominance fails on a probe")
        xa = float(np.asarray(problem_a.payoff(np.array([t]), w)).ravel()[0])
        xb = float(np.asarray(problem_b.payoff(np.array([t]), w)).ravel()[0])
        if xa < xb - 1e-9:
            raise PreconditionError("terminal dominance fails on a probe")

    kw = solver_kwargs or {}
    sol_a = solve_lsmc(problem_a, ensemble, **kw)
    sol_b = solve_lsmc(problem_b, ensemble, **kw)
    gap = sol_a.Y - sol_b.Y
    P = gap.shape[0]
    means = np.mean(gap, axis=0)
    ses = np.std(gap, axis=0) / math.sqrt(P)
    viol = means < -3.0 * ses
    return ComparisonReport(
        min_gap_pathwise=float(np.min(gap)),
        node_means=means,
        node_ses=ses,
        violating_nodes=int(np.sum(viol)),
        violation_fraction=float(np.mean(viol)),
        passed=not bool(np.any(viol)),
    )


@dataclass(frozen=True)
class BoundednessReport:
    sup_abs_y: float
    bound: float
    passed: bool
    z_accumulation: np.ndarray  # running E int_0^{t ^ tau} |Z|^2


def bounded_solution_check(
    problem: WienerBSDEProblem,
    M: float,
    ensemble: BrownianEnsemble,
    *,
    tol: float = 0.02,
    probe_count: int = 100,
    seed: int = 0,
) -> BoundednessReport:
    """Solve a monotone-decreasing scalar problem through the ``u^2 + 1`` clock.

    Preconditions probed: ``f(t, 0, 0) = 0``, monotone decreasing in y, and
    ``|xi| <= M`` on the realized payoffs.  The clock density used here is
    ``u^2 + 1`` (not the Lipschitz maximum), after which the solve runs with
    the bound-preserving bin regression and maps back; the report compares
    ``sup |Y|`` with ``M`` and accumulates ``E int |Z|^2``.
    """
    if problem.k != 1:
        raise UnsupportedError("boundedness check covers scalar solutions only")
    rng = np.random.default_rng(seed)
    t_end = ensemble.grid.t_end
    for _ in range(probe_count):
        t = float(rng.uniform(0.0, t_end))
        w = rng.uniform(-2.0, 2.0, size=(1, problem.d))
        z = rng.uniform(-2.0, 2.0, size=(1, problem.d))
        f0 = float(np.asarray(problem.driver(t, w, np.zeros(1), np.zeros((1, problem.d)))).ravel()[0])
        if abs(f0) > 1e-9:
            raise PreconditionError("driver does not vanish at the origin")
        y1, y2 = rng.uniform(-2.0, 2.0, size=2)
        f1 = float(np.asarray(problem.driver(t, w, np.array([y1]), z)).ravel()[0])
        f2 = float(np.asarray(problem.driver(t, w, np.array([y2]), z)).ravel()[0])
        if (y1 - y2) * (f1 - f2) > 1e-9:
            raise PreconditionError("driver is not monotone decreasing on a probe")

    grid = ensemble.grid
    u = problem.coeffs.u
    density = u.with_values(u.values**2 + 1.0)
    from .timechange import IncreasingProcess, build_clock_from_density

    clock = build_clock_from_density(density, IncreasingProcess.identity(grid), eps=1.0)
    transformed = transform_driver(problem, clock, W=ensemble)

    stop_idx = problem.terminal.stop_indices(transformed.state)
    P = ensemble.paths
    tau = transformed.grid.nodes[stop_idx]
    w_tau = transformed.state[np.arange(P), stop_idx, :]
    xi = np.asarray(transformed.problem.payoff(tau, w_tau), dtype=float)
    if np.any(np.abs(xi) > M + 1e-9):
        raise PreconditionError("realized terminal values exceed the declared bound")

    tilde = solve_lsmc(transformed, basis="bins")
    sol = map_solution(tilde, clock, "from_transformed")
    upto = np.arange(sol.Y.shape[1])[None, :] <= sol.stop_idx[:, None]
    sup_abs = float(np.max(np.abs(np.where(upto, sol.Y, 0.0))))
    z2 = np.sum(sol.Z**2, axis=2)
    alive = np.arange(sol.Y.shape[1])[None, :] < sol.stop_idx[:, None]
    zacc = np.cumsum(
        np.mean(np.where(alive[:, :-1], z2[:, :-1], 0.0), axis=0) * sol.grid.steps
    )
    return BoundednessReport(
        sup_abs_y=sup_abs,
        bound=M,
        passed=sup_abs <= M * (1.0 + tol) + 1e-12,
        z_accumulation=zacc,
    )


# ---------------------------------------------------------------------------
# probe helpers
# ---------------------------------------------------------------------------


def probe_mode_conditions(
    problem: WienerBSDEProblem, n_probes: int = 200, box: float = 2.0, seed: int = 0
) -> dict:
    """Spot-check the declared coefficient inequalities on random probes.

    Returns the worst observed slack per condition; negative slack means a
    violation.  This is a sanity screen, not a proof.
    """
    rng = np.random.default_rng(seed)
    coeffs = problem.coeffs
    grid = coeffs.grid
    worst = {"y_lipschitz": math.inf, "z_lipschitz": math.inf, "monotone": math.inf}
    for _ in range(n_probes):
        t = float(rng.uniform(0.0, grid.t_end))
        w = rng.uniform(-box, box, size=(1, problem.d))
        y1, y2 = rng.uniform(-box, box, size=2)
        z = rng.uniform(-box, box, size=(1, problem.d))
        z2 = rng.uniform(-box, box, size=(1, problem.d))
        rt = float(coeffs.r.at(t))
        ut = float(coeffs.u.at(t))
        f_y1 = float(np.asarray(problem.driver(t, w, np.array([y1]), z)).ravel()[0])
        f_y2 = float(np.asarray(problem.driver(t, w, np.array([y2]), z)).ravel()[0])
        f_z2 = float(np.asarray(problem.driver(t, w, np.array([y1]), z2)).ravel()[0])
        dz = float(np.linalg.norm(z - z2))
        if problem.mode == "lipschitz":
            if abs(y1 - y2) > 1e-12:
                worst["y_lipschitz"] = min(
                    worst["y_lipschitz"], rt * abs(y1 - y2) - abs(f_y1 - f_y2)
                )
        else:
            if abs(y1 - y2) > 1e-12:
                worst["monotone"] = min(
                    worst["monotone"],
                    -rt * (y1 - y2) ** 2 - (y1 - y2) * (f_y1 - f_y2),
                )
        if dz > 1e-12:
            worst["z_lipschitz"] = min(worst["z_lipschitz"], ut * dz - abs(f_y1 - f_z2))
    return worst


def probe_monotone_transform(
    transformed: TransformedProblem, n_probes: int = 200, box: float = 2.0, seed: int = 0
) -> tuple[float, float]:
    """Worst probed monotonicity and growth constants of a transformed driver.

    Both stay at or below 1 for drivers declared in monotone mode.
    """
    rng = np.random.default_rng(seed)
    f = transformed.problem.driver
    t_end = transformed.grid.t_end
    mono = 0.0
    growth = 0.0
    for _ in range(n_probes):
        t = float(rng.uniform(0.0, t_end))
        w = rng.uniform(-box, box, size=(1, 1))
        y1, y2 = rng.uniform(-box, box, size=2)
        z = rng.uniform(-box, box, size=(1, 1))
        f1 = float(np.asarray(f(t, w, np.array([y1]), z)).ravel()[0])
        f2 = float(np.asarray(f(t, w, np.array([y2]), z)).ravel()[0])
        f0 = float(np.asarray(f(t, w, np.zeros(1), z)).ravel()[0])
        if abs(y1 - y2) > 1e-9:
            mono = max(mono, (y1 - y2) * (f1 - f2) / (y1 - y2) ** 2)
        if abs(y1) > 1e-9:
            growth = max(growth, (abs(f1) - abs(f0)) / abs(y1))
    return mono, growth
