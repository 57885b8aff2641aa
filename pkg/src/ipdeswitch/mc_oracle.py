"""Independent switching-value oracles on simulated jump-diffusion paths.

Three routes are provided for problems whose drivers depend on ``(t, x)``
only: exact backward recursion along a deterministic path, brute-force
enumeration of grid strategies, and least-squares regression dynamic
programming on Monte-Carlo paths. None of them touches the grid solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .expr import EvalError
from .problem import SwitchingProblem, UnsupportedDriverError, sample_cloud


class OracleError(RuntimeError):
    pass


class UnsupportedProblemError(OracleError):
    pass


class PathBlowUpError(OracleError):
    def __init__(self, path: int, step: int):
        self.path, self.step = path, step
        super().__init__(f"non-finite state on path {path} at step {step}")


class RankDeficientRegressionError(OracleError):
    def __init__(self, step: int, rank: int, ncols: int):
        self.step = step
        super().__init__(f"regression at step {step} is rank deficient ({rank} < {ncols})")


class CombinatorialLimitError(OracleError):
    pass


# ---------------------------------------------------------------- paths


@dataclass
class PathSet:
    times: np.ndarray          # (n_steps + 1,)
    states: np.ndarray         # (n_paths, n_steps + 1, k)
    jump_counts: np.ndarray    # (n_paths, n_steps, n_atoms)
    jump_path: np.ndarray      # flat jump log in arrival order
    jump_step: np.ndarray
    jump_atom: np.ndarray
    seed: int

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    @property
    def n_steps(self) -> int:
        return self.states.shape[1] - 1

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def x0(self) -> np.ndarray:
        return self.states[0, 0]

    def jump_log(self, path: int) -> list[tuple[int, int]]:
        sel = self.jump_path == path
        return list(zip(self.jump_step[sel].tolist(), self.jump_atom[sel].tolist()))

    def to_csv_rows(self):
        k = self.states.shape[2]
        yield ["path", "step", "t"] + [f"x{j + 1}" for j in range(k)]
        for p in range(self.n_paths):
            for n in range(self.n_steps + 1):
                yield [p, n, repr(float(self.times[n]))] + [repr(float(v)) for v in self.states[p, n]]


def path_stream(seed: int, path: int) -> np.random.Generator:
    """Counter-based stream for one path, keyed by ``(seed, path)``."""
    key = np.array([path, seed], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def simulate_paths(problem: SwitchingProblem, t: float, x, n_paths: int, n_steps: int, seed: int = 0) -> PathSet:
    """Euler scheme with compensated compound-Poisson jumps.

    ``X_{n+1} = X_n + (b - sum_a w_a beta(X_n, e_a)) dt + sigma sqrt(dt) xi_n
    + sum of beta(X_n, e_j) over jumps arriving in ``(t_n, t_{n+1}]``.
    Every path draws from its own Philox stream, so results do not depend on
    how paths are batched.
    """
    if n_paths < 1 or n_steps < 1:
        raise ValueError("n_paths and n_steps must be positive")
    if not 0 <= t < problem.T:
        raise ValueError("start time must lie in [0, T)")
    k, d = problem.k, problem.d
    x = np.atleast_1d(np.asarray(x, dtype=float)).reshape(k)
    horizon = problem.T - t
    dt = horizon / n_steps
    times = t + dt * np.arange(n_steps + 1)
    times[-1] = problem.T
    levy = problem.levy
    n_atoms = levy.n_atoms
    rate = levy.total_mass()
    cum_p = np.cumsum(levy.probabilities())

    xi = np.empty((n_paths, n_steps, d))
    counts = np.zeros((n_paths, n_steps, max(n_atoms, 1)), dtype=np.int32)
    log_p, log_s, log_a = [], [], []
    for p in range(n_paths):
        rng = path_stream(seed, p)
        xi[p] = rng.standard_normal((n_steps, d))
        if rate > 0:
            clock = 0.0
            while True:
                clock += rng.exponential(1.0 / rate)
                if clock > horizon:
                    break
                step = min(int(math.ceil(clock / dt)) - 1, n_steps - 1)
                step = max(step, 0)
                atom = min(int(np.searchsorted(cum_p, rng.random(), side="right")), n_atoms - 1)
                counts[p, step, atom] += 1
                log_p.append(p)
                log_s.append(step)
                log_a.append(atom)

    states = np.empty((n_paths, n_steps + 1, k))
    states[:, 0] = x
    sqdt = math.sqrt(dt)
    X = states[:, 0].copy()
    for n in range(n_steps):
        try:
            drift = problem.drift_at(times[n], X)
            sig = problem.sigma_at(times[n], X)
            inc = drift * dt + np.einsum("pkd,pd->pk", sig, xi[:, n]) * sqdt
            for a, (mark, weight) in enumerate(levy):
                beta = problem.beta_at(X, mark)
                inc += (counts[:, n, a, None] - weight * dt) * beta
        except EvalError:
            # coefficients overflowed; blame the path furthest out
            raise PathBlowUpError(int(np.argmax(np.linalg.norm(X, axis=1))), n) from None
        with np.errstate(over="ignore", invalid="ignore"):
            X = X + inc
        bad = ~np.all(np.isfinite(X), axis=1)
        if np.any(bad):
            raise PathBlowUpError(int(np.flatnonzero(bad)[0]), n + 1)
        states[:, n + 1] = X
    return PathSet(times, states, counts[:, :, :n_atoms], np.asarray(log_p, dtype=np.int64),
                   np.asarray(log_s, dtype=np.int64), np.asarray(log_a, dtype=np.int64), seed)


def deterministic_path(problem: SwitchingProblem, t: float, x, n_steps: int) -> PathSet:
    _require_deterministic(problem)
    return simulate_paths(problem, t, x, 1, n_steps, seed=0)


def moment_check(paths: PathSet, p: int) -> tuple[float, float]:
    """Empirical ``E[sup_s |X_s|^p]`` and the fitted ``C`` in ``C (1 + |x|^p)``."""
    if p < 1:
        raise ValueError("p must be at least 1")
    norms = np.linalg.norm(paths.states, axis=2) ** p
    empirical = float(np.mean(norms.max(axis=1)))
    if not math.isfinite(empirical):
        raise OracleError("moment estimate is not finite")
    x0 = float(np.linalg.norm(paths.x0)) ** p
    return empirical, empirical / (1.0 + x0)


# ---------------------------------------------------------------- strategies


@dataclass(frozen=True)
class Strategy:
    """Initial mode plus ordered switches ``(time, target mode)``; modes are 0-based."""

    initial_mode: int
    switches: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "switches", tuple((float(th), int(a)) for th, a in self.switches))
        prev_t, prev_mode = -math.inf, self.initial_mode
        for th, a in self.switches:
            if th < prev_t:
                raise ValueError("switch times must be nondecreasing")
            if a == prev_mode:
                raise ValueError("a switch must change the mode")
            prev_t, prev_mode = th, a

    def check_modes(self, m: int, T: float):
        modes = [self.initial_mode] + [a for _, a in self.switches]
        if any(not 0 <= a < m for a in modes):
            raise ValueError("strategy uses an unknown mode")
        if any(th > T for th, _ in self.switches):
            raise ValueError("switch times must not exceed T")


def _require_state_only(problem: SwitchingProblem):
    if not problem.state_only_drivers:
        raise UnsupportedDriverError("oracle needs drivers that depend on (t, x) only")


def _require_deterministic(problem: SwitchingProblem):
    ts, xs = sample_cloud(problem, n_cheb=5, n_random=32, seed=0)
    if np.any(problem.sigma_at(ts, xs) != 0):
        raise UnsupportedProblemError("deterministic oracle needs sigma = 0")
    for mark, _ in problem.levy:
        if np.any(problem.beta_at(xs, mark) != 0):
            raise UnsupportedProblemError("deterministic oracle needs beta = 0")


@dataclass
class _Tables:
    running: np.ndarray   # (m, P, N): f_i(t_n, X_n) dt
    costs: np.ndarray     # (m, m, P, N + 1)
    terminal: np.ndarray  # (m, P)


def _tables(problem: SwitchingProblem, paths: PathSet) -> _Tables:
    _require_state_only(problem)
    m = problem.m
    P, N = paths.n_paths, paths.n_steps
    dt = paths.dt
    run = np.empty((m, P, N))
    costs = np.empty((m, m, P, N + 1))
    for n in range(N + 1):
        X = paths.states[:, n]
        costs[:, :, :, n] = problem.costs_at(paths.times[n], X)
        if n < N:
            for i in range(m):
                run[i, :, n] = problem.state_driver_at(i, paths.times[n], X) * dt
    term = np.stack([problem.terminal_at(i, paths.states[:, N]) for i in range(m)])
    return _Tables(run, costs, term)


def _grid_position(paths: PathSet, theta: float) -> float:
    s = (theta - paths.times[0]) / paths.dt
    r = round(s)
    return float(r) if abs(s - r) < 1e-9 else s


def strategy_payoff(problem: SwitchingProblem, paths: PathSet, strategy: Strategy) -> np.ndarray:
    """Per-path payoff: left Riemann sum of running rewards minus switching costs plus terminal reward."""
    strategy.check_modes(problem.m, problem.T)
    tab = _tables(problem, paths)
    N = paths.n_steps
    mode_at = np.full(N, strategy.initial_mode)
    total = np.zeros(paths.n_paths)
    mode = strategy.initial_mode
    for theta, target in strategy.switches:
        s = _grid_position(paths, theta)
        active_from = int(math.ceil(s))
        node = min(int(math.floor(s)), N)
        # the cost is charged at the switch time with the left-node state
        cost_t = np.full(paths.n_paths, theta)
        X = paths.states[:, node]
        total -= problem.cost_at(mode, target, cost_t, X)
        mode_at[active_from:] = target
        mode = target
    for n in range(N):
        total += tab.running[mode_at[n], :, n]
    total += tab.terminal[mode]
    return total


# ---------------------------------------------------------------- deterministic recursion


def _sweep_modes(cont: np.ndarray, costs: np.ndarray, max_sweeps: int) -> np.ndarray:
    """``v^i = max(cont^i, max_{j != i}(v^j - g_ij))`` by ascending sweeps until nothing moves."""
    m = cont.shape[0]
    v = cont.copy()
    for _ in range(max_sweeps):
        moved = False
        for i in range(m):
            for j in range(m):
                if j == i:
                    continue
                better = v[j] - costs[i, j] > v[i]
                if np.any(better):
                    v[i] = np.where(better, v[j] - costs[i, j], v[i])
                    moved = True
        if not moved:
            return v
    raise OracleError("mode sweeps did not settle; check the no-free-loop property")


def dp_switching_value_deterministic(problem: SwitchingProblem, t: float, x, n_steps: int,
                                     return_levels: bool = False):
    """Exact backward recursion along the deterministic path from ``(t, x)``.

    ``x`` may be a single state of shape (k,) or a batch of shape (B, k); the
    result has shape (m,) or (B, m). With ``return_levels`` the full table of
    shape (N + 1, m[, B]) is returned as well.
    """
    _require_state_only(problem)
    _require_deterministic(problem)
    m, k = problem.m, problem.k
    xb = np.asarray(x, dtype=float)
    single = xb.ndim <= 1
    xb = xb.reshape(-1, k)
    dt = (problem.T - t) / n_steps
    times = t + dt * np.arange(n_steps + 1)
    times[-1] = problem.T
    path = [xb]
    for n in range(n_steps):
        path.append(path[-1] + problem.drift_at(times[n], path[-1]) * dt)
    v = np.stack([problem.terminal_at(i, path[-1]) for i in range(m)])
    levels = [v]
    for n in range(n_steps - 1, -1, -1):
        X = path[n]
        cont = np.stack([v[i] + dt * problem.state_driver_at(i, times[n], X) for i in range(m)])
        v = _sweep_modes(cont, problem.costs_at(times[n], X), m + 2)
        levels.append(v)
    levels = np.stack(levels[::-1])  # (N + 1, m, B)
    out = levels[0].T
    if single:
        out = out[0]
        levels = levels[..., 0]
    return (out, levels) if return_levels else out


# ---------------------------------------------------------------- brute force


def count_strategies(n_steps: int, m: int, max_switches: int) -> int:
    return sum(math.comb(n_steps + s - 1, s) * (m - 1) ** s for s in range(max_switches + 1))


def enumerate_strategies_value(problem: SwitchingProblem, t: float, x, n_steps: int, max_switches: int,
                               limit: int = 10_000_000, return_best: bool = False):
    """Brute-force maximum over strategies switching only at ``t_0 .. t_{N-1}``.

    Payoffs are summed strategy by strategy from the path tables; nothing is
    shared with the backward recursion.
    """
    _require_state_only(problem)
    path = deterministic_path(problem, t, x, n_steps)
    m = problem.m
    total = count_strategies(n_steps, m, max_switches) * m
    if total > limit:
        raise CombinatorialLimitError(f"{total} strategies exceed the limit of {limit}")
    tab = _tables(problem, path)
    run = tab.running[:, 0]       # (m, N)
    cum = np.concatenate([np.zeros((m, 1)), np.cumsum(run, axis=1)], axis=1)
    cost = tab.costs[:, :, 0]     # (m, m, N + 1)
    term = tab.terminal[:, 0]
    N = n_steps

    values = np.full(m, -np.inf)
    best = [None] * m

    def walk(start_mode, mode, step, left, acc, switches):
        # stay in ``mode`` from ``step`` to T
        payoff = acc + (cum[mode, N] - cum[mode, step]) + term[mode]
        if payoff > values[start_mode]:
            values[start_mode] = payoff
            best[start_mode] = tuple(switches)
        if left == 0:
            return
        for s in range(step, N):
            seg = acc + (cum[mode, s] - cum[mode, step])
            for target in range(m):
                if target != mode:
                    switches.append((s, target))
                    walk(start_mode, target, s, left - 1, seg - cost[mode, target, s], switches)
                    switches.pop()

    for i in range(m):
        walk(i, i, 0, max_switches, 0.0, [])
    if return_best:
        strategies = [strategy_from_steps(path, i, best[i]) for i in range(m)]
        return values, strategies
    return values


# ---------------------------------------------------------------- regression


def polynomial_features(X: np.ndarray, degree: int) -> np.ndarray:
    """Monomials of total degree <= ``degree`` in the standardised non-constant coordinates."""
    import itertools

    P, k = X.shape
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    live = [j for j in range(k) if std[j] > 1e-12 * (1.0 + abs(mean[j]))]
    Z = (X[:, live] - mean[live]) / std[live] if live else np.zeros((P, 0))
    cols = [np.ones(P)]
    for deg in range(1, degree + 1):
        for combo in itertools.combinations_with_replacement(range(len(live)), deg):
            cols.append(np.prod(Z[:, list(combo)], axis=1))
    return np.stack(cols, axis=1)


def basis_dimension(k: int, degree: int) -> int:
    return math.comb(k + degree, degree)


@dataclass
class RegressionResult:
    values: np.ndarray
    stderr: np.ndarray
    n_paths: int
    basis_degree: int


def regression_switching_value(problem: SwitchingProblem, paths: PathSet, basis_degree: int = 2,
                               n_boot: int = 200, seed: int = 0) -> RegressionResult:
    """Least-squares dynamic programming for the switching value at the paths' start.

    Switch decisions at each step use regressed continuation values; the
    values carried backward are the realised path payoffs of those decisions.
    The standard error bootstraps the final averaging over resampled paths.
    """
    _require_state_only(problem)
    m = problem.m
    P, N = paths.n_paths, paths.n_steps
    nb = basis_dimension(problem.k, basis_degree)
    if P < 10 * nb:
        raise ValueError(f"need at least {10 * nb} paths for a degree-{basis_degree} basis")
    tab = _tables(problem, paths)
    realised = tab.terminal.copy()  # (m, P)
    for n in range(N - 1, 0, -1):
        X = paths.states[:, n]
        Phi = polynomial_features(X, basis_degree)
        coef, _, rank, _ = np.linalg.lstsq(Phi, realised.T, rcond=None)
        if rank < Phi.shape[1]:
            raise RankDeficientRegressionError(n, int(rank), Phi.shape[1])
        est_stay = tab.running[:, :, n] + (Phi @ coef).T
        stay = tab.running[:, :, n] + realised
        costs = tab.costs[:, :, :, n]
        est = _sweep_modes(est_stay, costs, m + 2)
        switch = est > est_stay + 1e-12 * (1.0 + np.abs(est_stay))
        target = _switch_targets(est, costs)
        new = np.where(switch, -np.inf, stay)
        for _ in range(m):
            for i in range(m):
                if np.any(switch[i]):
                    src = new[target[i], np.arange(P)] - costs[i, target[i], np.arange(P)]
                    new[i] = np.where(switch[i], src, new[i])
        realised = new
    costs0 = tab.costs[:, :, 0, 0]
    run0 = tab.running[:, 0, 0]

    def value_at_start(sample):
        cont = run0 + sample.mean(axis=1)
        return _sweep_modes(cont[:, None], costs0[:, :, None], m + 2)[:, 0]

    values = value_at_start(realised)
    rng = np.random.default_rng(seed)
    boots = np.empty((n_boot, m))
    for b in range(n_boot):
        idx = rng.integers(0, P, P)
        boots[b] = value_at_start(realised[:, idx])
    stderr = boots.std(axis=0, ddof=1) if n_boot > 1 else np.zeros(m)
    return RegressionResult(values, stderr, P, basis_degree)


def _switch_targets(values: np.ndarray, costs: np.ndarray) -> np.ndarray:
    m = values.shape[0]
    cand = values[None, :, :] - costs  # [i, j, P]
    cand[np.arange(m), np.arange(m)] = -np.inf
    return cand.argmax(axis=1)


def oracle_values(problem: SwitchingProblem, t: float, x, n_steps: int, n_paths: int = 20000,
                  seed: int = 0, basis_degree: int = 2) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic recursion when ``sigma = beta = 0``, regression otherwise; returns (values, stderr)."""
    try:
        _require_deterministic(problem)
    except UnsupportedProblemError:
        paths = simulate_paths(problem, t, x, n_paths, n_steps, seed)
        res = regression_switching_value(problem, paths, basis_degree, seed=seed)
        return res.values, res.stderr
    return dp_switching_value_deterministic(problem, t, x, n_steps), np.zeros(problem.m)


def strategy_from_steps(paths: PathSet, initial_mode: int, steps: Sequence[tuple[int, int]]) -> Strategy:
    return Strategy(initial_mode, tuple((paths.times[s], a) for s, a in steps))
