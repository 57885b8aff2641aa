"""Backward time-stepping for one frozen-jump stage of the obstacle system.

Each step computes an explicit unreflected candidate per mode and then
projects it onto the interconnected obstacles ``max_{j != i}(u^j - g_ij)`` by
repeated ascending-mode sweeps.
"""

from __future__ import annotations

import warnings
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .operators import Grid, GridOperators, ValueField
from .problem import SwitchingProblem


class NonFiniteValueError(ArithmeticError):
    def __init__(self, mode: int, level: int, node: tuple):
        self.mode, self.level, self.node = mode, level, node
        super().__init__(f"non-finite candidate for mode {mode + 1} at level {level}, node {node}")


class ObstacleSweepError(RuntimeError):
    """Obstacle projection did not settle; a zero- or negative-cost loop is likely."""


class CFLWarning(UserWarning):
    pass


@dataclass
class FrozenJumpField:
    q: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        if not np.all(np.isfinite(self.q)):
            raise ValueError("frozen jump field must be finite")

    @classmethod
    def zeros(cls, m: int, grid: Grid) -> "FrozenJumpField":
        return cls(np.zeros((m, grid.n_t + 1, *grid.nodes)))


@dataclass
class ReflectionField:
    """Per-step obstacle pushes and the mode switched into (``-1`` when none)."""

    increments: np.ndarray
    switch_target: np.ndarray

    @classmethod
    def zeros(cls, m: int, grid: Grid) -> "ReflectionField":
        shape = (m, grid.n_t + 1, *grid.nodes)
        return cls(np.zeros(shape), np.full(shape, -1, dtype=np.int16))


@dataclass
class SolveDiagnostics:
    cfl: float
    clamp: dict
    sweep_histogram: Counter = field(default_factory=Counter)

    def as_dict(self) -> dict:
        out = {"cfl": self.cfl, "max_sweeps": max(self.sweep_histogram, default=0)}
        out.update(self.clamp)
        out["sweep_histogram"] = dict(sorted(self.sweep_histogram.items()))
        return out


def cost_level(ops: GridOperators, n: int) -> np.ndarray:
    """Switching costs at ``t_n`` on the nodes, shape (m, m, *nodes), cached when time-free."""
    problem = ops.problem
    time_free = not any(g.depends_on({"t"}) for row in problem.costs for g in row)
    key = ("costs", 0 if time_free else n)
    cache = ops._coeff_cache
    if key not in cache:
        cache[key] = problem.costs_at(ops.grid.time(n), ops.grid.points)
    return cache[key]


def obstacle(values: np.ndarray, costs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Obstacle ``max_{j != i}(u^j - g_ij)`` per mode and the lowest maximising ``j``."""
    m = values.shape[0]
    cand = values[None, :] - costs  # [i, j, ...]
    diag = np.arange(m)
    cand[diag, diag] = -np.inf
    return cand.max(axis=1), cand.argmax(axis=1)


def project_obstacles(candidate: np.ndarray, costs: np.ndarray, tol: float, max_sweeps: int):
    """Ascending-mode sweeps ``u^i <- max(candidate^i, max_{j != i}(u^j - g_ij))``.

    Returns the projected values and the number of sweeps, counting the final
    sweep that confirmed nothing moved.
    """
    m = candidate.shape[0]
    u = candidate.copy()
    for sweep in range(1, max_sweeps + 1):
        changed = False
        for i in range(m):
            obst = np.full(u.shape[1:], -np.inf)
            for j in range(m):
                if j != i:
                    np.maximum(obst, u[j] - costs[i, j], out=obst)
            new = np.maximum(candidate[i], obst)
            if np.max(np.abs(new - u[i])) > tol:
                changed = True
            u[i] = new
        if not changed:
            return u, sweep
    raise ObstacleSweepError(f"obstacle sweeps did not settle within {max_sweeps} sweeps")


def _candidate(ops: GridOperators, next_level: np.ndarray, q_level: np.ndarray, n: int) -> np.ndarray:
    problem, grid = ops.problem, ops.grid
    dt = grid.dt
    t = grid.time(n)
    X = grid.points
    Y = np.moveaxis(next_level, 0, -1)
    out = np.empty_like(next_level)
    for i in range(problem.m):
        u = next_level[i]
        z = ops.z_argument(u, n)
        f = problem.driver_at(i, t, X, Y, z, q_level[i])
        out[i] = u + dt * (ops.local(u, n) + ops.jump_K(u) + f)
        if not np.all(np.isfinite(out[i])):
            node = tuple(int(c) for c in np.argwhere(~np.isfinite(out[i]))[0])
            raise NonFiniteValueError(i, n, node)
    return out


def step_backward(ops: GridOperators, next_level: np.ndarray, q_level: np.ndarray, n: int,
                  sweep_tol: float | None = None):
    """One explicit backward step from level ``n + 1`` to level ``n``.

    Returns ``(values, increments, switch_target, sweeps)`` for level ``n``.
    """
    m = ops.problem.m
    cand = _candidate(ops, next_level, q_level, n)
    tol = sweep_tol if sweep_tol is not None else 1e-12 * (1.0 + float(np.max(np.abs(cand))))
    costs = cost_level(ops, n)
    values, sweeps = project_obstacles(cand, costs, tol, m + 2)
    increments = values - cand
    obst, target = obstacle(values, costs)
    target = np.where(increments > 0, target, -1).astype(np.int16)
    return values, increments, target, sweeps


def backward_solve(ops: GridOperators, q_at: Callable[[int, np.ndarray], np.ndarray],
                   sweep_tol: float | None = None, warn: bool = True):
    """Generic backward sweep; ``q_at(n, next_level)`` supplies the jump argument at level ``n``."""
    problem, grid = ops.problem, ops.grid
    m = problem.m
    values = np.empty((m, grid.n_t + 1, *grid.nodes))
    refl = ReflectionField.zeros(m, grid)
    for i in range(m):
        values[i, grid.n_t] = problem.terminal_at(i, grid.points)
    hist = Counter()
    for n in range(grid.n_t - 1, -1, -1):
        nxt = values[:, n + 1]
        level, inc, target, sweeps = step_backward(ops, nxt, q_at(n, nxt), n, sweep_tol)
        values[:, n] = level
        refl.increments[:, n] = inc
        refl.switch_target[:, n] = target
        hist[sweeps] += 1
    cfl = ops.cfl_indicator()
    if warn and cfl > 1.0:
        warnings.warn(f"CFL indicator {cfl:.3g} exceeds 1; the explicit scheme may be unstable", CFLWarning,
                      stacklevel=3)
    diag = SolveDiagnostics(cfl=cfl, clamp=ops.clamp_diagnostics(), sweep_histogram=hist)
    return ValueField(values, grid), refl, diag


def solve_frozen(problem: SwitchingProblem, grid: Grid, q: FrozenJumpField | None = None,
                 ops: GridOperators | None = None, sweep_tol: float | None = None):
    """Solve one stage with the jump argument of every driver frozen to ``q``.

    Returns ``(ValueField, ReflectionField, SolveDiagnostics)``.
    """
    ops = ops if ops is not None else GridOperators(problem, grid)
    if q is None:
        q = FrozenJumpField.zeros(problem.m, grid)
    expected = (problem.m, grid.n_t + 1, *grid.nodes)
    if q.q.shape != expected:
        raise ValueError(f"frozen jump field has shape {q.q.shape}, expected {expected}")
    return backward_solve(ops, lambda n, nxt: q.q[:, n], sweep_tol)


def obstacle_residuals(problem: SwitchingProblem, fld: ValueField, refl: ReflectionField,
                       ops: GridOperators | None = None) -> dict:
    """Feasibility and complementarity measures over every solved level.

    ``scale`` is ``1 + max |u|``; the acceptance bounds are stated relative to it.
    """
    grid = fld.grid
    ops = ops if ops is not None else GridOperators(problem, grid)
    scale = 1.0 + float(np.max(np.abs(fld.values)))
    worst_gap = 0.0
    worst_product = 0.0
    for n in range(grid.n_t):
        level = fld.values[:, n]
        obst, _ = obstacle(level, cost_level(ops, n))
        gap = obst - level
        worst_gap = max(worst_gap, float(gap.max()))
        worst_product = max(worst_product, float(np.max(np.abs((level - obst) * refl.increments[:, n]))))
    return {
        "scale": scale,
        "max_infeasibility": worst_gap,
        "max_complementarity": worst_product,
        "min_increment": float(refl.increments.min()),
    }
