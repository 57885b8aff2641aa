"""Switching-problem definition and sampled checks of its standing assumptions.

Assumptions are falsified by sampling, never proved: a ``pass`` means no
sampled point violated the inequality, and properties that sampling cannot
falsify (continuity) are reported as ``unchecked``.
"""

from __future__ import annotations

import dataclasses
import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .expr import Expr, parse, variable_names
from .measure import FiniteLevyMeasure

PASS, FAIL, UNCHECKED = "pass", "fail", "unchecked"


def _full(value, shape) -> np.ndarray:
    return np.array(np.broadcast_to(np.asarray(value, dtype=float), shape), dtype=float)


@dataclass(frozen=True)
class SwitchingProblem:
    """All coefficients of an m-mode switching problem under jump-diffusion.

    Modes are 0-based in the Python API; reports and problem files use the
    1-based numbering of the expression variables (``y1``, ``h1``, ``g12``...).
    """

    m: int
    k: int
    d: int
    l: int
    T: float
    drift: tuple[Expr, ...]
    sigma: tuple[tuple[Expr, ...], ...]
    beta: tuple[Expr, ...]
    gamma: tuple[Expr, ...]
    drivers: tuple[Expr, ...]
    costs: tuple[tuple[Expr, ...], ...]
    terminal: tuple[Expr, ...]
    levy: FiniteLevyMeasure
    p: int = 1
    box: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self):
        if self.m < 2:
            raise ValueError("a switching problem needs at least two modes")
        if min(self.k, self.d, self.l) < 1:
            raise ValueError("dimensions k, d, l must be positive")
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ValueError("horizon T must be positive and finite")
        if self.p < 1 or int(self.p) != self.p:
            raise ValueError("growth exponent p must be a positive integer")
        if len(self.drift) != self.k or len(self.beta) != self.k:
            raise ValueError("drift and beta need k components")
        if len(self.sigma) != self.k or any(len(row) != self.d for row in self.sigma):
            raise ValueError("sigma must be k x d")
        for name, seq in (("gamma", self.gamma), ("drivers", self.drivers), ("terminal", self.terminal)):
            if len(seq) != self.m:
                raise ValueError(f"{name} needs one entry per mode")
        if len(self.costs) != self.m or any(len(row) != self.m for row in self.costs):
            raise ValueError("costs must be m x m")
        for i in range(self.m):
            g = self.costs[i][i]
            if not (g.is_constant and g.eval({}) == 0.0):
                raise ValueError(f"diagonal cost g{i + 1}{i + 1} must be identically 0")
        if self.levy.dim != self.l:
            raise ValueError("Levy marks must have dimension l")
        if self.box is not None:
            if len(self.box) != self.k:
                raise ValueError("box needs one (lower, upper) pair per state dimension")
            for lo, hi in self.box:
                if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
                    raise ValueError("box bounds must be finite with lower < upper")

    # ------------------------------------------------------------ builders

    @classmethod
    def build(
        cls,
        *,
        m: int,
        k: int = 1,
        d: int = 1,
        l: int = 1,
        T: float = 1.0,
        drift=None,
        sigma=None,
        beta=None,
        gamma=None,
        drivers=None,
        costs: Mapping[tuple[int, int], object] | None = None,
        g_default=None,
        terminal=None,
        levy: FiniteLevyMeasure | None = None,
        p: int = 1,
        box=None,
    ) -> "SwitchingProblem":
        """Build a problem from expression strings (or numbers).

        ``costs`` maps 1-based ordered pairs ``(i, j)`` to expressions; pairs
        left out fall back to ``g_default``. A scalar or single string for
        ``gamma``, ``drivers`` or ``terminal`` is shared by every mode.
        """
        tx = variable_names(t=True, k=k)
        xe = variable_names(k=k, l=l)
        drv = variable_names(t=True, k=k, m=m, d=d, q=True)
        xs = variable_names(k=k)

        def many(values, n, allowed, what, default=None):
            if values is None:
                if default is None:
                    raise ValueError(f"{what} is required")
                values = [default] * n
            elif isinstance(values, (str, int, float, Expr)):
                values = [values] * n
            values = list(values)
            if len(values) != n:
                raise ValueError(f"{what} needs {n} entries, got {len(values)}")
            return tuple(_as_expr(v, allowed) for v in values)

        drift_e = many(drift, k, tx, "drift", 0)
        if sigma is None:
            sigma = [[0] * d for _ in range(k)]
        elif isinstance(sigma, (str, int, float, Expr)):
            sigma = [[sigma] * d for _ in range(k)]
        sigma_e = tuple(many(row, d, tx, "sigma row") for row in sigma)
        beta_e = many(beta, k, xe, "beta", 0)
        gamma_e = many(gamma, m, xe, "gamma", 0)
        drivers_e = many(drivers, m, drv, "drivers", 0)
        terminal_e = many(terminal, m, xs, "terminal")
        costs = dict(costs or {})
        rows = []
        for i in range(1, m + 1):
            row = []
            for j in range(1, m + 1):
                if i == j:
                    if (i, j) in costs and _as_expr(costs[(i, j)], tx) != _as_expr(0, tx):
                        raise ValueError(f"diagonal cost g{i}{j} must be 0")
                    row.append(_as_expr(0, tx))
                elif (i, j) in costs:
                    row.append(_as_expr(costs[(i, j)], tx))
                elif g_default is not None:
                    row.append(_as_expr(g_default, tx))
                else:
                    raise ValueError(f"missing switching cost g{i}{j} and no g_default")
            rows.append(tuple(row))
        if levy is None:
            levy = FiniteLevyMeasure.empty(l)
        if box is not None:
            box = tuple((float(lo), float(hi)) for lo, hi in box)
        return cls(m, k, d, l, float(T), drift_e, sigma_e, beta_e, gamma_e, drivers_e,
                   tuple(rows), terminal_e, levy, int(p), box)

    # ------------------------------------------------------------ evaluation

    def _xbind(self, X: np.ndarray) -> dict:
        return {f"x{j + 1}": X[..., j] for j in range(self.k)}

    @staticmethod
    def _ebind(e) -> dict:
        e = np.atleast_1d(np.asarray(e, dtype=float))
        return {f"e{j + 1}": float(e[j]) for j in range(e.shape[-1])}

    def drift_at(self, t, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        env = {"t": t, **self._xbind(X)}
        shape = np.broadcast_shapes(np.shape(t), X.shape[:-1])
        return np.stack([_full(b.eval(env), shape) for b in self.drift], axis=-1)

    def sigma_at(self, t, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        env = {"t": t, **self._xbind(X)}
        shape = np.broadcast_shapes(np.shape(t), X.shape[:-1])
        rows = [np.stack([_full(s.eval(env), shape) for s in row], axis=-1) for row in self.sigma]
        return np.stack(rows, axis=-2)

    def beta_at(self, X, e) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        env = {**self._xbind(X), **self._ebind(e)}
        return np.stack([_full(b.eval(env), X.shape[:-1]) for b in self.beta], axis=-1)

    def gamma_at(self, i: int, X, e) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        env = {**self._xbind(X), **self._ebind(e)}
        return _full(self.gamma[i].eval(env), X.shape[:-1])

    def driver_at(self, i: int, t, X, Y, Z, q) -> np.ndarray:
        """Evaluate driver ``i`` with ``Y`` of shape (..., m) and ``Z`` of shape (..., d)."""
        X = np.asarray(X, dtype=float)
        Y = np.asarray(Y, dtype=float)
        Z = np.asarray(Z, dtype=float)
        env = {"t": t, "q": q, **self._xbind(X)}
        env.update({f"y{j + 1}": Y[..., j] for j in range(self.m)})
        env.update({f"z{j + 1}": Z[..., j] for j in range(self.d)})
        shape = np.broadcast_shapes(np.shape(t), X.shape[:-1], Y.shape[:-1], Z.shape[:-1], np.shape(q))
        return _full(self.drivers[i].eval(env), shape)

    def state_driver_at(self, i: int, t, X) -> np.ndarray:
        """Driver value for state-only drivers ``f_i(t, x)``."""
        if not self.state_only_drivers:
            raise UnsupportedDriverError("driver depends on (y, z, q)")
        X = np.asarray(X, dtype=float)
        env = {"t": t, **self._xbind(X)}
        shape = np.broadcast_shapes(np.shape(t), X.shape[:-1])
        return _full(self.drivers[i].eval(env), shape)

    def cost_at(self, i: int, j: int, t, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        env = {"t": t, **self._xbind(X)}
        shape = np.broadcast_shapes(np.shape(t), X.shape[:-1])
        return _full(self.costs[i][j].eval(env), shape)

    def costs_at(self, t, X) -> np.ndarray:
        """All costs as an array of shape (m, m, ...)."""
        return np.stack([np.stack([self.cost_at(i, j, t, X) for j in range(self.m)]) for i in range(self.m)])

    def terminal_at(self, i: int, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return _full(self.terminal[i].eval(self._xbind(X)), X.shape[:-1])

    # ------------------------------------------------------------ structure

    @property
    def state_only_drivers(self) -> bool:
        coupled = variable_names(m=self.m, d=self.d, q=True)
        return not any(f.depends_on(coupled) for f in self.drivers)

    @property
    def time_dependent_dynamics(self) -> bool:
        return any(e.depends_on({"t"}) for e in self.drift + tuple(itertools.chain(*self.sigma)))

    def with_costs_scaled(self, factor: float) -> "SwitchingProblem":
        """Copy with every off-diagonal switching cost multiplied by ``factor``."""
        tx = variable_names(t=True, k=self.k)
        rows = tuple(
            tuple(g if i == j else parse(f"({float(factor)!r}) * ({g})", tx) for j, g in enumerate(row))
            for i, row in enumerate(self.costs)
        )
        return _replace(self, costs=rows)

    def with_terminal(self, terminal: Sequence) -> "SwitchingProblem":
        xs = variable_names(k=self.k)
        return _replace(self, terminal=tuple(_as_expr(h, xs) for h in terminal))


class UnsupportedDriverError(ValueError):
    pass


def _replace(problem, **changes):
    return dataclasses.replace(problem, **changes)


def _as_expr(value, allowed) -> Expr:
    if isinstance(value, Expr):
        bad = value.variables - set(allowed)
        if bad:
            raise ValueError(f"expression uses undeclared variables {sorted(bad)}")
        return value
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return parse(repr(float(value)), allowed)
    return parse(str(value), allowed)


# ---------------------------------------------------------------- reports


@dataclass
class AssumptionCheck:
    name: str
    status: str
    witnesses: list = field(default_factory=list)
    detail: str = ""

    def __post_init__(self):
        if self.status not in (PASS, FAIL, UNCHECKED):
            raise ValueError(f"bad status {self.status!r}")
        if self.status == FAIL and not self.witnesses:
            raise ValueError(f"failed check {self.name} must carry a witness")


@dataclass
class ValidationReport:
    checks: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)

    def add(self, check: AssumptionCheck):
        self.checks[check.name] = check
        return check

    def merge(self, other: "ValidationReport") -> "ValidationReport":
        out = ValidationReport(dict(self.checks), dict(self.constants))
        out.checks.update(other.checks)
        out.constants.update(other.constants)
        return out

    def status(self, name: str) -> str:
        return self.checks[name].status

    @property
    def passed(self) -> bool:
        return all(c.status != FAIL for c in self.checks.values())

    @property
    def failures(self) -> list:
        return [c for c in self.checks.values() if c.status == FAIL]

    @property
    def monotone_case(self) -> bool:
        """True when the sampled (H4) checks both passed."""
        return all(self.checks.get(n) is not None and self.checks[n].status == PASS for n in ("H4-i", "H4-ii"))

    def to_text(self) -> str:
        lines = [f"overall: {'pass' if self.passed else 'fail'}"]
        for name in sorted(self.checks):
            c = self.checks[name]
            lines.append(f"status {name}: {c.status}")
            if c.detail:
                lines.append(f"detail {name}: {c.detail}")
            for w in c.witnesses:
                lines.append(f"witness {name}: {_fmt_witness(w)}")
        for name in sorted(self.constants):
            lines.append(f"constant {name}: {self.constants[name]!r}")
        return "\n".join(lines) + "\n"


def _fmt_witness(w: Mapping) -> str:
    parts = []
    for key, value in w.items():
        if isinstance(value, np.ndarray):
            value = [float(v) for v in value]
        elif isinstance(value, (np.floating, np.integer)):
            value = value.item()
        parts.append(f"{key}={value!r}")
    return " ".join(parts)


# ---------------------------------------------------------------- sampling


def _as_points(problem: SwitchingProblem, points) -> tuple[np.ndarray, np.ndarray]:
    """Normalise sample points to ``(ts, xs)`` arrays of shapes (S,) and (S, k)."""
    if isinstance(points, tuple) and len(points) == 2 and isinstance(points[0], np.ndarray):
        ts, xs = points
        return np.asarray(ts, dtype=float).reshape(-1), np.asarray(xs, dtype=float).reshape(-1, problem.k)
    ts, xs = [], []
    for t, x in points:
        ts.append(float(t))
        xs.append(np.atleast_1d(np.asarray(x, dtype=float)))
    if not ts:
        raise ValueError("sample points must be non-empty")
    return np.asarray(ts), np.vstack(xs).reshape(-1, problem.k)


def _as_xs(problem: SwitchingProblem, xs) -> np.ndarray:
    xs = np.asarray(xs, dtype=float)
    if xs.size == 0:
        raise ValueError("sample points must be non-empty")
    return xs.reshape(-1, problem.k)


def _default_box(problem: SwitchingProblem):
    return problem.box if problem.box is not None else tuple((-1.0, 1.0) for _ in range(problem.k))


def sample_cloud(problem: SwitchingProblem, n_cheb: int = 5, n_random: int = 64, seed: int = 0):
    """Chebyshev-Lobatto tensor points in [0, T] x box plus seeded uniform points.

    Returns ``(ts, xs)`` with shapes (S,) and (S, k).
    """
    box = _default_box(problem)
    cheb = 0.5 * (1.0 - np.cos(np.pi * np.arange(n_cheb) / max(n_cheb - 1, 1)))
    axes = [cheb * problem.T] + [lo + cheb * (hi - lo) for lo, hi in box]
    grid = np.array(list(itertools.product(*axes)), dtype=float)
    rng = np.random.default_rng(seed)
    lows = np.array([0.0] + [lo for lo, _ in box])
    highs = np.array([problem.T] + [hi for _, hi in box])
    rand = lows + rng.random((n_random, problem.k + 1)) * (highs - lows)
    pts = np.vstack([grid, rand])
    return pts[:, 0].copy(), pts[:, 1:].copy()


# ---------------------------------------------------------------- H2


def simple_cycles(m: int) -> list[tuple[int, ...]]:
    """Directed simple cycles of length 2..m, one representative per rotation.

    Each cycle starts at its smallest mode and is closed, e.g. ``(0, 1, 0)``.
    """
    out = []
    for r in range(2, m + 1):
        for subset in itertools.combinations(range(m), r):
            head, rest = subset[0], subset[1:]
            for perm in itertools.permutations(rest):
                out.append((head, *perm, head))
    return out


def check_no_free_loop(problem: SwitchingProblem, sample_points) -> ValidationReport:
    ts, xs = _as_points(problem, sample_points)
    G = problem.costs_at(ts, xs)  # (m, m, S)
    report = ValidationReport()
    witnesses = []
    for cycle in simple_cycles(problem.m):
        total = sum(G[a, b] for a, b in zip(cycle[:-1], cycle[1:]))
        bad = np.flatnonzero(~(total > 0))
        if bad.size:
            s = int(bad[0])
            witnesses.append({"cycle": tuple(c + 1 for c in cycle), "t": ts[s], "x": xs[s], "cost": float(total[s])})
    n_cycles = len(simple_cycles(problem.m))
    report.add(AssumptionCheck("H2-no-free-loop", FAIL if witnesses else PASS, witnesses,
                               f"{n_cycles} simple cycles at {ts.size} points"))
    neg = []
    for i in range(problem.m):
        for j in range(problem.m):
            if i == j:
                continue
            bad = np.flatnonzero(G[i, j] < 0)
            if bad.size:
                s = int(bad[0])
                neg.append({"pair": (i + 1, j + 1), "t": ts[s], "x": xs[s], "cost": float(G[i, j, s])})
    report.add(AssumptionCheck("H2-nonnegative", FAIL if neg else PASS, neg))
    return report


# ---------------------------------------------------------------- H3


def check_consistency(problem: SwitchingProblem, sample_xs) -> ValidationReport:
    xs = _as_xs(problem, sample_xs)
    H = np.stack([problem.terminal_at(i, xs) for i in range(problem.m)])
    G = problem.costs_at(problem.T, xs)
    witnesses = []
    for i in range(problem.m):
        others = [j for j in range(problem.m) if j != i]
        cand = np.stack([H[j] - G[i, j] for j in others])
        best = cand.max(axis=0)
        bad = np.flatnonzero(H[i] < best)
        if bad.size:
            s = int(bad[0])
            j = others[int(np.argmax(cand[:, s]))]
            witnesses.append({"mode": i + 1, "via": j + 1, "x": xs[s], "h": float(H[i, s]), "bound": float(best[s])})
    report = ValidationReport()
    report.add(AssumptionCheck("H3-consistency", FAIL if witnesses else PASS, witnesses))
    return report


# ---------------------------------------------------------------- H1-ii


def _driver_slots(problem: SwitchingProblem):
    return problem.m + problem.d + 1


def _eval_driver_packed(problem, i, ts, xs, V):
    m, d = problem.m, problem.d
    return problem.driver_at(i, ts, xs, V[:, :m], V[:, m:m + d], V[:, m + d])


def estimate_lipschitz(problem: SwitchingProblem, n_samples: int = 256, seed: int = 0, spread: float = 5.0) -> float:
    """Sampled lower bound on the drivers' Lipschitz constant in (y, z, q).

    Slopes come from single-coordinate perturbations and from fully random
    pairs, using the norm ``|dy| + |dz| + |dq|``.
    """
    if n_samples < 2:
        raise ValueError("estimate_lipschitz needs at least two samples")
    rng = np.random.default_rng(seed)
    box = _default_box(problem)
    ts = rng.random(n_samples) * problem.T
    xs = np.stack([lo + rng.random(n_samples) * (hi - lo) for lo, hi in box], axis=-1)
    n_slots = _driver_slots(problem)
    V = rng.uniform(-spread, spread, (n_samples, n_slots))
    m, d = problem.m, problem.d

    def norm(D):
        return np.linalg.norm(D[:, :m], axis=1) + np.linalg.norm(D[:, m:m + d], axis=1) + np.abs(D[:, m + d])

    best = 0.0
    any_pair = False
    for i in range(problem.m):
        f0 = _eval_driver_packed(problem, i, ts, xs, V)
        for c in range(n_slots):
            step = rng.uniform(0.01, 1.0, n_samples) * rng.choice([-1.0, 1.0], n_samples)
            W = V.copy()
            W[:, c] += step
            slope = np.abs(_eval_driver_packed(problem, i, ts, xs, W) - f0) / np.abs(step)
            best = max(best, float(slope.max()))
            any_pair = True
        W = rng.uniform(-spread, spread, (n_samples, n_slots))
        den = norm(W - V)
        ok = den > 0
        if np.any(ok):
            slope = np.abs(_eval_driver_packed(problem, i, ts, xs, W) - f0)[ok] / den[ok]
            best = max(best, float(slope.max()))
            any_pair = True
    if not any_pair:
        raise ValueError("degenerate sample: all pairs identical")
    return best


# ---------------------------------------------------------------- growth / jump bounds


def _grows_in_x(radii: np.ndarray, values: np.ndarray) -> tuple[bool, int]:
    """Detect a sampled sup that keeps growing with |x|.

    Compares the sup over the far shell with the sup over points within a
    quarter of the maximal ``1 + |x|``; growth faster than the square root of
    the radius ratio counts as unbounded.
    """
    r = 1.0 + radii
    r_max = float(r.max())
    inner = r <= r_max / 4.0
    if not np.any(inner) or np.all(inner):
        return False, -1
    sup_in = float(values[inner].max())
    sup_out = float(values[~inner].max())
    if sup_in <= 0.0:
        return False, -1
    ratio = r_max / float(r[inner].max())
    if sup_out / sup_in > math.sqrt(ratio):
        idx = np.flatnonzero(~inner)
        return True, int(idx[np.argmax(values[~inner])])
    return False, -1


def check_growth_and_jump_bounds(problem: SwitchingProblem, sample_points) -> ValidationReport:
    ts, xs = _as_points(problem, sample_points)
    radii = np.linalg.norm(xs, axis=1)
    report = ValidationReport()

    def fit(name, per_sample, what):
        const = float(per_sample.max()) if per_sample.size else 0.0
        report.constants[name] = const
        if not np.isfinite(const):
            return AssumptionCheck(what, FAIL, [{"x": xs[int(np.argmax(~np.isfinite(per_sample)))]}], "non-finite bound")
        grows, s = _grows_in_x(radii, per_sample)
        if grows:
            return AssumptionCheck(what, FAIL, [{"t": ts[s], "x": xs[s], "ratio": float(per_sample[s])}],
                                   f"sampled bound grows with |x| (fitted {const!r})")
        return AssumptionCheck(what, PASS, [], f"fitted constant {const!r}")

    marks = problem.levy.marks
    beta_ratio = np.zeros(ts.size)
    gamma_ratio = np.zeros(ts.size)
    for a in range(problem.levy.n_atoms):
        e = marks[a]
        scale = min(1.0, float(np.linalg.norm(e)))
        beta_ratio = np.maximum(beta_ratio, np.linalg.norm(problem.beta_at(xs, e), axis=-1) / scale)
        for i in range(problem.m):
            gamma_ratio = np.maximum(gamma_ratio, np.abs(problem.gamma_at(i, xs, e)) / scale)
    report.add(fit("c_beta", beta_ratio, "jump-beta-bound"))
    report.add(fit("C_gamma", gamma_ratio, "jump-gamma-bound"))

    poly = 1.0 + radii ** problem.p
    zeros_y = np.zeros((ts.size, problem.m))
    zeros_z = np.zeros((ts.size, problem.d))
    f0 = np.zeros(ts.size)
    h = np.zeros(ts.size)
    g = np.zeros(ts.size)
    for i in range(problem.m):
        f0 = np.maximum(f0, np.abs(problem.driver_at(i, ts, xs, zeros_y, zeros_z, np.zeros(ts.size))))
        h = np.maximum(h, np.abs(problem.terminal_at(i, xs)))
        for j in range(problem.m):
            g = np.maximum(g, np.abs(problem.cost_at(i, j, ts, xs)))
    report.add(fit("C_driver_growth", f0 / poly, "H1-iii-growth"))
    report.add(fit("C_terminal_growth", h / poly, "H3-growth"))
    report.add(fit("C_cost_growth", g / poly, "H2-growth"))
    return report


# ---------------------------------------------------------------- H4 / H1-iv


def check_monotone_case(problem: SwitchingProblem, sample_points, seed: int = 0, spread: float = 5.0) -> ValidationReport:
    ts, xs = _as_points(problem, sample_points)
    rng = np.random.default_rng(seed)
    S = ts.size
    m, d = problem.m, problem.d
    report = ValidationReport()

    neg = []
    for i in range(problem.m):
        for a in range(problem.levy.n_atoms):
            e = problem.levy.marks[a]
            vals = problem.gamma_at(i, xs, e)
            bad = np.flatnonzero(vals < 0)
            if bad.size:
                s = int(bad[0])
                neg.append({"mode": i + 1, "x": xs[s], "e": e, "gamma": float(vals[s])})
                break
    report.add(AssumptionCheck("H4-i", FAIL if neg else PASS, neg))

    V = rng.uniform(-spread, spread, (S, _driver_slots(problem)))
    step = rng.uniform(0.01, 1.0, S)

    def monotone_in(slot, modes_for):
        wits = []
        for i in range(problem.m):
            for c in modes_for(i):
                lo = V.copy()
                hi = V.copy()
                hi[:, c] += step
                f_lo = _eval_driver_packed(problem, i, ts, xs, lo)
                f_hi = _eval_driver_packed(problem, i, ts, xs, hi)
                tol = 1e-12 * (1.0 + np.abs(f_lo))
                bad = np.flatnonzero(f_hi < f_lo - tol)
                if bad.size:
                    s = int(bad[0])
                    wits.append({"mode": i + 1, "slot": slot(c), "t": ts[s], "x": xs[s],
                                 "low": float(lo[s, c]), "high": float(hi[s, c]),
                                 "f_low": float(f_lo[s]), "f_high": float(f_hi[s])})
        return wits

    q_wits = monotone_in(lambda c: "q", lambda i: [m + d])
    report.add(AssumptionCheck("H4-ii", FAIL if q_wits else PASS, q_wits))
    y_wits = monotone_in(lambda c: f"y{c + 1}", lambda i: [j for j in range(m) if j != i])
    report.add(AssumptionCheck("H1-iv", FAIL if y_wits else PASS, y_wits))
    return report


def validate(problem: SwitchingProblem, n_cheb: int = 5, n_random: int = 64, seed: int = 0,
             lipschitz_samples: int = 256) -> ValidationReport:
    """Run every sampled check on the problem's box and collect one report."""
    pts = sample_cloud(problem, n_cheb, n_random, seed)
    report = ValidationReport()
    report.add(AssumptionCheck("H1-i-continuity", UNCHECKED, [], "not falsifiable by sampling"))
    report = report.merge(check_no_free_loop(problem, pts))
    report = report.merge(check_consistency(problem, pts[1]))
    report = report.merge(check_growth_and_jump_bounds(problem, pts))
    report = report.merge(check_monotone_case(problem, pts, seed))
    report.constants["C_hat"] = estimate_lipschitz(problem, lipschitz_samples, seed)
    report.constants["levy_total_mass"] = problem.levy.total_mass()
    report.constants["levy_small_jump_moment"] = problem.levy.small_jump_moment()
    report.constants["sample_points"] = float(pts[0].size)
    return report

