"""Finite-difference and quadrature discretisation of the operators L, K and B_i.

Drift terms use first-order upwind differences, diffusion terms central second
differences (symmetric cross stencil for mixed derivatives). The non-local
operators are exact atom sums over multilinear interpolants of the field;
jump destinations outside the grid box are clamped onto its boundary and
counted.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .problem import SwitchingProblem


@dataclass(frozen=True)
class Grid:
    lower: tuple[float, ...]
    upper: tuple[float, ...]
    nodes: tuple[int, ...]
    n_t: int
    T: float

    def __post_init__(self):
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(float(v) for v in self.upper))
        object.__setattr__(self, "nodes", tuple(int(n) for n in self.nodes))
        if not (len(self.lower) == len(self.upper) == len(self.nodes)) or not self.nodes:
            raise ValueError("grid bounds and node counts must share one dimension")
        for lo, hi, n in zip(self.lower, self.upper, self.nodes):
            if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
                raise ValueError("grid bounds must be finite with lower < upper")
            if n < 3:
                raise ValueError("each dimension needs at least 3 nodes")
        if self.n_t < 1:
            raise ValueError("n_t must be positive")
        if not self.T > 0:
            raise ValueError("T must be positive")

    @classmethod
    def for_problem(cls, problem: SwitchingProblem, nodes, n_t: int, box=None) -> "Grid":
        box = box if box is not None else problem.box
        if box is None:
            raise ValueError("problem has no bounding box; pass one explicitly")
        if isinstance(nodes, int):
            nodes = (nodes,) * problem.k
        return cls(tuple(lo for lo, _ in box), tuple(hi for _, hi in box), tuple(nodes), n_t, problem.T)

    @property
    def k(self) -> int:
        return len(self.nodes)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.nodes

    @property
    def size(self) -> int:
        return int(np.prod(self.nodes))

    @property
    def h(self) -> tuple[float, ...]:
        return tuple((hi - lo) / (n - 1) for lo, hi, n in zip(self.lower, self.upper, self.nodes))

    @property
    def dt(self) -> float:
        return self.T / self.n_t

    @property
    def axes(self) -> list[np.ndarray]:
        return [np.linspace(lo, hi, n) for lo, hi, n in zip(self.lower, self.upper, self.nodes)]

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n_t + 1)

    def time(self, n: int) -> float:
        return self.T * n / self.n_t

    @cached_property
    def points(self) -> np.ndarray:
        """Node coordinates, shape ``(*nodes, k)``."""
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack(mesh, axis=-1)

    @cached_property
    def interior(self) -> np.ndarray:
        mask = np.ones(self.nodes, dtype=bool)
        for ax in range(self.k):
            mask[_sl(ax, 0, self.k)] = False
            mask[_sl(ax, -1, self.k)] = False
        return mask

    def describe(self) -> dict:
        return {
            "grid_lower": list(self.lower),
            "grid_upper": list(self.upper),
            "grid_nodes": list(self.nodes),
            "grid_h": list(self.h),
            "grid_nt": self.n_t,
            "grid_dt": self.dt,
        }


def _sl(axis: int, index, ndim: int):
    out = [slice(None)] * ndim
    out[axis] = index
    return tuple(out)


@dataclass
class ValueField:
    """Discrete values ``u^i(t_n, x)`` with shape ``(m, n_t + 1, *nodes)``."""

    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        expected = (self.grid.n_t + 1, *self.grid.nodes)
        if self.values.ndim != len(expected) + 1 or self.values.shape[1:] != expected:
            raise ValueError(f"field shape {self.values.shape} does not match grid {expected}")

    @classmethod
    def zeros(cls, m: int, grid: Grid) -> "ValueField":
        return cls(np.zeros((m, grid.n_t + 1, *grid.nodes)), grid)

    @property
    def m(self) -> int:
        return self.values.shape[0]

    def level(self, n: int) -> np.ndarray:
        return self.values[:, n]

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.values)))


def interpolation_matrix(grid: Grid, dest: np.ndarray) -> tuple[sp.csr_matrix, np.ndarray]:
    """Sparse multilinear interpolation from grid values to ``dest`` points.

    ``dest`` has shape ``(P, k)``. Points outside the box are clamped onto it;
    the returned boolean array marks which rows were clamped.
    """
    dest = np.asarray(dest, dtype=float).reshape(-1, grid.k)
    lo = np.asarray(grid.lower)
    hi = np.asarray(grid.upper)
    clamped = np.any((dest < lo) | (dest > hi), axis=1)
    dest = np.clip(dest, lo, hi)
    h = np.asarray(grid.h)
    nodes = np.asarray(grid.nodes)
    s = (dest - lo) / h
    base = np.clip(np.floor(s).astype(np.int64), 0, nodes - 2)
    frac = np.clip(s - base, 0.0, 1.0)
    rows, cols, vals = [], [], []
    P = dest.shape[0]
    r = np.arange(P)
    for bits in itertools.product((0, 1), repeat=grid.k):
        bits = np.asarray(bits)
        weight = np.prod(np.where(bits, frac, 1.0 - frac), axis=1)
        idx = np.ravel_multi_index(tuple((base + bits).T), grid.nodes)
        keep = weight != 0.0
        rows.append(r[keep])
        cols.append(idx[keep])
        vals.append(weight[keep])
    mat = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(P, grid.size))
    mat.sum_duplicates()
    return mat, clamped


def interpolate(grid: Grid, values: np.ndarray, points) -> np.ndarray:
    """Multilinear interpolation of one spatial array at arbitrary points."""
    pts = np.asarray(points, dtype=float).reshape(-1, grid.k)
    mat, _ = interpolation_matrix(grid, pts)
    return mat @ np.asarray(values, dtype=float).reshape(-1)


@dataclass
class GridOperators:
    """The operators L, K and B_i bound to one problem and one grid.

    Jump interpolation matrices depend only on ``x`` and the atoms, so they are
    assembled once. Local coefficients are cached per time level (or once if
    they do not depend on ``t``).
    """

    problem: SwitchingProblem
    grid: Grid
    _coeff_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.grid.k != self.problem.k:
            raise ValueError("grid dimension does not match the problem's state dimension")
        if abs(self.grid.T - self.problem.T) > 1e-12 * self.problem.T:
            raise ValueError("grid horizon does not match problem horizon")
        self._build_jumps()

    # ------------------------------------------------------------ assembly

    def _build_jumps(self):
        grid, problem = self.grid, self.problem
        X = grid.points.reshape(-1, grid.k)
        N = grid.size
        eye = sp.identity(N, format="csr")
        interior = grid.interior.reshape(-1)
        self.K_matrix = sp.csr_matrix((N, N))
        self.B_matrices = [sp.csr_matrix((N, N)) for _ in range(problem.m)]
        self.beta_mean = np.zeros((N, grid.k))
        self.clamp_total = 0
        self.clamp_interior = 0
        self.clamp_per_atom = []
        for mark, weight in problem.levy:
            beta = problem.beta_at(X, mark)
            interp, clamped = interpolation_matrix(grid, X + beta)
            jump = interp - eye
            self.K_matrix = self.K_matrix + weight * jump
            self.beta_mean += weight * beta
            for i in range(problem.m):
                g = problem.gamma_at(i, X, mark)
                self.B_matrices[i] = self.B_matrices[i] + sp.diags(weight * g) @ jump
            self.clamp_total += int(clamped.sum())
            self.clamp_interior += int((clamped & interior).sum())
            self.clamp_per_atom.append(int(clamped.sum()))
        self.K_matrix = self.K_matrix.tocsr()
        self.B_matrices = [B.tocsr() for B in self.B_matrices]

    def coefficients(self, n: int):
        """Drift ``b`` with shape (*nodes, k) and ``a = sigma sigma^T / 2`` with shape (*nodes, k, k)."""
        key = n if self.problem.time_dependent_dynamics else 0
        if key not in self._coeff_cache:
            t = self.grid.time(n)
            X = self.grid.points
            b = self.problem.drift_at(t, X)
            sigma = self.problem.sigma_at(t, X)
            a = 0.5 * np.einsum("...ir,...jr->...ij", sigma, sigma)
            self._coeff_cache[key] = (b, sigma, a)
        return self._coeff_cache[key]

    # ------------------------------------------------------------ stencils

    def gradient_central(self, u: np.ndarray) -> np.ndarray:
        """Central differences inside, one-sided first order on the boundary; shape (k, *nodes)."""
        h = self.grid.h
        return np.stack([np.gradient(u, h[ax], axis=ax, edge_order=1) for ax in range(self.grid.k)])

    def gradient_upwind(self, u: np.ndarray, b: np.ndarray) -> np.ndarray:
        h = self.grid.h
        k = self.grid.k
        out = np.empty((k, *u.shape))
        for ax in range(k):
            diff = np.diff(u, axis=ax) / h[ax]
            fwd = np.concatenate([diff, diff[_sl(ax, slice(-1, None), k)]], axis=ax)
            bwd = np.concatenate([diff[_sl(ax, slice(0, 1), k)], diff], axis=ax)
            out[ax] = np.where(b[..., ax] > 0, fwd, bwd)
            # boundary rows are one-sided regardless of the drift sign
            out[ax][_sl(ax, 0, k)] = diff[_sl(ax, 0, k)]
            out[ax][_sl(ax, -1, k)] = diff[_sl(ax, -1, k)]
        return out

    def second_derivative(self, u: np.ndarray, ax: int) -> np.ndarray:
        k = self.grid.k
        h = self.grid.h[ax]
        out = np.zeros_like(u)
        out[_sl(ax, slice(1, -1), k)] = (
            u[_sl(ax, slice(2, None), k)] - 2.0 * u[_sl(ax, slice(1, -1), k)] + u[_sl(ax, slice(None, -2), k)]
        ) / (h * h)
        return out

    def mixed_derivative(self, u: np.ndarray, ax1: int, ax2: int) -> np.ndarray:
        k = self.grid.k
        h1, h2 = self.grid.h[ax1], self.grid.h[ax2]
        up, down = slice(2, None), slice(None, -2)

        def shifted(s1, s2):
            idx = [slice(None)] * k
            idx[ax1], idx[ax2] = s1, s2
            return u[tuple(idx)]

        inner = [slice(None)] * k
        inner[ax1] = inner[ax2] = slice(1, -1)
        out = np.zeros_like(u)
        out[tuple(inner)] = (
            shifted(up, up) - shifted(up, down) - shifted(down, up) + shifted(down, down)
        ) / (4.0 * h1 * h2)
        return out

    # ------------------------------------------------------------ operators on spatial arrays

    def local(self, u: np.ndarray, n: int) -> np.ndarray:
        b, _, a = self.coefficients(n)
        k = self.grid.k
        grad = self.gradient_upwind(u, b)
        out = np.zeros_like(u)
        for ax in range(k):
            out += b[..., ax] * grad[ax]
            out += a[..., ax, ax] * self.second_derivative(u, ax)
        for ax1 in range(k):
            for ax2 in range(ax1 + 1, k):
                out += 2.0 * a[..., ax1, ax2] * self.mixed_derivative(u, ax1, ax2)
        return out

    def jump_K(self, u: np.ndarray) -> np.ndarray:
        flat = u.reshape(-1)
        out = self.K_matrix @ flat
        if self.problem.levy.n_atoms:
            grad = self.gradient_central(u).reshape(self.grid.k, -1)
            out = out - np.einsum("nk,kn->n", self.beta_mean, grad)
        return out.reshape(u.shape)

    def jump_B(self, i: int, u: np.ndarray) -> np.ndarray:
        return (self.B_matrices[i] @ u.reshape(-1)).reshape(u.shape)

    def z_argument(self, u: np.ndarray, n: int) -> np.ndarray:
        """``sigma^T grad u`` with shape (*nodes, d)."""
        _, sigma, _ = self.coefficients(n)
        grad = self.gradient_central(u)
        return np.einsum("...kr,k...->...r", sigma, grad)

    # ------------------------------------------------------------ field-level API

    def apply_local(self, fld: ValueField, i: int, n: int) -> np.ndarray:
        return self.local(fld.values[i, n], n)

    def apply_K(self, fld: ValueField, i: int, n: int) -> np.ndarray:
        return self.jump_K(fld.values[i, n])

    def apply_B(self, fld: ValueField, i: int, n: int) -> np.ndarray:
        return self.jump_B(i, fld.values[i, n])

    def cfl_indicator(self) -> float:
        """``dt * max_x (sum |b_j| / h_j + sum (sigma sigma^T)_jj / h_j^2) + dt * total mass``."""
        h = np.asarray(self.grid.h)
        levels = range(self.grid.n_t + 1) if self.problem.time_dependent_dynamics else [0]
        worst = 0.0
        for n in levels:
            b, _, a = self.coefficients(n)
            rate = (np.abs(b) / h).sum(axis=-1) + (2.0 * np.diagonal(a, axis1=-2, axis2=-1) / h**2).sum(axis=-1)
            worst = max(worst, float(rate.max()))
        return self.grid.dt * (worst + self.problem.levy.total_mass())

    def clamp_diagnostics(self) -> dict:
        return {
            "clamp_total": self.clamp_total,
            "clamp_interior": self.clamp_interior,
            "clamp_per_atom": list(self.clamp_per_atom),
        }


def apply_local(ops: GridOperators, fld: ValueField, i: int, n: int) -> np.ndarray:
    return ops.apply_local(fld, i, n)


def apply_K(ops: GridOperators, fld: ValueField, i: int, n: int) -> np.ndarray:
    return ops.apply_K(fld, i, n)


def apply_B(ops: GridOperators, fld: ValueField, i: int, n: int) -> np.ndarray:
    return ops.apply_B(fld, i, n)
