import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ipdeswitch.operators import Grid, GridOperators, ValueField, apply_B, apply_K, apply_local, interpolate

from conftest import make_problem


def field_of(grid, m, fn):
    vals = np.zeros((m, grid.n_t + 1, *grid.nodes))
    for i in range(m):
        vals[i, :] = fn(grid.points)
    return ValueField(vals, grid)


def setup(nodes=33, box=(-4.0, 4.0), n_t=4, **kw):
    P = make_problem(box=[box], **kw)
    grid = Grid.for_problem(P, nodes, n_t)
    return P, grid, GridOperators(P, grid)


def in_range(grid, e0):
    x = grid.points[..., 0]
    lo, hi = grid.lower[0], grid.upper[0]
    return grid.interior & (x + e0 >= lo) & (x + e0 <= hi)


def test_grid_validation():
    with pytest.raises(ValueError):
        Grid((0.0,), (1.0,), (2,), 4, 1.0)
    with pytest.raises(ValueError):
        Grid((1.0,), (0.0,), (5,), 4, 1.0)
    with pytest.raises(ValueError):
        Grid((0.0,), (np.inf,), (5,), 4, 1.0)
    g = Grid((0.0,), (1.0,), (5,), 4, 2.0)
    assert g.h == (0.25,) and g.dt == 0.5 and g.points.shape == (5, 1)


def test_constant_field_annihilated():
    P, grid, ops = setup(drift="x1", sigma="1", beta="e1", gamma="1", atoms=[(0.3, 1.5)])
    fld = field_of(grid, 2, lambda X: np.full(X.shape[:-1], 3.0))
    assert np.max(np.abs(apply_local(ops, fld, 0, 0))) == 0.0
    assert np.max(np.abs(apply_K(ops, fld, 0, 0))) <= 1e-12
    assert np.max(np.abs(apply_B(ops, fld, 1, 0))) <= 1e-12


def test_diffusion_on_quadratic():
    P, grid, ops = setup(sigma="sqrt(2)")
    fld = field_of(grid, 2, lambda X: X[..., 0] ** 2)
    out = apply_local(ops, fld, 0, 0)
    np.testing.assert_allclose(out[grid.interior], 2.0, rtol=0, atol=1e-12)


def test_upwind_drift_on_linear():
    for b in ("1", "-1"):
        P, grid, ops = setup(drift=b)
        fld = field_of(grid, 2, lambda X: X[..., 0])
        np.testing.assert_allclose(apply_local(ops, fld, 0, 0), float(b), atol=1e-12)


def test_mixed_derivative_2d():
    P = make_problem(k=2, d=1, sigma=[["1"], ["1"]], box=[(-1, 1), (-1, 1)])
    grid = Grid.for_problem(P, 11, 2)
    ops = GridOperators(P, grid)
    fld = field_of(grid, 2, lambda X: X[..., 0] * X[..., 1] + X[..., 0] ** 2)
    # a = 1/2 [[1, 1], [1, 1]]: L u = a11 * 2 + 2 * a12 * 1 = 2
    np.testing.assert_allclose(apply_local(ops, fld, 0, 0)[grid.interior], 2.0, atol=1e-12)


def test_K_on_quadratic_example():
    P, grid, ops = setup(beta="e1", atoms=[(0.5, 2.0)])
    fld = field_of(grid, 2, lambda X: X[..., 0] ** 2)
    out = apply_K(ops, fld, 0, 0)
    np.testing.assert_allclose(out[in_range(grid, 0.5)], 0.5, atol=1e-12)


def test_K_linear_any_beta():
    P, grid, ops = setup(beta="0.37*e1 + 0.1*sin(x1)", atoms=[(0.5, 2.0), (-0.9, 1.0)], box=(-20.0, 20.0))
    fld = field_of(grid, 2, lambda X: 3 * X[..., 0] - 1)
    assert ops.clamp_interior == 0
    assert np.max(np.abs(apply_K(ops, fld, 0, 0)[grid.interior])) <= 1e-9


def test_B_linear_example():
    P, grid, ops = setup(beta="e1", gamma="1", atoms=[(0.5, 2.0)])
    fld = field_of(grid, 2, lambda X: X[..., 0])
    out = apply_B(ops, fld, 0, 0)
    np.testing.assert_allclose(out[in_range(grid, 0.5)], 1.0, atol=1e-12)


def test_B_zero_gamma():
    P, grid, ops = setup(beta="e1", gamma="0", atoms=[(0.5, 2.0)])
    fld = field_of(grid, 2, lambda X: np.sin(X[..., 0]))
    assert np.all(apply_B(ops, fld, 0, 0) == 0.0)


def test_empty_measure_or_zero_beta():
    for kw in ({}, {"beta": "0", "atoms": [(0.5, 1.0)]}):
        P, grid, ops = setup(gamma="1", **kw)
        fld = field_of(grid, 2, lambda X: np.exp(X[..., 0]))
        assert np.max(np.abs(apply_K(ops, fld, 0, 0))) == 0.0
        assert np.max(np.abs(apply_B(ops, fld, 0, 0))) == 0.0


def test_clamp_counters():
    _, _, small = setup(box=(-1.0, 1.0), nodes=9, beta="e1", atoms=[(0.5, 1.0)])
    assert small.clamp_total > 0 and small.clamp_interior > 0
    _, _, big = setup(box=(-1.0, 1.0), nodes=9, beta="e1*(1 - abs(x1))", atoms=[(0.5, 1.0)])
    assert big.clamp_total == 0


def test_interpolation_exact_on_bilinear():
    grid = Grid((-1.0, 0.0), (1.0, 2.0), (5, 7), 1, 1.0)
    X = grid.points
    u = 1 + 2 * X[..., 0] - X[..., 1] + 0.5 * X[..., 0] * X[..., 1]
    pts = np.random.default_rng(1).uniform([-1, 0], [1, 2], (50, 2))
    exact = 1 + 2 * pts[:, 0] - pts[:, 1] + 0.5 * pts[:, 0] * pts[:, 1]
    np.testing.assert_allclose(interpolate(grid, u, pts), exact, atol=1e-12)


_P, _GRID, _OPS = setup(nodes=17, drift="0.5 - x1", sigma="1 + 0.1*x1^2", beta="0.3*e1", gamma="1 + 0.5*cos(x1)",
                        atoms=[(0.4, 1.0), (-0.7, 0.5)])


@settings(max_examples=40, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2**32 - 1))
def test_operators_linear(a, b, seed):
    rng = np.random.default_rng(seed)
    shape = (2, _GRID.n_t + 1, *_GRID.nodes)
    u = ValueField(rng.normal(size=shape), _GRID)
    v = ValueField(rng.normal(size=shape), _GRID)
    w = ValueField(a * u.values + b * v.values, _GRID)
    for op in (apply_local, apply_K, apply_B):
        lhs = op(_OPS, w, 1, 2)
        rhs = a * op(_OPS, u, 1, 2) + b * op(_OPS, v, 1, 2)
        scale = 1 + np.max(np.abs(lhs))
        assert np.max(np.abs(lhs - rhs)) <= 1e-12 * scale * 100
