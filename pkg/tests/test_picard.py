import math

import numpy as np
import pytest

from ipdeswitch.operators import Grid, GridOperators, ValueField
from ipdeswitch.picard import (
    CONVERGED,
    DIVERGED,
    MAX_ITER,
    WeightSpec,
    contraction_window,
    discrete_residual,
    jump_field_from_value,
    picard_solve,
    weighted_sup_diff,
)

from conftest import make_problem


def coupled_problem(**kw):
    base = dict(box=[(-4, 4)], drivers=["q", "q"], gamma="1", beta="e1", atoms=[(0.25, 1.0)], terminal="sin(x1)")
    base.update(kw)
    return make_problem(**base)


def test_weight_spec():
    with pytest.raises(ValueError):
        WeightSpec(0)
    assert WeightSpec(2).phi(np.array([[0.0], [1.0]])).tolist() == [1.0, 0.25]


def test_weighted_sup_diff_examples():
    grid = Grid((-2.0,), (2.0,), (9,), 2, 1.0)
    x = grid.points[..., 0]
    zero = ValueField.zeros(2, grid)
    assert weighted_sup_diff(zero, zero, WeightSpec(1)) == 0.0
    ones = ValueField(np.ones_like(zero.values), grid)
    assert weighted_sup_diff(ones, zero, WeightSpec(3)) == 1.0
    quad = ValueField(np.broadcast_to(1 + x**2, zero.values.shape).copy(), grid)
    phi = WeightSpec(1).phi(grid.points)
    np.testing.assert_allclose(phi * (1 + x**2), 1.0, rtol=1e-15)
    assert weighted_sup_diff(quad, zero, WeightSpec(1)) == pytest.approx(1.0, rel=1e-15)
    other = ValueField.zeros(2, Grid((-2.0,), (2.0,), (9,), 3, 1.0))
    with pytest.raises(ValueError):
        weighted_sup_diff(zero, other, WeightSpec(1))


def test_contraction_window_examples():
    assert contraction_window(1.0) == pytest.approx(math.log(129 / 128), rel=1e-14)
    assert contraction_window(1.0) == pytest.approx(7.7822e-3, rel=1e-4)
    assert contraction_window(128.0) == pytest.approx(math.log(2) / 128, rel=1e-14)
    for c in (0.1, 1.0, 10.0, 128.0, 1e4):
        eta = contraction_window(c)
        assert abs(16 / c * math.expm1(c * eta) - 0.125) <= 1e-12
    for bad in (0.0, -1.0):
        with pytest.raises(ValueError):
            contraction_window(bad)


def test_jump_field_examples():
    P = coupled_problem(atoms=[(0.5, 2.0)])
    grid = Grid.for_problem(P, 33, 3)
    zero = ValueField.zeros(2, grid)
    assert np.all(jump_field_from_value(zero, P).q == 0)
    const = ValueField(np.full_like(zero.values, 2.5), grid)
    assert np.max(np.abs(jump_field_from_value(const, P).q)) <= 1e-12
    x = grid.points[..., 0]
    lin = ValueField(np.broadcast_to(x, zero.values.shape).copy(), grid)
    q = jump_field_from_value(lin, P).q
    ok = x + 0.5 <= grid.upper[0]
    np.testing.assert_allclose(q[..., ok], 1.0, atol=1e-12)


def test_zero_gamma_fixed_after_one_stage():
    P = coupled_problem(gamma="0", drivers=["q + x1", "1"], sigma="0.3")
    grid = Grid.for_problem(P, 41, 40)
    _, _, rep = picard_solve(P, grid)
    assert rep.status == CONVERGED and rep.iterations == 2 and rep.diffs[1] == 0.0


def test_zero_driver_fixed_after_one_stage():
    P = coupled_problem(drivers="0")
    grid = Grid.for_problem(P, 41, 20)
    _, _, rep = picard_solve(P, grid)
    assert rep.diffs[1] == 0.0 and rep.status == CONVERGED


def test_coupled_problem_converges():
    P = coupled_problem()
    grid = Grid.for_problem(P, 81, 20)
    ops = GridOperators(P, grid)
    fld, refl, rep = picard_solve(P, grid, tol=1e-8, ops=ops)
    assert rep.status == CONVERGED
    assert all(b <= a for a, b in zip(rep.diffs[1:], rep.diffs[2:]))
    assert rep.diffs[-1] <= 1e-8
    assert all(r <= 1 for r in rep.ratios)
    assert rep.c_hat == pytest.approx(1.0, rel=1e-9)
    assert rep.eta == pytest.approx(contraction_window(rep.c_hat))
    d = rep.as_dict()
    assert d["status"] == CONVERGED and len(d["D_n"]) == rep.iterations
    assert np.max(np.abs(discrete_residual(P, fld, ops))) * grid.dt <= 1e-8


def test_reseed_with_limit():
    P = coupled_problem()
    grid = Grid.for_problem(P, 81, 20)
    fld, _, rep = picard_solve(P, grid, tol=1e-10)
    again, _, rep2 = picard_solve(P, grid, tol=1e-10, initial=fld)
    assert np.max(np.abs(again.values - fld.values)) <= 1e-10
    assert rep2.iterations == 1


def test_max_iter_status():
    P = coupled_problem()
    grid = Grid.for_problem(P, 41, 20)
    _, _, rep = picard_solve(P, grid, tol=1e-14, max_iter=3)
    assert rep.status == MAX_ITER and rep.iterations == 3


def test_divergence_flagged():
    P = coupled_problem(drivers=["400*q", "400*q"], terminal="x1")
    grid = Grid.for_problem(P, 41, 2000)
    _, _, rep = picard_solve(P, grid, tol=1e-8, max_iter=50)
    assert rep.status == DIVERGED
    assert rep.diffs[-1] > 1e6 * (1 + rep.diffs[0])


def test_bad_arguments():
    P = coupled_problem()
    grid = Grid.for_problem(P, 21, 5)
    with pytest.raises(ValueError):
        picard_solve(P, grid, tol=0)
    with pytest.raises(ValueError):
        picard_solve(P, grid, max_iter=0)
