import math

import numpy as np
import pytest

from ipdeswitch import mc_oracle as mc
from ipdeswitch.problem import UnsupportedDriverError

from conftest import HUGE, make_problem


def jump_problem(e0=0.5, w=1.0, **kw):
    return make_problem(beta="e1", atoms=[(e0, w)], **kw)


# ---- simulation


def test_constant_paths():
    P = make_problem()
    ps = mc.simulate_paths(P, 0.0, [1.5], 20, 10, seed=1)
    assert np.all(ps.states == 1.5)
    assert ps.states.shape == (20, 11, 1)


def test_unit_drift_exact():
    P = make_problem(drift="1")
    ps = mc.simulate_paths(P, 0.0, [0.25], 3, 7, seed=0)
    np.testing.assert_allclose(ps.states[:, -1, 0], 1.25, rtol=0, atol=1e-14)


def test_determinism_and_batch_independence():
    P = jump_problem(sigma="1")
    a = mc.simulate_paths(P, 0.0, [0.0], 50, 20, seed=9)
    b = mc.simulate_paths(P, 0.0, [0.0], 50, 20, seed=9)
    c = mc.simulate_paths(P, 0.0, [0.0], 10, 20, seed=9)
    assert np.array_equal(a.states, b.states)
    assert np.array_equal(a.states[:10], c.states)
    d = mc.simulate_paths(P, 0.0, [0.0], 50, 20, seed=10)
    assert not np.array_equal(a.states, d.states)


def test_jump_log_matches_counts():
    P = make_problem(beta="e1", atoms=[(0.5, 1.0), (-0.2, 2.0)])
    ps = mc.simulate_paths(P, 0.0, [0.0], 30, 10, seed=2)
    for p in range(30):
        log = ps.jump_log(p)
        counts = np.zeros((10, 2), dtype=int)
        for step, atom in log:
            counts[step, atom] += 1
        assert np.array_equal(counts, ps.jump_counts[p])


def test_jump_counts_poisson():
    # Lambda = 3 on [0.5, 1]: mean and variance 1.5
    P = make_problem(beta="e1", atoms=[(0.5, 1.0), (-0.2, 2.0)])
    ps = mc.simulate_paths(P, 0.5, [0.0], 20000, 5, seed=3)
    n = ps.jump_counts.sum(axis=(1, 2))
    se = math.sqrt(1.5 / n.size)
    assert abs(n.mean() - 1.5) <= 4 * se
    assert abs(n.var() - 1.5) <= 0.1
    frac = ps.jump_counts.sum(axis=(0, 1)) / n.sum()
    np.testing.assert_allclose(frac, [1 / 3, 2 / 3], atol=0.02)


def test_compensation_martingale():
    P = jump_problem(e0=0.5, w=2.0)
    ps = mc.simulate_paths(P, 0.0, [1.0], 20000, 10, seed=4)
    xt = ps.states[:, -1, 0]
    assert abs(xt.mean() - 1.0) <= 3 * xt.std() / math.sqrt(xt.size)


def test_blow_up_reported():
    P = make_problem(drift="x1^4")
    with pytest.raises(mc.PathBlowUpError) as info:
        mc.simulate_paths(P, 0.0, [10.0], 2, 20, seed=0)
    assert info.value.path == 0


def test_bad_arguments():
    P = make_problem()
    with pytest.raises(ValueError):
        mc.simulate_paths(P, 0.0, [0.0], 0, 10)
    with pytest.raises(ValueError):
        mc.simulate_paths(P, 0.0, [0.0], 10, 0)


def test_csv_rows():
    ps = mc.simulate_paths(make_problem(drift="1"), 0.0, [0.0], 2, 2)
    rows = list(ps.to_csv_rows())
    assert rows[0] == ["path", "step", "t", "x1"]
    assert len(rows) == 1 + 2 * 3 and rows[-1][-1] == repr(1.0)


# ---- moments


def test_moment_constant_paths():
    ps = mc.simulate_paths(make_problem(), 0.0, [2.0], 5, 5)
    emp, c = mc.moment_check(ps, 2)
    assert emp == pytest.approx(4.0) and c == pytest.approx(0.8)


def test_moment_unit_drift():
    ps = mc.simulate_paths(make_problem(drift="1"), 0.0, [0.0], 3, 8)
    emp, c = mc.moment_check(ps, 1)
    assert emp == pytest.approx(1.0, abs=1e-14) and c == pytest.approx(1.0, abs=1e-14)
    with pytest.raises(ValueError):
        mc.moment_check(ps, 0)


# ---- strategies


def test_strategy_validation():
    with pytest.raises(ValueError):
        mc.Strategy(0, ((0.5, 1), (0.2, 0)))
    with pytest.raises(ValueError):
        mc.Strategy(0, ((0.5, 0),))
    with pytest.raises(ValueError):
        mc.Strategy(0, ((0.5, 1), (0.6, 1)))


def test_payoff_examples():
    P = make_problem(terminal=["x1", "x1 + 3"], costs={(1, 2): 1, (2, 1): 1}, drift="1")
    ps = mc.simulate_paths(P, 0.0, [0.0], 1, 10)
    assert mc.strategy_payoff(P, ps, mc.Strategy(0))[0] == pytest.approx(1.0)
    assert mc.strategy_payoff(P, ps, mc.Strategy(0, ((0.35, 1),)))[0] == pytest.approx(4.0 - 1.0)
    Q = make_problem(drivers=["2.5", "0"], terminal=["x1^2", "0"])
    ps = mc.simulate_paths(Q, 0.2, [3.0], 1, 16)
    assert mc.strategy_payoff(Q, ps, mc.Strategy(0))[0] == pytest.approx(2.5 * 0.8 + 9.0, rel=1e-14)


def test_payoff_rejects_coupled_driver():
    P = make_problem(drivers=["q", "0"])
    ps = mc.simulate_paths(P, 0.0, [0.0], 1, 4)
    with pytest.raises(UnsupportedDriverError):
        mc.strategy_payoff(P, ps, mc.Strategy(0))


# ---- deterministic recursion and enumeration


def test_dp_two_mode_example():
    P = make_problem(terminal=["0", "5"], g=1.0)
    for n in (1, 5, 13):
        np.testing.assert_array_equal(mc.dp_switching_value_deterministic(P, 0.0, [0.3], n), [4.0, 5.0])
    np.testing.assert_array_equal(mc.enumerate_strategies_value(P, 0.0, [0.3], 6, 1), [4.0, 5.0])


def test_dp_no_switch_when_costly():
    P = make_problem(drivers=["x1", "1"], drift="1", terminal=["x1", "0"])
    v = mc.dp_switching_value_deterministic(P, 0.0, [0.0], 10)
    # left Riemann sum of x = t on 10 steps: 0.45
    np.testing.assert_allclose(v, [0.45 + 1.0, 1.0], atol=1e-14)


def test_dp_two_hops_match_enumeration():
    P = make_problem(m=3, costs={(1, 2): 1, (2, 3): 1, (1, 3): 5, (2, 1): 1, (3, 1): 1, (3, 2): 1},
                     terminal=["0", "0", "10"])
    v = mc.dp_switching_value_deterministic(P, 0.0, [0.0], 6)
    np.testing.assert_array_equal(v, [8.0, 9.0, 10.0])
    np.testing.assert_array_equal(mc.enumerate_strategies_value(P, 0.0, [0.0], 6, 3), v)


def test_dp_batched_and_levels():
    P = make_problem(drivers=["sin(x1)", "cos(x1)"], drift="0.5", terminal=["x1", "0"], g=0.2)
    xs = np.linspace(-1, 1, 5)[:, None]
    batch = mc.dp_switching_value_deterministic(P, 0.0, xs, 8)
    for b, x in enumerate(xs):
        np.testing.assert_array_equal(batch[b], mc.dp_switching_value_deterministic(P, 0.0, x, 8))
    _, levels = mc.dp_switching_value_deterministic(P, 0.0, [0.1], 8, return_levels=True)
    G = 0.2
    # no switching at T, so the terminal level is exempt
    solved = levels[:-1]
    assert np.all(solved[:, 0] >= solved[:, 1] - G) and np.all(solved[:, 1] >= solved[:, 0] - G)


def test_dp_rejects_stochastic():
    with pytest.raises(mc.UnsupportedProblemError):
        mc.dp_switching_value_deterministic(make_problem(sigma="1"), 0.0, [0.0], 4)
    with pytest.raises(mc.UnsupportedProblemError):
        mc.dp_switching_value_deterministic(jump_problem(), 0.0, [0.0], 4)


def test_enumeration_guard_and_zero_switches():
    P = make_problem(terminal=["x1", "2"], drivers=["1", "0"], g=0.5)
    with pytest.raises(mc.CombinatorialLimitError):
        mc.enumerate_strategies_value(P, 0.0, [0.0], 200, 4)
    np.testing.assert_allclose(mc.enumerate_strategies_value(P, 0.0, [0.0], 5, 0), [1.0, 2.0])


def test_enumeration_best_strategy_payoff():
    P = make_problem(m=3, drivers=["x1", "-x1", "0.3"], drift="1", terminal=["0", "1", "0"], g=0.1)
    vals, strategies = mc.enumerate_strategies_value(P, 0.0, [-0.5], 8, 3, return_best=True)
    ps = mc.deterministic_path(P, 0.0, [-0.5], 8)
    for i in range(3):
        assert mc.strategy_payoff(P, ps, strategies[i])[0] == pytest.approx(vals[i], abs=1e-12)


def test_values_nonincreasing_in_costs():
    rng = np.random.default_rng(5)
    P = make_problem(m=3, drivers=["x1", "-x1", "0.3"], drift="1", terminal=["0", "1", "0"], g=0.1,
                     costs={(1, 2): "0.2 + 0.1*x1^2"})
    prev = None
    for s in sorted(rng.uniform(0.5, 4.0, 5)):
        v = mc.dp_switching_value_deterministic(P.with_costs_scaled(s), 0.0, [-0.5], 12)
        if prev is not None:
            assert np.all(v <= prev + 1e-14)
        prev = v


# ---- regression


def test_regression_degenerate_matches_dp():
    P = make_problem(m=3, drivers=["x1", "-x1", "0.3"], drift="1", terminal=["0", "1", "x1"], g=0.1)
    ps = mc.simulate_paths(P, 0.0, [-0.5], 40, 10, seed=0)
    res = mc.regression_switching_value(P, ps, basis_degree=2)
    dp = mc.dp_switching_value_deterministic(P, 0.0, [-0.5], 10)
    np.testing.assert_allclose(res.values, dp, rtol=0, atol=1e-12)
    assert np.all(res.stderr <= 1e-12)


def test_regression_gaussian_second_moment():
    P = make_problem(sigma="1", terminal="x1^2")
    ps = mc.simulate_paths(P, 0.0, [0.0], 8000, 20, seed=11)
    res = mc.regression_switching_value(P, ps, basis_degree=2, n_boot=100)
    assert np.all(np.abs(res.values - 1.0) <= 3 * res.stderr + 0.02)


def test_regression_running_reward_linearity():
    P = make_problem(sigma="1", drivers="0.7", terminal="x1^2")
    ps = mc.simulate_paths(P, 0.0, [0.0], 8000, 20, seed=11)
    base = make_problem(sigma="1", terminal="x1^2")
    a = mc.regression_switching_value(P, ps, 2, n_boot=50).values
    b = mc.regression_switching_value(base, ps, 2, n_boot=50).values
    np.testing.assert_allclose(a - b, 0.7, atol=1e-10)


def test_regression_switching_beats_staying():
    P = make_problem(sigma="1", terminal=["0", "x1^2"], g=0.25)
    ps = mc.simulate_paths(P, 0.0, [0.0], 5000, 10, seed=1)
    res = mc.regression_switching_value(P, ps, 2, n_boot=50)
    # switching is always available, and mode 2 dominates mode 1 pathwise
    assert res.values[1] - 0.25 - 1e-12 <= res.values[0] <= res.values[1]


def test_regression_preconditions():
    P = make_problem(sigma="1", terminal="x1^2")
    ps = mc.simulate_paths(P, 0.0, [0.0], 20, 5)
    with pytest.raises(ValueError):
        mc.regression_switching_value(P, ps, basis_degree=2)
    Q = make_problem(sigma="1", drivers=["y2", "0"], terminal="x1^2")
    ps = mc.simulate_paths(Q, 0.0, [0.0], 200, 5)
    with pytest.raises(UnsupportedDriverError):
        mc.regression_switching_value(Q, ps, basis_degree=1)


def test_rank_deficiency_reported():
    # two distinct states at step 1 cannot identify a cubic basis
    P = make_problem(terminal="x1^2")
    states = np.zeros((60, 3, 1))
    states[::2, 1:, 0] = 1.0
    empty = np.zeros(0, dtype=np.int64)
    ps = mc.PathSet(np.array([0.0, 0.5, 1.0]), states, np.zeros((60, 2, 0), dtype=np.int32), empty, empty, empty, 0)
    with pytest.raises(mc.RankDeficientRegressionError) as info:
        mc.regression_switching_value(P, ps, basis_degree=3)
    assert info.value.step == 1
    assert mc.regression_switching_value(P, ps, basis_degree=1).values[0] == pytest.approx(0.5)


def test_oracle_values_dispatch():
    det = make_problem(terminal=["0", "5"], g=1.0)
    v, err = mc.oracle_values(det, 0.0, [0.0], 5)
    np.testing.assert_array_equal(v, [4.0, 5.0])
    assert np.all(err == 0)
