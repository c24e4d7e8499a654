import numpy as np
import pytest

from edgescale import model, solver
from edgescale.oracle import (
    MAX_ORACLE_POLICIES,
    OracleError,
    assert_tiny,
    brute_force_optimal,
    erlang_c_delay,
    evaluate_policy_exact,
    monte_carlo_value,
    policy_count,
)

from conftest import oracle_instances, tiny_config


@pytest.fixture(scope="module")
def solved_instances():
    out = []
    for cfg in oracle_instances():
        states, umodel, policy = solver.solve(cfg)
        out.append((cfg, states, umodel, policy))
    return out


def test_policy_counts_are_tiny(solved_instances):
    for cfg, states, _, _ in solved_instances:
        assert_tiny(states, cfg)
        assert policy_count(states, cfg) <= MAX_ORACLE_POLICIES


def test_brute_force_agrees_with_value_iteration(solved_instances):
    for cfg, states, umodel, policy in solved_instances:
        bf = brute_force_optimal(umodel)
        tol = cfg.epsilon + 1e-8
        assert np.abs(bf.values - policy.values).max() <= tol
        # the solver's policy, evaluated exactly, attains the optimum
        exact = evaluate_policy_exact(umodel, policy.actions)
        assert np.abs(exact - bf.values).max() <= tol


def test_brute_force_values_dominate_every_policy(solved_instances):
    cfg, states, umodel, _ = solved_instances[1]
    bf = brute_force_optimal(umodel)
    rng = np.random.default_rng(0)
    choices = [model.feasible_actions(s, cfg) for s in states]
    for _ in range(25):
        acts = [int(c[rng.integers(len(c))]) for c in choices]
        v = evaluate_policy_exact(umodel, acts)
        assert np.all(v <= bf.values + 1e-9)


def test_brute_force_zero_rewards(solved_instances):
    _, _, umodel, _ = solved_instances[1]
    import copy

    zeroed = copy.copy(umodel)
    zeroed.rbar = np.where(umodel.feasible, 0.0, -np.inf)
    bf = brute_force_optimal(zeroed)
    assert np.all(bf.values == 0.0)


def test_brute_force_refuses_large_spaces():
    cfg = tiny_config(max_replicas=2, max_queue=2)
    big = cfg.replace(max_queue=30, capacity=(40,), max_replicas=20)
    states = model.enumerate_states(big)
    with pytest.raises(OracleError):
        assert_tiny(states, big)


# -- Erlang C ----------------------------------------------------------------


def test_erlang_c_reference_point():
    wait_prob, mean_wait, sojourn = erlang_c_delay(2.0, 1.0, 3)
    assert wait_prob == pytest.approx(4.0 / 9.0, abs=1e-12)
    assert mean_wait == pytest.approx(4.0 / 9.0, abs=1e-12)
    assert sojourn == pytest.approx(1.0 + 4.0 / 9.0, abs=1e-12)


def test_erlang_c_single_server_reduces_to_mm1():
    lam, mu = 0.5, 1.0
    _, _, sojourn = erlang_c_delay(lam, mu, 1)
    assert sojourn == pytest.approx(1.0 / (mu - lam))


def test_erlang_c_light_traffic_limit():
    wait_prob, _, sojourn = erlang_c_delay(1e-9, 1.0, 3)
    assert wait_prob == pytest.approx(0.0, abs=1e-9)
    assert sojourn == pytest.approx(1.0, abs=1e-6)


def test_erlang_c_rejects_unstable():
    with pytest.raises(ValueError):
        erlang_c_delay(3.0, 1.0, 3)


# -- Monte-Carlo value --------------------------------------------------------


def test_monte_carlo_zero_reward(solved_instances):
    _, _, umodel, _ = solved_instances[1]
    # a model whose income, unit cost, and queues are all zero pays nothing
    zero_cfg = umodel.cfg.replace(income=(0.0,), unit_cost=0.0, max_queue=0)
    states2, um2, pol2 = solver.solve(zero_cfg)
    est = monte_carlo_value(
        pol2.actions, um2, solver.default_start_state(um2),
        horizon=6.0, n_paths=50, rng=np.random.default_rng(3),
    )
    assert est.mean == 0.0 and est.stderr == 0.0


def test_monte_carlo_matches_solver(solved_instances):
    cfg, _, umodel, policy = solved_instances[0]
    start = solver.default_start_state(umodel)
    est = monte_carlo_value(
        policy.actions, umodel, start,
        horizon=3.0, n_paths=4000, rng=np.random.default_rng(11),
    )
    assert abs(est.mean - policy.values[start]) <= 4 * est.stderr


def test_monte_carlo_horizon_guard(solved_instances):
    _, _, umodel, policy = solved_instances[0]
    with pytest.raises(ValueError):
        monte_carlo_value(policy.actions, umodel, 0, horizon=0.5, n_paths=5,
                          rng=np.random.default_rng(0))


def test_monte_carlo_stderr_shrinks(solved_instances):
    cfg, _, umodel, policy = solved_instances[1]
    start = solver.default_start_state(umodel)
    small = monte_carlo_value(policy.actions, umodel, start, horizon=8.0,
                              n_paths=400, rng=np.random.default_rng(5))
    large = monte_carlo_value(policy.actions, umodel, start, horizon=8.0,
                              n_paths=1600, rng=np.random.default_rng(5))
    assert large.stderr < small.stderr
    assert small.stderr / large.stderr == pytest.approx(2.0, rel=0.35)
