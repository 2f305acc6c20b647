import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pcmdp.core import (BudgetError, ControllableKernel, ExogenousKernel, OracleError, RegretLedger,
                        StateFactorization, StepStack, backward_induction, bellman_backup, compose_full_kernel,
                        evaluate_policy, normalize_rewards, regret_update, sample_episode, sampling_cdf,
                        value_iteration)
from pcmdp.oracle import random_model


def dense_vi(model):
    """Plain backward induction on the composed (S, A, S) kernel."""
    H, S = model.horizon, model.n_states
    V = np.zeros((H + 1, S))
    for h in range(H - 1, -1, -1):
        Q = model.reward.at(h).copy()
        if h < H - 1:
            Q += compose_full_kernel(model, h) @ V[h + 1]
        Q = np.where(model.legal.at(h).astype(bool), Q, -np.inf)
        V[h] = Q.max(axis=1)
    return V


def model_strategy():
    return st.builds(lambda seed: random_model(np.random.default_rng(seed), max_sizes=(3, 3, 3, 4),
                                               fixed_init=False),
                     st.integers(0, 2 ** 32 - 1))


def test_factorization_round_trip():
    f = StateFactorization(3, 4)
    assert f.n_states == 12
    for c in range(3):
        for e in range(4):
            assert f.decode(f.encode(c, e)) == (c, e)
    with pytest.raises(IndexError):
        f.encode(3, 0)
    with pytest.raises(IndexError):
        f.decode(12)
    with pytest.raises(ValueError):
        StateFactorization(0, 1)


def test_step_stack_is_read_only_and_shared():
    table = np.ones((2, 2))
    stack = StepStack.stationary(table, 5)
    assert len(stack) == 5
    assert stack.at(4) is not None
    with pytest.raises(ValueError):
        stack.tables[0, 0, 0] = 2.0
    table[0, 0] = 7.0
    assert stack.at(0)[0, 0] == 1.0


def test_step_map_out_of_range_rejected():
    with pytest.raises(ValueError):
        StepStack(np.ones((1, 2, 2)), [0, 1])


def test_controllable_kernel_validation():
    idx = np.zeros((1, 1, 1, 1), np.int32)
    with pytest.raises(ValueError):
        ControllableKernel(idx, np.full((1, 1, 1, 1), 0.5), np.ones((1, 1, 1), np.int32), [0], 1)
    with pytest.raises(ValueError):
        ControllableKernel(idx + 3, np.ones((1, 1, 1, 1)), np.ones((1, 1, 1), np.int32), [0], 2)
    with pytest.raises(ValueError):
        ControllableKernel(idx, np.ones((1, 1, 1, 1)), np.ones((1, 1, 1), np.int32), [1], 1)


def test_controllable_from_dense_round_trip(rng):
    P = rng.random((2, 6, 3, 4))
    P[P < 0.4] = 0
    P[..., 0] += 0.1
    P /= P.sum(axis=-1, keepdims=True)
    k = ControllableKernel.from_dense(P, [0, 1, 1])
    np.testing.assert_allclose(k.dense(0), P[0])
    np.testing.assert_allclose(k.dense(2), P[1])


def test_exogenous_kernel_rows_checked():
    with pytest.raises(ValueError):
        ExogenousKernel(np.array([[[0.5, 0.4], [0.5, 0.5]]]), [0])
    with pytest.raises(ValueError):
        ExogenousKernel(np.array([[[1.5, -0.5], [0.5, 0.5]]]), [0])


def test_sampling_cdf_pins_last_live_entry():
    cdf = sampling_cdf(np.array([0.1, 0.2, 0.7 - 1e-15, 0.0]))
    assert cdf[2] == 1.0 and cdf[3] == 1.0
    assert cdf[0] == pytest.approx(0.1)


def test_compose_full_kernel_budget(chain):
    full = compose_full_kernel(chain, 0)
    assert full.shape == (4, 2, 4)
    np.testing.assert_allclose(full.sum(axis=-1), 1.0)
    with pytest.raises(BudgetError):
        compose_full_kernel(chain, 0, budget=10)
    with pytest.raises(IndexError):
        compose_full_kernel(chain, chain.horizon - 1)


def test_bellman_backup_last_step_needs_zero_continuation(chain):
    H = chain.horizon
    q = bellman_backup(chain, H - 1, np.zeros(chain.n_states))
    np.testing.assert_array_equal(q, chain.reward.at(H - 1))
    with pytest.raises(ValueError):
        bellman_backup(chain, H - 1, np.ones(chain.n_states))


def test_horizon_one_value_is_best_immediate_reward(rng):
    m = random_model(rng, 2, 2, 3, 1)
    np.testing.assert_allclose(value_iteration(m).V[0], m.reward.at(0).max(axis=1))


@settings(max_examples=40, deadline=None)
@given(model_strategy())
def test_factored_planner_matches_dense_planner(model):
    np.testing.assert_allclose(backward_induction(model).V, dense_vi(model), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(model_strategy(), st.integers(0, 2 ** 32 - 1))
def test_optimal_value_dominates_every_policy(model, seed):
    r = np.random.default_rng(seed)
    plan = backward_induction(model)
    pi = r.integers(0, model.n_actions, size=(model.horizon, model.n_states)).astype(np.int32)
    assert np.all(evaluate_policy(model, pi)[0] <= plan.V[0] + 1e-12)
    np.testing.assert_allclose(evaluate_policy(model, plan.policy), plan.V, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(model_strategy(), st.floats(0.0, 1.0))
def test_eps_greedy_value_mixes_greedy_and_uniform(model, eps):
    plan = backward_induction(model, keep_q=True)
    v = evaluate_policy(model, plan.policy, eps=eps)
    lo = evaluate_policy(model, plan.policy, eps=1.0)
    assert np.all(v[0] <= plan.V[0] + 1e-12)
    assert np.all(v[0] >= lo[0] - 1e-12)


def test_normalize_rewards_affine(rng):
    m = random_model(rng, 2, 2, 2, 3).with_rewards(StepStack(rng.uniform(-3, 5, (3, 4, 2)), np.arange(3)),
                                                    (-3.0, 5.0))
    norm, aff = normalize_rewards(m)
    assert norm.reward.tables.min() >= 0 and norm.reward.tables.max() <= 1
    np.testing.assert_allclose(aff.to_raw(norm.reward.tables), m.reward.tables, atol=1e-12)
    v_raw = backward_induction(m).V[0]
    v_norm = backward_induction(norm).V[0]
    np.testing.assert_allclose(aff.to_raw_return(v_norm, m.horizon), v_raw, atol=1e-9)


def test_normalize_degenerate_bounds_warns(rng):
    m = random_model(rng, 2, 2, 2, 2)
    flat = m.with_rewards(StepStack(np.full((2, 4, 2), 0.3), np.arange(2)), (0.3, 0.3))
    with pytest.warns(RuntimeWarning):
        norm, aff = normalize_rewards(flat)
    assert aff.degenerate and np.all(norm.reward.tables == 0)


def test_monte_carlo_matches_exact_policy_value(chain, rng):
    pi = backward_induction(chain).policy
    exact = evaluate_policy(chain, pi)[0] @ chain.initial_distribution()
    returns = [sample_episode(chain, pi, rng).total for _ in range(4000)]
    se = np.std(returns) / np.sqrt(len(returns))
    assert abs(np.mean(returns) - exact) < 4 * se


def test_regret_ledger_accumulates_and_clamps():
    led = RegretLedger()
    regret_update(led, 1.0, 0.25)
    regret_update(led, 1.0, 1.0 + 1e-12)
    assert led.cumulative == pytest.approx(0.75)
    assert led.increments[1] == 0.0
    with pytest.raises(OracleError):
        regret_update(led, 1.0, 1.1)


def test_policy_shape_checked(chain):
    with pytest.raises(ValueError):
        evaluate_policy(chain, np.zeros((1, 4), np.int32))
    with pytest.raises(ValueError):
        evaluate_policy(chain, np.full((chain.horizon, 4), 5, np.int32))
