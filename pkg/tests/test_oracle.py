import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pcmdp.core import BudgetError, ControllableKernel, ExogenousKernel, backward_induction, evaluate_policy
from pcmdp.envs import GenerativeEnv
from pcmdp.oracle import (ExogenousMock, NonExogenousMock, brute_force_optimal, check_learning_rates,
                          concentration_coverage, counterfactual_mc, exact_factored_expectation,
                          exogeneity_test, fixed_slope_constant, policy_count, random_model, regret_slope)

from conftest import chain_model

K_GRID = [1e3, 2e3, 4e3, 8e3, 1.6e4]


def test_brute_force_horizon_one_is_best_reward(rng):
    m = random_model(rng, 3, 2, 2, 1)
    np.testing.assert_allclose(brute_force_optimal(m), m.reward.at(0).max(axis=1))


def test_brute_force_single_action_is_policy_value(rng):
    m = random_model(rng, 3, 3, 1, 3)
    pi = np.zeros((m.horizon, m.n_states), np.int32)
    np.testing.assert_allclose(brute_force_optimal(m), evaluate_policy(m, pi)[0], atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_brute_force_agrees_with_backward_induction(seed):
    m = random_model(np.random.default_rng(seed))
    np.testing.assert_allclose(brute_force_optimal(m), backward_induction(m).V[0], atol=1e-9)


def test_brute_force_refuses_huge_enumerations(rng):
    m = random_model(rng, 3, 3, 2, 3)
    start = int(np.argmax(m.initial_distribution()))
    assert policy_count(m, start) >= 1
    with pytest.raises(BudgetError):
        brute_force_optimal(m, limit=0)


def test_counterfactual_mc_is_close_to_exact(rng):
    m = random_model(rng, 3, 3, 2, 3, fixed_init=False)
    f = rng.random(m.n_states)
    mean, se = counterfactual_mc(m, f, 0, 1, 2, 1, 20_000, rng)
    assert abs(mean - exact_factored_expectation(m, f, 0, 1, 2, 1)) <= 4 * se + 1e-12


@pytest.mark.parametrize("H", [1, 5, 10])
def test_learning_rate_identities(H):
    assert check_learning_rates(H, 2000).ok


# slope fits

def test_slope_recovers_square_root():
    fit = regret_slope(K_GRID, [3.0 * math.sqrt(k) for k in K_GRID])
    assert fit.slope == pytest.approx(0.5, abs=1e-6)
    assert fit.constant == pytest.approx(3.0, rel=1e-6)
    assert fit.residual < 1e-9


def test_slope_recovers_linear():
    fit = regret_slope(K_GRID, [0.2 * k for k in K_GRID])
    assert fit.slope == pytest.approx(1.0, abs=1e-6)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.05, 2.0), st.floats(0.01, 100.0))
def test_slope_fit_recovers_any_power_law(b, c):
    fit = regret_slope(K_GRID, [c * k ** b for k in K_GRID])
    assert fit.slope == pytest.approx(b, abs=1e-6)
    assert fixed_slope_constant(K_GRID, [c * k ** b for k in K_GRID], slope=b) == pytest.approx(c, rel=1e-6)


def test_slope_fit_rejects_bad_input():
    with pytest.raises(ValueError):
        regret_slope([1, 2, 3], [1, 2, 3])
    with pytest.raises(ValueError):
        regret_slope([1, 2, 4, 8], [1, 0, 2, 3])
    with pytest.raises(ValueError):
        regret_slope([1, 4, 2, 8], [1, 2, 3, 4])


# concentration coverage

def test_coverage_vacuous_at_delta_one(rng):
    assert concentration_coverage((0.3, 0.7), 100, 1.0, 200, rng) == 0.0


def test_coverage_point_mass_never_violates(rng):
    assert concentration_coverage((0.0, 1.0, 0.0), 50, 0.05, 500, rng) == 0.0


def test_coverage_needs_enough_trials(rng):
    with pytest.raises(ValueError):
        concentration_coverage((0.5, 0.5), 10, 0.05, 10, rng)


# exogeneity

def _deterministic_chain_env():
    m = chain_model(stay=1.0)
    return GenerativeEnv(m)


def test_exogeneity_skips_degenerate_tables(rng):
    res = exogeneity_test(_deterministic_chain_env(), 0, 0, 1000, rng)
    assert res.skipped and not res.rejects(0.001)


def test_exogeneity_flags_planted_dependence(rng):
    res = exogeneity_test(NonExogenousMock(), 0, 0, 10_000, rng)
    assert res.p_value < 1e-6


def test_exogeneity_false_positive_rate_is_calibrated():
    rng = np.random.default_rng(2024)
    runs = 1000
    rejections = sum(exogeneity_test(ExogenousMock(), 0, 0, 1000, rng).rejects(0.001) for _ in range(runs))
    assert rejections / runs <= 0.005


def test_exogeneity_needs_enough_samples(rng):
    with pytest.raises(ValueError):
        exogeneity_test(ExogenousMock(), 0, 0, 10, rng)


def test_random_model_is_well_formed(rng):
    m = random_model(rng, 3, 2, 2, 4, fixed_init=False)
    assert isinstance(m.controllable, ControllableKernel) and isinstance(m.exogenous, ExogenousKernel)
    assert m.initial_distribution().sum() == pytest.approx(1.0)
