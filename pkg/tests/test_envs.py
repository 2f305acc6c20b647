import numpy as np
import pytest

from pcmdp.core import backward_induction, compose_full_kernel, evaluate_policy
from pcmdp.envs import (ElevatorSpec, LowerBoundSpec, TaxiTrafficSpec, TradingSpec, build_elevator,
                        build_lower_bound, build_taxi, build_trading, hard_instance)
from pcmdp.envs.elevator import DOWN, OPEN, UP, transition
from pcmdp.envs.taxi import DROPOFF, EAST, IN_TAXI, PICKUP, SOUTH, decode_ctrl, encode_ctrl
from pcmdp.envs.trading import price_kernel, reward_terms


# taxi

def test_taxi_sizes():
    env = build_taxi()
    assert env.factorization.n_controllable == 500
    assert env.factorization.n_exogenous == 8
    assert env.horizon == 200 and env.n_actions == 6


def test_taxi_without_traffic_is_point_mass_on_clear_roads():
    env = build_taxi(TaxiTrafficSpec(traffic_prob=0.0))
    P = env.model.exogenous.at(0)
    np.testing.assert_array_equal(P[:, 0], 1.0)


def test_taxi_delivery_pays_and_resets_passenger(rng):
    env = build_taxi()
    c = encode_ctrl(0, 4, IN_TAXI, 1)      # at G with destination G
    s = env.factorization.encode(c, 0)
    assert env.reward_at(0, s, DROPOFF) == 20.0
    idx, prob = env.controllable_support(0, s, DROPOFF)
    assert len(idx) == 12 and np.allclose(prob, 1 / 12)
    for nxt in idx:
        row, col, psg, dest = decode_ctrl(nxt)
        assert (row, col) == (0, 4) and psg != IN_TAXI and psg != dest


def test_taxi_invalid_pickup_and_dropoff_penalized():
    env = build_taxi()
    s = env.factorization.encode(encode_ctrl(1, 1, 0, 2), 0)
    assert env.reward_at(0, s, PICKUP) == -10.0
    assert env.reward_at(0, s, DROPOFF) == -10.0
    ok = env.factorization.encode(encode_ctrl(0, 0, 0, 2), 0)
    assert env.reward_at(0, ok, PICKUP) == -1.0


def test_taxi_move_into_blocked_cell_fails(rng):
    spec = TaxiTrafficSpec()
    env = build_taxi(spec)
    c = encode_ctrl(1, 1, 0, 1)             # moving south enters traffic cell (2, 1)
    blocked = env.factorization.encode(c, 0b001)
    idx, _ = env.controllable_support(0, blocked, SOUTH)
    assert decode_ctrl(idx[0])[:2] == (1, 1)
    assert env.reward_at(0, blocked, SOUTH) == -1.0
    clear = env.factorization.encode(c, 0)
    idx, _ = env.controllable_support(0, clear, SOUTH)
    assert decode_ctrl(idx[0])[:2] == (2, 1)


def test_taxi_walls_follow_the_classic_map():
    env = build_taxi(TaxiTrafficSpec(traffic_prob=0.0))
    s = env.factorization.encode(encode_ctrl(0, 1, 0, 1), 0)   # wall east of (0, 1)
    idx, _ = env.controllable_support(0, s, EAST)
    assert decode_ctrl(idx[0])[:2] == (0, 1)


def test_taxi_spec_validation():
    with pytest.raises(ValueError):
        TaxiTrafficSpec(traffic_locations=((7, 1),))
    with pytest.raises(ValueError):
        TaxiTrafficSpec(traffic_prob=1.5)


# trading

def test_trading_cost_terms():
    spec = TradingSpec()
    rev, c_ex, c_hold = reward_terms(spec, 5, 100.0, 5)
    assert rev == 0 and c_ex == 0 and c_hold == pytest.approx(225.0)
    _, c_ex, _ = reward_terms(spec, 10, 100.0, 0)
    assert c_ex == pytest.approx(0.627)


def test_trading_full_grid():
    spec = TradingSpec()
    grid = spec.prices()
    assert grid[0] == 90.0 and grid[-1] == 110.0
    np.testing.assert_allclose(np.diff(grid), spec.tick)
    assert spec.initial_inventory + 1 == 101
    assert spec.is_full_scale and not TradingSpec.desk().is_full_scale


def test_trading_price_increment_sd(rng):
    spec = TradingSpec()
    P = price_kernel(spec)
    start = int(np.argmin(np.abs(spec.prices() - 100.0)))
    draws = rng.choice(spec.price_levels, size=100_000, p=P[start])
    inc = spec.prices()[draws] - spec.prices()[start]
    assert abs(inc.std() - spec.volatility) / spec.volatility < 0.02
    assert abs(inc.mean()) < 0.01


def test_trading_last_step_forces_liquidation_and_rejects_illegal(rng):
    env = build_trading(TradingSpec.desk())
    H = env.horizon
    s = env.factorization.encode(5, 10)
    assert list(env.legal_actions(H - 1, s)) == [0]
    assert list(env.legal_actions(0, s)) == list(range(6))
    with pytest.raises(ValueError):
        env.step(s, 6, rng, 0)


def test_trading_accounting_identity(rng):
    spec = TradingSpec.desk()
    env = build_trading(spec)
    pi = np.zeros((env.horizon, env.n_states), np.int32)
    u = np.repeat(np.arange(spec.initial_inventory + 1), spec.price_levels)
    pi[:] = np.maximum(u - 1, 0)          # sell one share per step
    pi[-1] = 0
    for traj in env.rollout_policy(pi, rng, 20):
        inv = traj.ctrl
        sold = inv - traj.actions
        assert sold.sum() == spec.initial_inventory
        prices = spec.prices()[traj.exo]
        cash = float(sold @ prices)
        _, c_ex, c_hold = reward_terms(spec, inv, prices, traj.actions)
        assert traj.total == pytest.approx(cash - c_ex.sum() - c_hold.sum())


# elevator

def test_elevator_sizes():
    env = build_elevator()
    assert env.factorization.n_controllable == 81
    assert env.factorization.n_exogenous == 9


def test_elevator_reward_examples():
    spec = ElevatorSpec()
    assert transition(spec, 0, 0, (0, 0), (0, 0), DOWN)[3] == 0.0
    assert transition(spec, 1, 1, (1, 2), (0, 0), UP)[3] == -4.0
    f, r, w, rew = transition(spec, 0, 2, (0, 0), (0, 0), OPEN)
    assert r == 0 and rew == 20.0


def test_elevator_arrivals_capped_and_boarding():
    spec = ElevatorSpec()
    f, r, w, _ = transition(spec, 1, 0, (2, 0), (2, 1), OPEN)
    assert w == (0, 1) and r == 2


def test_elevator_passenger_conservation(rng):
    env = build_elevator()
    lay, spec = env.layout, env.spec
    pi = rng.integers(0, 3, (env.horizon, env.n_states)).astype(np.int32)
    for traj in env.rollout_policy(pi, rng, 10):
        boarded = discharged = 0
        for h in range(env.horizon):
            c, e = divmod(int(traj.states[h]), env.factorization.n_exogenous)
            floor, riders, queues = lay.decode(c)
            f2, r2, _, _ = transition(spec, floor, riders, queues, lay.decode_exo(e), int(traj.actions[h]))
            boarded += max(r2 - riders, 0)
            discharged += max(riders - r2, 0)
        start = lay.decode(int(traj.ctrl[0]))[1]
        assert boarded == discharged + r2 - start


def test_elevator_initial_state_is_ground_and_empty(rng):
    env = build_elevator()
    for traj in env.rollout_policy(np.zeros((env.horizon, env.n_states), np.int32), rng, 5):
        assert env.layout.decode(int(traj.ctrl[0])) == (0, 0, (0, 0))


# lower-bound family

def test_lower_bound_sizes():
    env = build_lower_bound(LowerBoundSpec((0.3, 0.6)))
    assert env.factorization.n_exogenous == 7
    assert env.factorization.n_controllable == 3 and env.n_actions == 2 and env.horizon == 3


def test_lower_bound_all_type_one_leaves():
    env = build_lower_bound(LowerBoundSpec((1.0, 1.0, 1.0)))
    plan = backward_induction(env.model)
    m = env.model
    v = plan.V[0] @ m.initial_distribution()
    assert v == pytest.approx(1.0)
    mids = [env.factorization.encode(0, i) for i in range(1, 4)]
    assert all(plan.policy[1, s] == 1 for s in mids)


def test_lower_bound_coin_flip_makes_every_policy_optimal(rng):
    env = build_lower_bound(LowerBoundSpec((0.5,)))
    m = env.model
    v_star = backward_induction(m).V[0] @ m.initial_distribution()
    for _ in range(20):
        pi = rng.integers(0, 2, (3, m.n_states)).astype(np.int32)
        assert v_star - evaluate_policy(m, pi)[0] @ m.initial_distribution() == pytest.approx(0.0, abs=1e-15)


def test_hard_instance_gap(rng):
    spec = hard_instance(4, 1600, rng, scale=1.0)
    np.testing.assert_allclose(np.abs(np.array(spec.p) - 0.5), 0.05)
    with pytest.raises(ValueError):
        hard_instance(4, 1, rng, scale=1.0)
    with pytest.raises(ValueError):
        LowerBoundSpec((1.2,))


# generative interface against the exported model

@pytest.mark.parametrize("build,h,s,a", [
    (lambda: build_elevator(), 3, 100, 2),
    (lambda: build_taxi(), 5, 8 * encode_ctrl(0, 4, IN_TAXI, 1) + 3, DROPOFF),
    (lambda: build_lower_bound(LowerBoundSpec((0.3, 0.8))), 1, 1, 0),
])
def test_generative_frequencies_match_exported_kernel(build, h, s, a, rng):
    env = build()
    m = env.export_model(budget=10 ** 6)
    idx, prob = m.controllable.support(h, s, a)
    exact = np.zeros((m.n_controllable, m.n_exogenous))
    exact[idx] = prob[:, None] * m.exogenous.at(h)[s % m.n_exogenous]
    exact = exact.ravel()
    if m.n_states * m.n_actions * m.n_states <= 2_000_000:
        np.testing.assert_allclose(compose_full_kernel(m, h)[s, a], exact, atol=1e-15)
    n = 100_000
    hits = np.bincount([env.step(s, a, rng, h)[0] for _ in range(n)], minlength=env.n_states) / n
    assert 0.5 * np.abs(hits - exact).sum() <= 0.02


def test_export_budget_refuses_large_models():
    with pytest.raises(ValueError):
        build_taxi().export_model(budget=100)


def test_known_view_hides_the_exogenous_kernel():
    known = build_taxi().known()
    assert not hasattr(known, "exogenous")
    assert len(known.arrays()) == 8


def test_last_step_has_no_successor(rng):
    env = build_lower_bound(LowerBoundSpec((0.5,)))
    nxt, r = env.step(0, 0, rng, env.horizon - 1)
    assert nxt is None and r == 0.0
