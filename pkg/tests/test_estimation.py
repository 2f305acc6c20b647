import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pcmdp import binio
from pcmdp.estimation import (ExoStatistics, FullStatistics, LearningRateSchedule, alpha_weights, bernstein_bound,
                              counterfactual_target, empirical_exo_kernel, empirical_full_kernel, learning_rate,
                              per_entry_bound, record_transition)
from pcmdp.oracle import exact_factored_expectation, random_model


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(1, 5), st.lists(st.integers(0, 2 ** 31), min_size=1, max_size=20))
def test_exo_counts_stay_consistent(H, n_e, seeds):
    stats = ExoStatistics(H, n_e)
    for s in seeds:
        stats.record_episode(np.random.default_rng(s).integers(0, n_e, H))
    assert stats.transition_counts_consistent()
    assert stats.n.sum() == H * len(seeds)
    est = stats.empirical_all()
    np.testing.assert_allclose(est.sum(axis=-1), 1.0)


def test_empirical_kernel_values_and_fallback():
    stats = ExoStatistics(3, 3)
    for path in ([0, 1, 2], [0, 1, 1], [0, 2, 2], [1, 1, 1]):
        stats.record_episode(path)
    est = empirical_exo_kernel(stats, 0, 0)
    np.testing.assert_allclose(est.probs, [0, 2 / 3, 1 / 3])
    assert not est.unvisited
    miss = empirical_exo_kernel(stats, 0, 2)
    assert miss.unvisited
    np.testing.assert_allclose(miss.probs, [1 / 3] * 3)
    assert list(stats.unvisited(0)) == [2]
    with pytest.raises(IndexError):
        empirical_exo_kernel(stats, 2, 0)


def test_record_transition_bounds():
    stats = ExoStatistics(3, 2)
    record_transition(stats, 1, 0, 1)
    assert stats.n[1, 0] == 1 and stats.m[1, 0, 1] == 1
    with pytest.raises(IndexError):
        record_transition(stats, 2, 0, 1)
    with pytest.raises(IndexError):
        record_transition(stats, 0, 0, 5)
    with pytest.raises(ValueError):
        stats.record_episode([0, 1])


def test_exo_stats_binary_round_trip(tmp_path, rng):
    stats = ExoStatistics(4, 3)
    for _ in range(10):
        stats.record_episode(rng.integers(0, 3, 4))
    path = tmp_path / "exo.bin"
    stats.dump(path)
    back = ExoStatistics.load(path)
    np.testing.assert_array_equal(back.n, stats.n)
    np.testing.assert_array_equal(back.m, stats.m)


def test_binary_format_rejects_wrong_kind_and_magic(tmp_path):
    path = tmp_path / "x.bin"
    binio.dump_arrays(path, "tables", {"a": np.arange(3)})
    with pytest.raises(ValueError):
        binio.load_arrays(path, "exaq")
    (tmp_path / "junk.bin").write_bytes(b"not a file at all")
    with pytest.raises(ValueError):
        binio.load_arrays(tmp_path / "junk.bin")


def test_full_statistics_counts(rng):
    stats = FullStatistics(4, 6, 2)
    for _ in range(30):
        stats.record_episode(rng.integers(0, 6, 4), rng.integers(0, 2, 4))
    assert stats.successor_sums_consistent()
    s, a = 2, 1
    row = empirical_full_kernel(stats, 1, s, a)
    if stats.count(1, s, a):
        assert row.sum() == pytest.approx(1.0)
    assert empirical_full_kernel(FullStatistics(3, 4, 2), 0, 0, 0).sum() == 0.0


def test_full_statistics_round_trip(tmp_path, rng):
    stats = FullStatistics(3, 5, 2)
    for _ in range(40):
        stats.record_episode(rng.integers(0, 5, 3), rng.integers(0, 2, 3))
    path = tmp_path / "full.bin"
    stats.dump(path)
    back = FullStatistics.load(path)
    np.testing.assert_array_equal(back.n_sa, stats.n_sa)
    for h in range(2):
        for s in range(5):
            for a in range(2):
                for s2 in range(5):
                    assert back.count(h, s, a, s2) == stats.count(h, s, a, s2)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 32 - 1))
def test_counterfactual_target_averages_to_factored_expectation(seed):
    r = np.random.default_rng(seed)
    m = random_model(r, horizon=3, fixed_init=False)
    f = r.random(m.n_states)
    c, e, a = int(r.integers(m.n_controllable)), int(r.integers(m.n_exogenous)), int(r.integers(m.n_actions))
    pe = m.exogenous.at(0)[e]
    avg = sum(pe[e2] * counterfactual_target(m.controllable, 0, e2, f, c, e, a, m.horizon)
              for e2 in range(m.n_exogenous))
    assert avg == pytest.approx(exact_factored_expectation(m, f, 0, c, e, a), abs=1e-12)


def test_counterfactual_target_zero_after_last_step(chain):
    f = np.ones(chain.n_states)
    assert counterfactual_target(chain.controllable, chain.horizon - 1, 0, f, 0, 0, 0) == 0.0
    with pytest.raises(IndexError):
        counterfactual_target(chain.controllable, chain.horizon, 0, f, 0, 0, 0)


def test_learning_rate_schedule():
    sched = LearningRateSchedule(5)
    assert sched(1) == 1.0
    assert learning_rate(sched, 5) == pytest.approx(0.6)
    with pytest.raises(ValueError):
        sched(0)
    with pytest.raises(ValueError):
        LearningRateSchedule(0)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 20), st.integers(1, 300))
def test_alpha_weights_sum_to_one(H, t):
    w = alpha_weights(H, t)
    assert w.sum() == pytest.approx(1.0, abs=1e-12)
    assert w[0] == 0.0
    assert w[t] == pytest.approx((H + 1) / (H + t))


def test_bernstein_bound_formula():
    val = bernstein_bound(4.0, 1.0, delta=0.1)
    L = math.log(20.0)
    assert val == pytest.approx(math.sqrt(8 * L) + 2 * L / 3)
    assert bernstein_bound(4.0, 1.0, n=4, delta=0.1, mean=True) == pytest.approx(val / 4)
    with pytest.raises(ValueError):
        bernstein_bound(1.0, 1.0, delta=1.5)


def test_per_entry_bound_shrinks_with_n():
    p = np.array([0.2, 0.8])
    a = per_entry_bound(p, 100, 0.05)
    b = per_entry_bound(p, 10_000, 0.05)
    assert np.all(b < a)
    L = math.log(2 * 2 / 0.05)
    assert a[0] == pytest.approx(math.sqrt(2 * 0.16 * L / 100) + 4 * L / 300)
