"""Episode-level learners and the TWAP reference schedule.

Every learner sees the environment through ``env.known()`` (controllable
kernel, rewards, legality) plus the trajectories it samples. Rewards are
expected in normalized units, so value scales lie in [0, H].

Each state object exposes:

* ``episode(env, rng)``: run one training episode, learn from it, return the trajectory
* ``behavior()``: ``(policy, eps)`` the next training episode will follow
* ``evaluate(env, rng, n)``: normalized returns of ``n`` frozen-greedy episodes
"""

from __future__ import annotations

import math

import numpy as np

from pcmdp import binio, kernels
from pcmdp.core import (ExogenousKernel, FactoredModel, StateFactorization, _dummy_support,
                        backward_induction)
from pcmdp.estimation import ExoStatistics, FullStatistics
from pcmdp.tables import StepTables

UCBVI_BONUS_C = 0.5
UCBVI_DELTA = 1e-6

# alpha, eps decay, eps floor, decay type, episodes
QL_DEFAULTS = {
    "taxi": dict(alpha=0.05, eps_decay=0.99985, eps_min=0.0, decay="exp", episodes=15000),
    "elevator": dict(alpha=0.01, eps_decay=0.9995, eps_min=0.05, decay="exp", episodes=7000),
    "trading": dict(alpha=1.0, eps_decay=0.9998, eps_min=0.05, decay="mixed", episodes=20000),
}


def planning_model(known):
    """A model over the known parts only; its exogenous kernel is a uniform placeholder."""
    n_e, H = known.n_exogenous, known.horizon
    tabs = known.reward.tables
    return FactoredModel(
        factorization=StateFactorization(known.n_controllable, n_e),
        n_actions=known.n_actions,
        horizon=H,
        controllable=known.controllable,
        exogenous=ExogenousKernel.stationary(np.full((n_e, n_e), 1.0 / n_e), H),
        reward=known.reward,
        reward_bounds=(float(tabs.min()), float(tabs.max())),
        init_controllable=np.full(known.n_controllable, 1.0 / known.n_controllable),
        init_exogenous=np.full(n_e, 1.0 / n_e),
        legal=known.legal,
        name="planning",
    )


def _returns(trajs):
    return np.array([t.total for t in trajs])


class ExAviState:
    """Plans on p◇ composed with the empirical exogenous kernel; acts greedily."""

    name = "exavi"

    def __init__(self, known, replan_every=1):
        if replan_every < 1:
            raise ValueError("replan cadence must be >= 1")
        self.known = known
        self.model = planning_model(known)
        self.exo_stats = ExoStatistics(known.horizon, known.n_exogenous)
        self.replan_every = int(replan_every)
        self.episodes = 0
        self.plan = None
        self._replan()

    def _replan(self):
        self.plan = backward_induction(self.model, exo_kernel=self.exo_stats.empirical_all())
        self.policy = self.plan.policy

    def episode(self, env, rng):
        traj = env.rollout_policy(self.policy, rng)[0]
        self.exo_stats.record_episode(traj.exo)
        self.episodes += 1
        if self.episodes % self.replan_every == 0:
            self._replan()
        return traj

    def behavior(self):
        return self.policy, 0.0

    def evaluate(self, env, rng, n):
        return _returns(env.rollout_policy(self.policy, rng, n))

    def dump(self, path):
        arrays = self.exo_stats.to_arrays()
        arrays["episodes"] = np.array([self.episodes], np.int64)
        binio.dump_arrays(path, "exo_stats", arrays)

    @classmethod
    def load(cls, path, known, replan_every=1):
        arrays = binio.load_arrays(path, "exo_stats")[1]
        state = cls(known, replan_every)
        state.exo_stats = ExoStatistics.from_arrays(arrays)
        state.episodes = int(arrays["episodes"][0])
        state._replan()
        return state


class UcbviState:
    """Optimistic planning on the unfactored empirical model with a Hoeffding-type bonus."""

    name = "ucbvi"

    def __init__(self, known, episodes, bonus_c=UCBVI_BONUS_C, delta=UCBVI_DELTA):
        if bonus_c < 0 or not 0 < delta < 1:
            raise ValueError("bonus constant must be >= 0 and delta in (0, 1)")
        H, S, A = known.horizon, known.n_states, known.n_actions
        self.known = known
        self.bonus_c = float(bonus_c)
        self.delta = float(delta)
        self.n_episodes = int(episodes)
        self.full_stats = FullStatistics(H, S, A)
        self.bonus_scale = self.bonus_c * H * math.sqrt(math.log(S * A * H * max(1, episodes) / delta))
        self.episodes = 0
        self._replan()

    def bonus(self, n):
        return self.bonus_scale / np.sqrt(np.maximum(1, n))

    def _replan(self):
        k = self.known
        H, S, A = k.horizon, k.n_states, k.n_actions
        V = np.zeros((H + 1, S))
        pi = np.empty((H, S), np.int32)
        empty = np.zeros(0, np.int64)
        zeros = np.zeros((S, A), np.int64)
        for h in range(H - 1, -1, -1):
            r, lg = k.reward.at(h), k.legal.at(h)
            if h == H - 1:
                kernels.ucbvi_step(r, zeros, empty, empty, empty, None, 1.0, 0.0, lg, V[h], pi[h])
            else:
                sa, sp, cnt = self.full_stats.coo(h)
                kernels.ucbvi_step(r, self.full_stats.n_sa[h], sa, sp, cnt, V[h + 1], float(H - h),
                                   self.bonus_scale, lg, V[h], pi[h])
        self.V = V
        self.policy = pi

    def episode(self, env, rng):
        traj = env.rollout_policy(self.policy, rng)[0]
        self.full_stats.record_episode(traj.states, traj.actions)
        self.episodes += 1
        self._replan()
        return traj

    def behavior(self):
        return self.policy, 0.0

    def evaluate(self, env, rng, n):
        return _returns(env.rollout_policy(self.policy, rng, n))

    def dump(self, path):
        arrays = self.full_stats.to_arrays()
        arrays["meta"] = np.array([self.episodes, self.n_episodes], np.int64)
        arrays["hyper"] = np.array([self.bonus_c, self.delta])
        binio.dump_arrays(path, "full_stats", arrays)

    @classmethod
    def load(cls, path, known):
        arrays = binio.load_arrays(path, "full_stats")[1]
        bonus_c, delta = arrays.pop("hyper")
        episodes, total = (int(x) for x in arrays.pop("meta"))
        state = cls(known, total, bonus_c, delta)
        state.full_stats = FullStatistics.from_arrays(arrays)
        state.episodes = episodes
        state._replan()
        return state


class _TableLearner:
    def _table_args(self):
        t = self.tables
        return t.slot, t.pool, t.used, t.defaults

    def greedy_policy(self):
        lg = self.known.legal
        return kernels.greedy_tables(self.tables.slot, self.tables.pool, lg.tables, lg.step_map,
                                     self.known.n_exogenous)

    def evaluate(self, env, rng, n):
        return _returns(env.rollout_tables(self.tables, rng, n))


class ExAqState(_TableLearner):
    """Counterfactual Q-learning: each visited (h, e) block is updated for every (c, a)."""

    name = "exaq"

    def __init__(self, known):
        self.known = known
        H = known.horizon
        self.tables = StepTables.optimistic(H, known.n_controllable, known.n_exogenous, known.n_actions)
        self.exo_stats = ExoStatistics(H, known.n_exogenous)
        self._known_arrays = known.arrays()
        self.episodes = 0

    def learn(self, traj):
        self.exo_stats.record_episode(traj.exo)
        self.tables.reserve(self.known.horizon)
        slot, pool, used, defaults = self._table_args()
        kernels.exaq_update(slot, pool, used, defaults, self.exo_stats.n,
                            np.ascontiguousarray(traj.states, np.int64), self._known_arrays,
                            self.known.n_exogenous)
        self.episodes += 1

    def episode(self, env, rng):
        traj = env.rollout_tables(self.tables, rng)[0]
        self.learn(traj)
        return traj

    def behavior(self):
        return self.greedy_policy(), 0.0

    def dump(self, path):
        arrays = self.tables.to_arrays()
        arrays.update(n=self.exo_stats.n, m=self.exo_stats.m,
                      episodes=np.array([self.episodes], np.int64))
        binio.dump_arrays(path, "exaq", arrays)

    @classmethod
    def load(cls, path, known):
        arrays = binio.load_arrays(path, "exaq")[1]
        state = cls(known)
        state.tables = StepTables.from_arrays(arrays)
        state.exo_stats = ExoStatistics.from_arrays(arrays)
        state.episodes = int(arrays["episodes"][0])
        return state


class QlState(_TableLearner):
    """Step-indexed tabular Q-learning with constant step size and ε-greedy exploration."""

    name = "ql"

    def __init__(self, known, alpha, eps_decay, eps_min=0.0, eps_start=1.0, decay="exp", init=0.0):
        if not 0 < alpha <= 1:
            raise ValueError("alpha must lie in (0, 1]")
        if not 0 <= eps_min <= eps_start <= 1:
            raise ValueError("need 0 <= eps_min <= eps_start <= 1")
        if decay not in ("exp", "mixed", "linear"):
            raise ValueError(f"unknown epsilon decay {decay!r}")
        if not 0 < eps_decay <= 1 and decay != "linear":
            raise ValueError("exponential decay factor must lie in (0, 1]")
        self.known = known
        self.alpha = float(alpha)
        self.eps = float(eps_start)
        self.eps_min = float(eps_min)
        self.eps_decay = float(eps_decay)
        self.decay = decay
        self.tables = StepTables(known.horizon, known.n_controllable, known.n_exogenous, known.n_actions, init)
        self.episodes = 0

    def _decay_eps(self):
        if self.decay == "linear":
            self.eps = max(self.eps_min, self.eps - self.eps_decay)
        else:
            # "mixed" is read as exponential decay that then holds at the floor
            self.eps = max(self.eps_min, self.eps * self.eps_decay)

    def learn(self, traj):
        self.tables.reserve(self.known.horizon)
        slot, pool, used, defaults = self._table_args()
        lg = self.known.legal
        kernels.ql_update(slot, pool, used, defaults, np.ascontiguousarray(traj.states, np.int64),
                          np.ascontiguousarray(traj.actions, np.int32),
                          np.ascontiguousarray(traj.rewards, np.float64), self.alpha, lg.tables, lg.step_map,
                          self.known.n_exogenous)
        self.episodes += 1
        self._decay_eps()

    def episode(self, env, rng):
        traj = env.rollout_tables(self.tables, rng, eps=self.eps)[0]
        self.learn(traj)
        return traj

    def behavior(self):
        return self.greedy_policy(), self.eps

    def dump(self, path):
        arrays = self.tables.to_arrays()
        arrays["episodes"] = np.array([self.episodes], np.int64)
        arrays["hyper"] = np.array([self.alpha, self.eps, self.eps_min, self.eps_decay])
        binio.dump_arrays(path, "ql", arrays)

    @classmethod
    def load(cls, path, known, decay="exp"):
        arrays = binio.load_arrays(path, "ql")[1]
        alpha, eps, eps_min, eps_decay = arrays["hyper"]
        state = cls(known, alpha, eps_decay, eps_min, eps_start=max(eps, eps_min), decay=decay)
        state.eps = float(eps)
        state.tables = StepTables.from_arrays(arrays)
        state.episodes = int(arrays["episodes"][0])
        return state


def exavi_episode(state, env, rng):
    return state.episode(env, rng), state


def ucbvi_episode(state, env, rng):
    return state.episode(env, rng), state


def exaq_episode(state, env, rng):
    return state.episode(env, rng), state


def ql_episode(state, env, rng):
    return state.episode(env, rng), state


class TwapState:
    """Fixed price-blind schedule; learns nothing."""

    name = "twap"

    def __init__(self, known, spec):
        self.known = known
        self.policy = twap_policy(spec)
        self.episodes = 0

    def episode(self, env, rng):
        self.episodes += 1
        return env.rollout_policy(self.policy, rng)[0]

    def behavior(self):
        return self.policy, 0.0

    def evaluate(self, env, rng, n):
        return _returns(env.rollout_policy(self.policy, rng, n))


def twap_policy(spec):
    """Policy table holding min(u, target_h) with target_h = round(u0 (H - h - 1) / H) at 0-based h."""
    from pcmdp.envs.trading import TradingSpec, twap_targets

    if not isinstance(spec, TradingSpec):
        raise TypeError("TWAP is defined for the trading environment only")
    n_c, n_e = spec.initial_inventory + 1, spec.price_levels
    u = np.repeat(np.arange(n_c, dtype=np.int32), n_e)
    return np.minimum(twap_targets(spec)[:, None], u[None, :]).astype(np.int32)


ALGORITHMS = ("exavi", "ucbvi", "exaq", "ql", "twap")
MODEL_BASED = ("exavi", "ucbvi")


def make_learner(algo, env, episodes, replan_every=1, **hyper):
    """Build a learner for ``env`` (a normalized GenerativeEnv)."""
    known = env.known()
    if algo == "exavi":
        return ExAviState(known, replan_every=replan_every)
    if algo == "ucbvi":
        return UcbviState(known, episodes, **hyper)
    if algo == "exaq":
        return ExAqState(known)
    if algo == "ql":
        params = dict(QL_DEFAULTS.get(env.name, QL_DEFAULTS["taxi"]))
        params.pop("episodes")
        params.update(hyper)
        return QlState(known, **params)
    if algo == "twap":
        return TwapState(known, env.spec)
    raise ValueError(f"unknown algorithm {algo!r}; choose from {', '.join(ALGORITHMS)}")
