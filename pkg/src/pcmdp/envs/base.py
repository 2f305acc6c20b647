"""Generative interface over a factored model.

Learners get the controllable kernel, rewards and legality through
:meth:`GenerativeEnv.known`; the exogenous kernel stays behind ``step`` and
the rollout helpers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from pcmdp import kernels
from pcmdp.core import Trajectory, episode_uniforms, normalize_rewards
from pcmdp.core import DEFAULT_DENSE_BUDGET


@dataclass(frozen=True)
class KnownDynamics:
    """What a learner may read: sizes, p◇, rewards and legal actions."""

    n_controllable: int
    n_exogenous: int
    n_actions: int
    horizon: int
    controllable: object
    reward: object
    legal: object

    @property
    def n_states(self):
        return self.n_controllable * self.n_exogenous

    def arrays(self):
        c = self.controllable
        return (c.idx, c.prob, c.nnz, c.step_map, self.reward.tables, self.reward.step_map,
                self.legal.tables, self.legal.step_map)


class GenerativeEnv:
    def __init__(self, model, name=None, affine=None, spec=None):
        self.model = model
        self.name = name or model.name
        self.affine = affine
        self.spec = spec
        self._sim = model.sim_arrays()

    # sizes
    @property
    def factorization(self):
        return self.model.factorization

    @property
    def n_actions(self):
        return self.model.n_actions

    @property
    def horizon(self):
        return self.model.horizon

    @property
    def n_states(self):
        return self.model.n_states

    def known(self):
        m = self.model
        return KnownDynamics(m.n_controllable, m.n_exogenous, m.n_actions, m.horizon,
                             m.controllable, m.reward, m.legal)

    def normalized(self):
        """Same dynamics with rewards mapped into [0, 1]; ``affine`` maps back."""
        model, affine = normalize_rewards(self.model)
        return type(self)._wrap(self, model, affine)

    @classmethod
    def _wrap(cls, src, model, affine):
        env = GenerativeEnv.__new__(cls)
        env.__dict__.update(src.__dict__)
        env.model = model
        env.affine = affine
        env._sim = model.sim_arrays()
        return env

    def export_model(self, budget=DEFAULT_DENSE_BUDGET):
        if self.n_states > budget:
            raise ValueError(f"model export refused: {self.n_states} states exceed budget {budget}")
        return self.model

    # single-step interface
    def reset(self, rng):
        u = rng.random(2)
        c = int(np.searchsorted(self._sim[8], u[0], side="right"))
        e = int(np.searchsorted(self._sim[9], u[1], side="right"))
        return c * self.model.n_exogenous + e

    def controllable_support(self, h, s, a):
        return self.model.controllable.support(h, s, a)

    def reward_at(self, h, s, a):
        return self.model.reward_at(h, s, a)

    def legal_actions(self, h, s):
        return self.model.legal_actions(h, s)

    def step(self, state, action, rng, h=0):
        """Sample (next_state, reward) for step ``h``; the last step returns next_state None."""
        m = self.model
        if not m.legal.at(h)[state, action]:
            raise ValueError(f"action {action} is not legal in state {state} at step {h}")
        reward = m.reward_at(h, state, action)
        if h >= m.horizon - 1:
            return None, reward
        u = rng.random(2)
        idx, prob = m.controllable.support(h, state, action)
        j = int(np.searchsorted(np.cumsum(prob), u[0], side="right"))
        c = int(idx[min(j, len(idx) - 1)])
        e = state % m.n_exogenous
        e2 = int(np.searchsorted(m.exogenous.cdf[m.exogenous.step_map[h], e], u[1], side="right"))
        return c * m.n_exogenous + e2, reward

    # batched fast paths
    def _trajectories(self, out):
        states, actions, rewards = out
        n_exo = self.model.n_exogenous
        return [Trajectory(states[k], actions[k], rewards[k], n_exo) for k in range(len(states))]

    def rollout_policy(self, policy, rng, n=1):
        u = episode_uniforms(rng, self.horizon, n)
        return self._trajectories(kernels.rollout_policy(policy, self._sim, u))

    def rollout_tables(self, tables, rng, n=1, eps=0.0):
        u = episode_uniforms(rng, self.horizon, n)
        legal = self.model.legal
        out = kernels.rollout_tables(tables.slot, tables.pool, legal.tables, legal.step_map, float(eps),
                                     self._sim, u)
        return self._trajectories(out)
