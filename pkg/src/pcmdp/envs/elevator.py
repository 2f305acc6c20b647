"""Single elevator, peak-down traffic towards floor 0.

Controllable state (floor, riders, queue per upper floor); exogenous state
is this step's arrival count per upper floor. Arrivals join the queues first
(excess beyond the cap is lost), then the action applies. The reward is
charged on the resulting state.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from pcmdp.core import (ControllableKernel, ExogenousKernel, FactoredModel, StateFactorization,
                        StepStack)
from pcmdp.envs.base import GenerativeEnv

UP, DOWN, OPEN = 0, 1, 2


@dataclass(frozen=True)
class ElevatorSpec:
    horizon: int = 300
    floors: int = 3
    capacity: int = 2
    max_queue: int = 2
    arrival_rates: tuple = (0.05, 0.2)
    max_batch: int = 2
    delivery_bonus: float = 10.0
    waiting_penalty: float = 1.0

    def __post_init__(self):
        if self.floors < 2 or self.capacity < 1 or self.max_queue < 0 or self.max_batch < 0:
            raise ValueError("elevator spec sizes are invalid")
        if len(self.arrival_rates) != self.floors - 1:
            raise ValueError("need one arrival rate per upper floor")
        if any(r < 0 for r in self.arrival_rates):
            raise ValueError("arrival rates must be nonnegative")
        object.__setattr__(self, "arrival_rates", tuple(float(r) for r in self.arrival_rates))


def arrival_pmf(rate, max_batch):
    """Poisson mass for j < max_batch, the remaining tail on max_batch."""
    p = np.array([math.exp(-rate) * rate ** j / math.factorial(j) for j in range(max_batch)])
    return np.append(p, max(0.0, 1.0 - p.sum()))


class _Layout:
    def __init__(self, spec):
        self.spec = spec
        self.up = spec.floors - 1
        self.q = spec.max_queue + 1
        self.n_c = spec.floors * (spec.capacity + 1) * self.q ** self.up
        self.n_e = (spec.max_batch + 1) ** self.up

    def encode(self, floor, riders, queues):
        c = floor * (self.spec.capacity + 1) + riders
        for w in queues:
            c = c * self.q + w
        return c

    def decode(self, c):
        queues = []
        for _ in range(self.up):
            c, w = divmod(c, self.q)
            queues.append(w)
        floor, riders = divmod(c, self.spec.capacity + 1)
        return floor, riders, tuple(reversed(queues))

    def decode_exo(self, e):
        k = []
        for _ in range(self.up):
            e, j = divmod(e, self.spec.max_batch + 1)
            k.append(j)
        return tuple(reversed(k))


def transition(spec, floor, riders, queues, arrivals, action):
    """Deterministic controllable step; returns (floor', riders', queues', reward)."""
    w = [min(q + k, spec.max_queue) for q, k in zip(queues, arrivals)]
    delivered = 0
    if action == UP:
        floor = min(floor + 1, spec.floors - 1)
    elif action == DOWN:
        floor = max(floor - 1, 0)
    elif floor > 0:
        board = min(w[floor - 1], spec.capacity - riders)
        riders += board
        w[floor - 1] -= board
    else:
        delivered = riders
        riders = 0
    reward = -spec.waiting_penalty * (sum(w) + riders)
    if riders == 0:
        reward += spec.delivery_bonus * delivered
    return floor, riders, tuple(w), reward


def build_elevator(spec=None):
    spec = spec or ElevatorSpec()
    lay = _Layout(spec)
    n_c, n_e, A, H = lay.n_c, lay.n_e, 3, spec.horizon
    S = n_c * n_e
    next_c = np.empty((S, A), np.int32)
    reward = np.empty((S, A))
    for c in range(n_c):
        floor, riders, queues = lay.decode(c)
        for e in range(n_e):
            arrivals = lay.decode_exo(e)
            for a in range(A):
                f2, r2, w2, rew = transition(spec, floor, riders, queues, arrivals, a)
                next_c[c * n_e + e, a] = lay.encode(f2, r2, w2)
                reward[c * n_e + e, a] = rew

    pmfs = [arrival_pmf(r, spec.max_batch) for r in spec.arrival_rates]
    row = np.array([math.prod(pmfs[i][k] for i, k in enumerate(lay.decode_exo(e))) for e in range(n_e)])
    row /= row.sum()
    r_max = spec.delivery_bonus * spec.capacity
    r_min = -spec.waiting_penalty * (spec.max_queue * lay.up + spec.capacity)
    init_c = np.zeros(n_c)
    init_c[lay.encode(0, 0, (0,) * lay.up)] = 1.0

    model = FactoredModel(
        factorization=StateFactorization(n_c, n_e),
        n_actions=A,
        horizon=H,
        controllable=ControllableKernel.deterministic(next_c[None], np.zeros(H - 1, np.int32), n_c),
        exogenous=ExogenousKernel.stationary(np.tile(row, (n_e, 1)), H),
        reward=StepStack.stationary(reward, H),
        reward_bounds=(min(r_min, float(reward.min())), max(r_max, float(reward.max()))),
        init_controllable=init_c,
        init_exogenous=row,
        name="elevator",
    )
    env = GenerativeEnv(model, name="elevator", spec=spec)
    env.layout = lay
    return env


def all_exo_states(spec):
    return list(itertools.product(range(spec.max_batch + 1), repeat=spec.floors - 1))
