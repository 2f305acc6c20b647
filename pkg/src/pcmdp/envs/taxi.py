"""Taxi gridworld with stochastic traffic at choke points.

Controllable state (row, col, passenger, destination) with passenger in
0..3 (a corner) or 4 (riding). Exogenous state is the traffic bit-vector,
bit i set meaning choke point i is blocked this step.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from pcmdp.core import (ControllableKernel, ExogenousKernel, FactoredModel, StateFactorization,
                        StepStack)
from pcmdp.envs.base import GenerativeEnv

MAP = [
    "+---------+",
    "|R: | : :G|",
    "| : | : : |",
    "| : : : : |",
    "| | : | : |",
    "|Y| : |B: |",
    "+---------+",
]
CORNERS = ((0, 0), (0, 4), (4, 0), (4, 3))
SOUTH, NORTH, EAST, WEST, PICKUP, DROPOFF = range(6)
IN_TAXI = 4
REWARD_STEP, REWARD_ILLEGAL, REWARD_DELIVERY = -1.0, -10.0, 20.0


@dataclass(frozen=True)
class TaxiTrafficSpec:
    horizon: int = 200
    grid_size: int = 5
    traffic_locations: tuple = ((2, 1), (2, 2), (2, 3))
    traffic_prob: float = 0.3

    def __post_init__(self):
        if self.grid_size != 5:
            raise ValueError("only the classic 5x5 map is supported")
        if self.horizon < 1:
            raise ValueError("horizon must be positive")
        if not 0.0 <= self.traffic_prob <= 1.0:
            raise ValueError("traffic probability must lie in [0, 1]")
        cells = [tuple(c) for c in self.traffic_locations]
        if len(set(cells)) != len(cells):
            raise ValueError("duplicate traffic location")
        for r, c in cells:
            if not (0 <= r < 5 and 0 <= c < 5):
                raise ValueError(f"traffic location {(r, c)} lies outside the grid")
        object.__setattr__(self, "traffic_locations", tuple(cells))


def encode_ctrl(row, col, passenger, dest):
    return ((row * 5 + col) * 5 + passenger) * 4 + dest


def decode_ctrl(c):
    c, dest = divmod(c, 4)
    c, passenger = divmod(c, 5)
    row, col = divmod(c, 5)
    return row, col, passenger, dest


def _move(row, col, action):
    if action == SOUTH:
        return min(row + 1, 4), col
    if action == NORTH:
        return max(row - 1, 0), col
    if action == EAST and MAP[1 + row][2 * col + 2] == ":":
        return row, min(col + 1, 4)
    if action == WEST and MAP[1 + row][2 * col] == ":":
        return row, max(col - 1, 0)
    return row, col


def _new_jobs():
    return [(p, d) for p in range(4) for d in range(4) if p != d]


def build_taxi(spec=None):
    spec = spec or TaxiTrafficSpec()
    n_tr = len(spec.traffic_locations)
    n_c, n_e, A = 500, 2 ** n_tr, 6
    S = n_c * n_e
    blocked = np.array([[(e >> i) & 1 for i in range(n_tr)] for e in range(n_e)], dtype=bool)
    traffic_index = {cell: i for i, cell in enumerate(spec.traffic_locations)}
    jobs = _new_jobs()
    M = len(jobs)

    idx = np.zeros((S, A, M), np.int32)
    prob = np.zeros((S, A, M))
    nnz = np.ones((S, A), np.int32)
    reward = np.empty((S, A))
    for c in range(n_c):
        row, col, psg, dest = decode_ctrl(c)
        for e in range(n_e):
            s = c * n_e + e
            for a in range(A):
                succ, r = [c], REWARD_STEP
                if a < 4:
                    r2, c2 = _move(row, col, a)
                    i = traffic_index.get((r2, c2))
                    if (r2, c2) != (row, col) and i is not None and blocked[e, i]:
                        r2, c2 = row, col
                    succ = [encode_ctrl(r2, c2, psg, dest)]
                elif a == PICKUP:
                    if psg < 4 and (row, col) == CORNERS[psg]:
                        succ = [encode_ctrl(row, col, IN_TAXI, dest)]
                    else:
                        r = REWARD_ILLEGAL
                else:
                    here = CORNERS.index((row, col)) if (row, col) in CORNERS else None
                    if psg == IN_TAXI and here == dest:
                        r = REWARD_DELIVERY
                        succ = sorted(encode_ctrl(row, col, p, d) for p, d in jobs)
                    elif psg == IN_TAXI and here is not None:
                        succ = [encode_ctrl(row, col, here, dest)]
                    else:
                        r = REWARD_ILLEGAL
                k = len(succ)
                idx[s, a, :k] = succ
                prob[s, a, :k] = 1.0 / k
                nnz[s, a] = k
                reward[s, a] = r

    bits = np.array([[(e >> i) & 1 for i in range(n_tr)] for e in range(n_e)])
    p = spec.traffic_prob
    row_dist = np.prod(np.where(bits == 1, p, 1.0 - p), axis=1)
    H = spec.horizon

    init_c = np.zeros(n_c)
    for r in range(5):
        for col in range(5):
            for psg, dest in jobs:
                init_c[encode_ctrl(r, col, psg, dest)] = 1.0
    init_c /= init_c.sum()

    model = FactoredModel(
        factorization=StateFactorization(n_c, n_e),
        n_actions=A,
        horizon=H,
        controllable=ControllableKernel(idx[None], prob[None], nnz[None], np.zeros(H - 1, np.int32), n_c),
        exogenous=ExogenousKernel.stationary(np.tile(row_dist, (n_e, 1)), H),
        reward=StepStack.stationary(reward, H),
        reward_bounds=(REWARD_ILLEGAL, REWARD_DELIVERY),
        init_controllable=init_c,
        init_exogenous=row_dist,
        name="taxi",
    )
    return GenerativeEnv(model, name="taxi", spec=spec)
