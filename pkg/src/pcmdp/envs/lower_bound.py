"""Three-step tree instances where only the exogenous leaf decides the sign of the payoff.

Exogenous layout: 0 is the root, 1..N the middle states, and leaves
N + 1 + 2(i - 1) (type 1) and N + 2 + 2(i - 1) (type 2) below middle state i.
Controllable values {0, -1, +1} are stored as indices {0, 1, 2}; the action
taken at the middle step (0-based step 1) sets the controllable value seen at
the leaf, where the reward is +z at a type-1 leaf and -z at a type-2 leaf.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from pcmdp.core import (ControllableKernel, ExogenousKernel, FactoredModel, StateFactorization,
                        StepStack)
from pcmdp.envs.base import GenerativeEnv

CTRL_VALUES = np.array([0, -1, 1])
HORIZON = 3


@dataclass(frozen=True)
class LowerBoundSpec:
    p: tuple

    def __post_init__(self):
        p = tuple(float(x) for x in self.p)
        if len(p) < 1:
            raise ValueError("need at least one branch")
        if any(not 0.0 <= x <= 1.0 for x in p):
            raise ValueError("branch probabilities must lie in [0, 1]")
        object.__setattr__(self, "p", p)

    @property
    def n_branches(self):
        return len(self.p)

    @property
    def n_exogenous(self):
        return 3 * len(self.p) + 1


def hard_instance(n_branches, episodes, rng, scale=1.0):
    """Branch probabilities 1/2 +- scale * sqrt(N / K) with random signs."""
    gap = scale * np.sqrt(n_branches / episodes)
    if gap > 0.5:
        raise ValueError("gap exceeds 1/2; increase episodes or lower scale")
    signs = rng.choice([-1.0, 1.0], size=n_branches)
    return LowerBoundSpec(tuple(0.5 + signs * gap))


def leaf(i, kind, n):
    """Exogenous index of the type-``kind`` leaf under middle state i (1-based)."""
    return n + 1 + 2 * (i - 1) + (kind - 1)


def build_lower_bound(spec):
    N = spec.n_branches
    n_c, n_e, A, H = 3, spec.n_exogenous, 2, HORIZON
    S = n_c * n_e

    P = np.zeros((n_e, n_e))
    P[0, 1:N + 1] = 1.0 / N
    for i in range(1, N + 1):
        P[i, leaf(i, 1, N)] = spec.p[i - 1]
        P[i, leaf(i, 2, N)] = 1.0 - spec.p[i - 1]
    for j in range(N + 1, n_e):
        P[j, j] = 1.0

    next_c = np.zeros((S, A), np.int32)
    reward = np.zeros((S, A))
    for c in range(n_c):
        for e in range(n_e):
            s = c * n_e + e
            if 1 <= e <= N:
                next_c[s] = [1, 2]          # action 0 -> -1, action 1 -> +1
            elif e > N:
                next_c[s] = c
                sign = 1.0 if (e - N - 1) % 2 == 0 else -1.0
                reward[s] = sign * CTRL_VALUES[c]

    init_e = np.zeros(n_e)
    init_e[0] = 1.0
    model = FactoredModel(
        factorization=StateFactorization(n_c, n_e),
        n_actions=A,
        horizon=H,
        controllable=ControllableKernel.deterministic(next_c[None], np.zeros(H - 1, np.int32), n_c),
        exogenous=ExogenousKernel.stationary(P, H),
        reward=StepStack.stationary(reward, H),
        reward_bounds=(-1.0, 1.0),
        init_controllable=np.array([1.0, 0.0, 0.0]),
        init_exogenous=init_e,
        name="lower-bound",
    )
    return GenerativeEnv(model, name="lower-bound", spec=spec)
