"""Optimal execution: liquidate an inventory against a random-walk price.

Controllable state is the inventory u, exogenous state the price index, and
the action is the next inventory level (a <= u, forced to 0 at the last step).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from pcmdp.core import (ControllableKernel, ExogenousKernel, FactoredModel, StateFactorization,
                        StepStack)
from pcmdp.envs.base import GenerativeEnv


@dataclass(frozen=True)
class TradingSpec:
    horizon: int = 200
    price_min: float = 90.0
    price_max: float = 110.0
    price_levels: int = 1000
    initial_price: float = 100.0
    volatility: float = 0.3
    drift: float = 0.0
    initial_inventory: int = 100
    risk_aversion: float = 100.0
    transaction_cost: float = 0.0625
    temp_impact: float = 2e-5
    interval: float = 1.0

    def __post_init__(self):
        if self.horizon < 1 or self.initial_inventory < 0 or self.price_levels < 2:
            raise ValueError("horizon, inventory and price grid must be nonempty")
        if not self.price_min <= self.initial_price <= self.price_max:
            raise ValueError("initial price must lie inside the price range")
        if self.volatility < 0 or self.interval <= 0:
            raise ValueError("volatility must be >= 0 and the interval positive")

    @classmethod
    def desk(cls, **overrides):
        """Small configuration with exact planning still cheap."""
        base = dict(horizon=50, price_levels=100, initial_inventory=20)
        base.update(overrides)
        return cls(**base)

    @property
    def is_full_scale(self):
        """True from 101 inventory levels x 1000 prices up; model-based planning is refused there."""
        return (self.initial_inventory + 1) * self.price_levels >= 101 * 1000

    def prices(self):
        return np.linspace(self.price_min, self.price_max, self.price_levels)

    @property
    def tick(self):
        return (self.price_max - self.price_min) / (self.price_levels - 1)


def price_kernel(spec):
    """Gaussian increments integrated over the cells around each grid price.

    Cell boundaries are midpoints between grid prices; the two end cells
    absorb the tails, which clamps the walk at the grid edges.
    """
    grid = spec.prices()
    mids = 0.5 * (grid[1:] + grid[:-1])
    mean = grid[:, None] + spec.drift * spec.interval
    sd = spec.volatility * np.sqrt(spec.interval)
    if sd == 0:
        P = np.zeros((len(grid), len(grid)))
        target = np.clip(np.searchsorted(mids, mean[:, 0], side="right"), 0, len(grid) - 1)
        P[np.arange(len(grid)), target] = 1.0
        return P
    cdf = ndtr((mids[None, :] - mean) / sd)
    upper = np.concatenate([cdf, np.ones((len(grid), 1))], axis=1)
    lower = np.concatenate([np.zeros((len(grid), 1)), cdf], axis=1)
    P = np.clip(upper - lower, 0.0, None)
    return P / P.sum(axis=1, keepdims=True)


def reward_terms(spec, u, price, a):
    """(revenue, execution cost, holding cost) for selling u - a at ``price``."""
    n = u - a
    revenue = n * price
    c_ex = spec.transaction_cost * np.abs(n) + spec.temp_impact / spec.interval * n * n
    c_hold = spec.risk_aversion * spec.interval * spec.volatility ** 2 * a * a
    return revenue, c_ex, c_hold


def build_trading(spec=None):
    spec = spec or TradingSpec()
    U, H = spec.initial_inventory, spec.horizon
    n_c, n_e, A = U + 1, spec.price_levels, U + 1
    S = n_c * n_e
    grid = spec.prices()

    u = np.repeat(np.arange(n_c), n_e)[:, None].astype(np.float64)   # (S, 1)
    price = np.tile(grid, n_c)[:, None]                                 # (S, 1)
    act = np.arange(A, dtype=np.float64)[None, :]                       # (1, A)
    legal = act <= u
    rev, c_ex, c_hold = reward_terms(spec, u, price, act)
    r = rev - c_ex - c_hold

    # bounds from the legal (u, a) pairs at the price extremes (reward is linear in price)
    uu, aa = np.meshgrid(np.arange(n_c, dtype=float), np.arange(A, dtype=float), indexing="ij")
    ok = aa <= uu
    ext = []
    for p in (grid[0], grid[-1]):
        rv, ce, ch = reward_terms(spec, uu, p, aa)
        ext.append((rv - ce - ch)[ok])
    r_min, r_max = float(min(e.min() for e in ext)), float(max(e.max() for e in ext))
    r = np.where(legal, r, r_min)

    last = np.zeros((S, A), np.uint8)
    last[:, 0] = 1
    legal_stack = StepStack(np.stack([legal.astype(np.uint8), last]),
                            np.r_[np.zeros(H - 1, np.int32), 1], np.uint8, "legal")

    next_c = np.broadcast_to(np.arange(A, dtype=np.int32), (S, A))
    init_e = np.zeros(n_e)
    init_e[int(np.argmin(np.abs(grid - spec.initial_price)))] = 1.0
    init_c = np.zeros(n_c)
    init_c[U] = 1.0

    model = FactoredModel(
        factorization=StateFactorization(n_c, n_e),
        n_actions=A,
        horizon=H,
        controllable=ControllableKernel.deterministic(next_c[None], np.zeros(H - 1, np.int32), n_c),
        exogenous=ExogenousKernel.stationary(price_kernel(spec), H),
        reward=StepStack.stationary(r, H),
        reward_bounds=(r_min, r_max),
        init_controllable=init_c,
        init_exogenous=init_e,
        legal=legal_stack,
        name="trading",
    )
    return GenerativeEnv(model, name="trading", spec=spec)


def twap_targets(spec):
    """Inventory to hold after acting at 0-based step h: round(u0 (H - h - 1) / H)."""
    H, U = spec.horizon, spec.initial_inventory
    steps = np.arange(H)
    return np.floor(U * (H - steps - 1) / H + 0.5).astype(np.int32)
