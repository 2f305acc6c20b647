"""Independent checks: brute-force planning, Monte-Carlo expectations, coverage and slope fits."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2_contingency

from pcmdp.core import (BudgetError, ControllableKernel, ExogenousKernel, FactoredModel, StateFactorization,
                        StepStack, compose_full_kernel)
from pcmdp.estimation import alpha_weights, counterfactual_target, per_entry_bound

ENUMERATION_LIMIT = 10_000_000


# random instances

def random_model(rng, n_ctrl=None, n_exo=None, n_actions=None, horizon=None, max_sizes=(3, 3, 2, 3),
                 fixed_init=True, sparsity=0.3):
    """A random factored model; unspecified sizes are drawn up to ``max_sizes``.

    With ``fixed_init`` the initial distribution is a point mass, which keeps
    brute-force enumeration small.
    """
    mc, me, ma, mh = max_sizes
    n_c = n_ctrl or int(rng.integers(1, mc + 1))
    n_e = n_exo or int(rng.integers(1, me + 1))
    A = n_actions or int(rng.integers(1, ma + 1))
    H = horizon or int(rng.integers(1, mh + 1))
    S = n_c * n_e
    steps = max(H - 1, 0)

    def rows(shape, k):
        w = rng.random(shape + (k,))
        w[rng.random(shape + (k,)) < sparsity] = 0.0
        pick = rng.integers(0, k, size=shape)
        np.put_along_axis(w, pick[..., None], np.maximum(np.take_along_axis(w, pick[..., None], -1), 0.1), -1)
        return w / w.sum(axis=-1, keepdims=True)

    pc = rows((steps, S, A), n_c) if steps else np.zeros((0, S, A, n_c))
    pe = rows((steps, n_e), n_e) if steps else np.zeros((0, n_e, n_e))
    if steps:
        controllable = ControllableKernel.from_dense(pc, np.arange(steps, dtype=np.int32))
    else:
        controllable = ControllableKernel(np.zeros((1, S, A, 1), np.int32), np.ones((1, S, A, 1)),
                                          np.ones((1, S, A), np.int32), np.zeros(0, np.int32), n_c)
    exogenous = ExogenousKernel.per_step(pe) if steps else ExogenousKernel(np.eye(n_e)[None], np.zeros(0, np.int32))
    reward = rng.random((H, S, A))
    if fixed_init:
        init_c, init_e = np.eye(n_c)[rng.integers(n_c)], np.eye(n_e)[rng.integers(n_e)]
    else:
        init_c, init_e = rows((), n_c), rows((), n_e)
    return FactoredModel(
        factorization=StateFactorization(n_c, n_e),
        n_actions=A,
        horizon=H,
        controllable=controllable,
        exogenous=exogenous,
        reward=StepStack(reward, np.arange(H, dtype=np.int32)),
        reward_bounds=(0.0, 1.0),
        init_controllable=init_c,
        init_exogenous=init_e,
        name="random",
    )


# brute force

def _reachable(model, start):
    """States reachable at each step from ``start`` under any action sequence."""
    out = [np.array([start])]
    for h in range(model.horizon - 1):
        P = compose_full_kernel(model, h)
        nxt = P[out[-1]].sum(axis=(0, 1)) > 0
        out.append(np.flatnonzero(nxt))
    return out


def policy_count(model, start):
    reach = _reachable(model, start)
    total = 1
    for h, states in enumerate(reach):
        for s in states:
            total *= len(model.legal_actions(h, s))
    return total


def _combos(model, h, states):
    choices = [model.legal_actions(h, s) for s in states]
    return np.array(list(itertools.product(*choices)), dtype=np.int64).reshape(-1, len(states))


def brute_force_value(model, start, limit=ENUMERATION_LIMIT):
    """max over every deterministic step-dependent policy of its exact value from ``start``.

    Only actions at states reachable from ``start`` are enumerated (others
    cannot influence the value). All policy values are computed explicitly by
    forward propagation of the state distribution, one step at a time.
    """
    reach = _reachable(model, start)
    count = policy_count(model, start)
    if count > limit:
        raise BudgetError(f"{count} policies exceed the enumeration limit {limit}")
    S = model.n_states
    dist = np.zeros((1, S))
    dist[0, start] = 1.0
    value = np.zeros(1)
    for h, states in enumerate(reach):
        acts = _combos(model, h, states)                       # (C, |R|)
        r = model.reward.at(h)[states[None, :], acts]           # (C, |R|)
        d = dist[:, states]                                     # (P, |R|)
        value = (value[:, None] + d @ r.T).ravel()              # (P * C,)
        if h == model.horizon - 1:
            break
        P = compose_full_kernel(model, h)[states[None, :], acts]  # (C, |R|, S)
        dist = np.einsum("pi,cis->pcs", d, P).reshape(-1, S)
    return float(value.max())


def brute_force_optimal(model, starts=None, limit=ENUMERATION_LIMIT):
    """Optimal first-step value for each start state (default: every state)."""
    starts = range(model.n_states) if starts is None else starts
    return np.array([brute_force_value(model, s, limit) for s in starts])


# Monte-Carlo checks

def counterfactual_mc(model, f, h, c, e, a, n, rng):
    """Mean and standard error of the counterfactual target over ``n`` draws of e'."""
    exo = model.exogenous.at(h)[e]
    draws = rng.choice(model.n_exogenous, size=n, p=exo)
    per_exo = np.array([counterfactual_target(model.controllable, h, e2, f, c, e, a, model.horizon)
                        for e2 in range(model.n_exogenous)])
    vals = per_exo[draws]
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n))


def exact_factored_expectation(model, f, h, c, e, a):
    """sum_{c', e'} p◇(c'|c, e, a) p•(e'|e) f(c', e')."""
    s = c * model.n_exogenous + e
    idx, prob = model.controllable.support(h, s, a)
    F = np.asarray(f).reshape(model.n_controllable, model.n_exogenous)
    return float(prob @ F[idx] @ model.exogenous.at(h)[e])


# learning-rate identities

@dataclass(frozen=True)
class RateCheck:
    sum_to_one: bool
    inverse_sqrt_band: bool
    max_weight: bool
    square_sum: bool
    tail_sum: bool

    @property
    def ok(self):
        return all((self.sum_to_one, self.inverse_sqrt_band, self.max_weight, self.square_sum, self.tail_sum))


def check_learning_rates(horizon, t_max, tol=1e-12):
    """Check the weight identities of alpha_t = (H + 1)/(H + t) for every t <= t_max.

    Weights are built incrementally: alpha_t^i = alpha_{t-1}^i (1 - alpha_t),
    alpha_t^t = alpha_t. The tail sum over t >= i is checked as partial sums
    bounded by 1 + 1/H.
    """
    H = horizon
    w = np.zeros(t_max + 1)
    w[0] = 1.0
    tail = np.zeros(t_max + 1)
    inv_sqrt = 1.0 / np.sqrt(np.arange(1, t_max + 1))
    ok = dict(sum_to_one=True, inverse_sqrt_band=True, max_weight=True, square_sum=True, tail_sum=True)
    for t in range(1, t_max + 1):
        a = (H + 1.0) / (H + t)
        w[:t] *= 1.0 - a
        w[t] = a
        wt = w[1:t + 1]
        tail[1:t + 1] += wt
        if abs(w[:t + 1].sum() - 1.0) > 1e-9:
            ok["sum_to_one"] = False
        s = float(wt @ inv_sqrt[:t])
        if not (1.0 / math.sqrt(t) - tol <= s <= 2.0 / math.sqrt(t) + tol):
            ok["inverse_sqrt_band"] = False
        if wt.max() > 2.0 * H / t + tol:
            ok["max_weight"] = False
        if float(wt @ wt) > 2.0 * H / t + tol:
            ok["square_sum"] = False
    if tail[1:].max() > 1.0 + 1.0 / H + 1e-9:
        ok["tail_sum"] = False
    return RateCheck(**ok)


# concentration coverage

def concentration_coverage(p, n, delta, trials, rng, episodes=1):
    """Fraction of trials in which some entry of the count estimate leaves the per-entry envelope."""
    if trials < 100:
        raise ValueError("coverage needs at least 100 trials")
    p = np.asarray(p, dtype=np.float64)
    if delta >= 1.0:
        return 0.0  # the guarantee is vacuous at confidence 1 - delta <= 0
    bound = per_entry_bound(p, n, delta, n_outcomes=len(p), episodes=episodes)
    counts = rng.multinomial(n, p, size=trials)
    dev = np.abs(counts / n - p)
    return float(np.mean((dev > bound).any(axis=1)))


# exogeneity

@dataclass(frozen=True)
class ExogeneityResult:
    statistic: float
    p_value: float
    dof: int
    skipped: bool
    table: np.ndarray

    def rejects(self, alpha):
        return not self.skipped and self.p_value < alpha


def _pool_sparse_columns(table, min_expected=5.0):
    """Merge outcome columns whose smallest expected cell count is below ``min_expected``."""
    cols = table.sum(axis=0)
    expected = cols * table.sum(axis=1).min() / max(table.sum(), 1)
    sparse = expected < min_expected
    if not sparse.any():
        return table
    merged = table[:, sparse].sum(axis=1, keepdims=True)
    return np.concatenate([table[:, ~sparse], merged], axis=1)


def exogeneity_test(env, h, exo_state, samples_per_action, rng, ctrl_state=0):
    """Chi-square test of independence between the action and the next exogenous state."""
    if samples_per_action < 1000:
        raise ValueError("need at least 1000 samples per action")
    n_e = env.factorization.n_exogenous
    s = env.factorization.encode(ctrl_state, exo_state)
    actions = env.legal_actions(h, s)
    table = np.zeros((len(actions), n_e), dtype=np.int64)
    for i, a in enumerate(actions):
        for _ in range(samples_per_action):
            nxt, _ = env.step(s, int(a), rng, h)
            table[i, nxt % n_e] += 1
    table = _pool_sparse_columns(table[:, table.sum(axis=0) > 0])
    if table.shape[1] < 2 or table.shape[0] < 2:
        return ExogeneityResult(0.0, 1.0, 0, True, table)
    stat, p_value, dof, _ = chi2_contingency(table, correction=False)
    return ExogeneityResult(float(stat), float(p_value), int(dof), False, table)


class NonExogenousMock:
    """Two exogenous states whose next value copies the action with probability ``bias``."""

    def __init__(self, bias=0.8):
        self.factorization = StateFactorization(1, 2)
        self.bias = bias

    def legal_actions(self, h, s):
        return np.arange(2)

    def step(self, state, action, rng, h=0):
        e = action if rng.random() < self.bias else 1 - action
        return e, 0.0


class ExogenousMock(NonExogenousMock):
    """Same interface; the next exogenous state ignores the action."""

    def step(self, state, action, rng, h=0):
        return int(rng.random() < 0.5), 0.0


# slope fits

@dataclass(frozen=True)
class ScalingFit:
    log_k: np.ndarray
    log_r: np.ndarray
    slope: float
    intercept: float
    residual: float

    @property
    def constant(self):
        """c in R = c K^slope."""
        return math.exp(self.intercept)


def regret_slope(k_grid, regrets):
    k = np.asarray(k_grid, dtype=np.float64)
    r = np.asarray(regrets, dtype=np.float64)
    if k.shape != r.shape or len(k) < 4:
        raise ValueError("need at least 4 matching (K, regret) points")
    if np.any(np.diff(k) <= 0):
        raise ValueError("K values must be strictly increasing")
    if np.any(r <= 0) or np.any(k <= 0):
        raise ValueError("regrets and K must be positive for a log-log fit")
    x, y = np.log(k), np.log(r)
    X = np.stack([x, np.ones_like(x)], axis=1)
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = float(np.linalg.norm(X @ coef - y))
    return ScalingFit(x, y, float(coef[0]), float(coef[1]), resid)


def fixed_slope_constant(k_grid, regrets, slope=0.5):
    """Least-squares log c for R = c K^slope with the slope held fixed."""
    k = np.log(np.asarray(k_grid, dtype=np.float64))
    r = np.log(np.asarray(regrets, dtype=np.float64))
    return math.exp(float(np.mean(r - slope * k)))


def learning_rate_table(horizon, t):
    return alpha_weights(horizon, t)
