"""Factored finite-horizon model, exact planning, exact policy evaluation and regret.

Steps are 0-based throughout: ``h in range(H)``. Transitions exist for
``h < H - 1``; the last step only pays its reward.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from pcmdp import kernels

ROW_TOL = 1e-12
DEFAULT_DENSE_BUDGET = 2_000_000


class OracleError(RuntimeError):
    """An exact computation produced an impossible value."""


class BudgetError(ValueError):
    """A dense object would exceed the configured size budget."""


def _frozen(arr, dtype):
    out = np.ascontiguousarray(arr, dtype=dtype)
    if out is arr or np.may_share_memory(out, arr):
        out = out.copy()
    out.flags.writeable = False
    return out


def _check_map(step_map, length, n_tables, what):
    step_map = np.asarray(step_map, dtype=np.int32)
    if step_map.shape != (length,):
        raise ValueError(f"{what}: step map needs {length} entries, got shape {step_map.shape}")
    if length and (step_map.min() < 0 or step_map.max() >= n_tables):
        raise ValueError(f"{what}: step map points outside the {n_tables} stored tables")
    return step_map


@dataclass(frozen=True)
class StateFactorization:
    n_controllable: int
    n_exogenous: int

    def __post_init__(self):
        if self.n_controllable < 1 or self.n_exogenous < 1:
            raise ValueError("both factors need at least one state")

    @property
    def n_states(self):
        return self.n_controllable * self.n_exogenous

    def encode(self, c, e):
        if not (0 <= c < self.n_controllable and 0 <= e < self.n_exogenous):
            raise IndexError(f"factored state ({c}, {e}) out of range")
        return c * self.n_exogenous + e

    def decode(self, s):
        if not 0 <= s < self.n_states:
            raise IndexError(f"state {s} out of range")
        return divmod(int(s), self.n_exogenous)


class StepStack:
    """Per-step tables stored once per distinct table.

    ``tables[step_map[h]]`` is the table used at step ``h``.
    """

    def __init__(self, tables, step_map, dtype=np.float64, what="table"):
        self.tables = _frozen(tables, dtype)
        self.step_map = _frozen(_check_map(step_map, len(step_map), self.tables.shape[0], what), np.int32)

    @classmethod
    def stationary(cls, table, n_steps, dtype=np.float64, what="table"):
        return cls(np.asarray(table)[None], np.zeros(n_steps, dtype=np.int32), dtype, what)

    def at(self, h):
        return self.tables[self.step_map[h]]

    def __len__(self):
        return len(self.step_map)


class ControllableKernel:
    """Known controllable transitions p◇_h(c' | c, e, a) as padded sparse supports.

    ``idx``/``prob`` have shape ``(K, S, A, M)``; ``nnz[k, s, a]`` entries are live,
    the rest is padding with probability 0. ``step_map`` has ``H - 1`` entries.
    """

    def __init__(self, idx, prob, nnz, step_map, n_controllable):
        idx = np.asarray(idx)
        prob = np.asarray(prob, dtype=np.float64)
        nnz = np.asarray(nnz)
        if idx.shape != prob.shape or idx.ndim != 4 or nnz.shape != idx.shape[:3]:
            raise ValueError("controllable kernel arrays have inconsistent shapes")
        M = idx.shape[3]
        if nnz.min(initial=1) < 1 or nnz.max(initial=1) > M:
            raise ValueError("every support needs between 1 and M entries")
        live = np.arange(M) < nnz[..., None]
        if np.any(idx[live] < 0) or np.any(idx[live] >= n_controllable):
            raise ValueError("support index outside the controllable state range")
        if np.any(prob < 0) or np.any(prob[~live] != 0):
            raise ValueError("support probabilities must be nonnegative with zero padding")
        if M > 1 and np.any((np.diff(idx, axis=-1) <= 0) & live[..., 1:]):
            raise ValueError("support indices must be strictly increasing")
        if np.any(np.abs(prob.sum(axis=-1) - 1.0) > ROW_TOL):
            raise ValueError("controllable distributions must sum to 1")
        idx = np.where(live, idx, 0)
        self.n_controllable = int(n_controllable)
        self.idx = _frozen(idx, np.int32)
        self.prob = _frozen(prob, np.float64)
        self.nnz = _frozen(nnz, np.int32)
        self.step_map = _frozen(_check_map(step_map, len(step_map), idx.shape[0], "controllable"), np.int32)

    @classmethod
    def deterministic(cls, next_c, step_map, n_controllable):
        """Kernel with a single successor ``next_c[k, s, a]``."""
        next_c = np.asarray(next_c)
        return cls(next_c[..., None], np.ones(next_c.shape + (1,)), np.ones(next_c.shape, np.int32),
                   step_map, n_controllable)

    @classmethod
    def from_dense(cls, P, step_map):
        """Build from dense ``(K, S, A, n_controllable)`` probabilities."""
        P = np.asarray(P, dtype=np.float64)
        live = P > 0
        nnz = live.sum(axis=-1)
        M = max(int(nnz.max(initial=1)), 1)
        order = np.argsort(~live, axis=-1, kind="stable")[..., :M]
        prob = np.take_along_axis(P, order, axis=-1)
        pad = np.arange(M) >= nnz[..., None]
        prob = np.where(pad, 0.0, prob)
        return cls(order, prob, nnz, step_map, P.shape[-1])

    @property
    def n_steps(self):
        return len(self.step_map)

    def at(self, h):
        k = self.step_map[h]
        return self.idx[k], self.prob[k], self.nnz[k]

    def support(self, h, s, a):
        idx, prob, nnz = self.at(h)
        n = nnz[s, a]
        return idx[s, a, :n].copy(), prob[s, a, :n].copy()

    def dense(self, h):
        """Dense ``(S, A, n_controllable)`` matrix for step ``h``."""
        idx, prob, _ = self.at(h)
        S, A, M = idx.shape
        out = np.zeros((S, A, self.n_controllable))
        np.add.at(out, (np.arange(S)[:, None, None], np.arange(A)[None, :, None], idx), prob)
        return out


class ExogenousKernel:
    """Exogenous transitions p•_h(e' | e): dense row-stochastic matrices."""

    def __init__(self, matrices, step_map):
        m = np.asarray(matrices, dtype=np.float64)
        if m.ndim != 3 or m.shape[1] != m.shape[2]:
            raise ValueError("exogenous kernel needs shape (K, n_exo, n_exo)")
        if np.any(m < 0) or np.any(m > 1):
            raise ValueError("exogenous probabilities must lie in [0, 1]")
        if np.any(np.abs(m.sum(axis=-1) - 1.0) > ROW_TOL):
            raise ValueError("exogenous rows must sum to 1")
        self.matrices = _frozen(m, np.float64)
        self.step_map = _frozen(_check_map(step_map, len(step_map), m.shape[0], "exogenous"), np.int32)
        self.cdf = _frozen(sampling_cdf(m), np.float64)

    @classmethod
    def stationary(cls, matrix, horizon):
        return cls(np.asarray(matrix)[None], np.zeros(max(horizon - 1, 0), dtype=np.int32))

    @classmethod
    def per_step(cls, matrices):
        matrices = np.asarray(matrices)
        return cls(matrices, np.arange(matrices.shape[0], dtype=np.int32))

    @property
    def n_exogenous(self):
        return self.matrices.shape[1]

    def at(self, h):
        return self.matrices[self.step_map[h]]


def sampling_cdf(p):
    """Cumulative sums along the last axis, with the last live entry pinned to 1.0.

    Pinning keeps inverse-cdf sampling from ever landing on a zero-probability
    tail because of rounding.
    """
    p = np.asarray(p, dtype=np.float64)
    cdf = np.cumsum(p, axis=-1)
    n = p.shape[-1]
    last = n - 1 - np.argmax(p[..., ::-1] > 0, axis=-1)
    cdf[np.arange(n) >= last[..., None]] = 1.0
    return cdf


@dataclass(frozen=True, eq=False)
class FactoredModel:
    factorization: StateFactorization
    n_actions: int
    horizon: int
    controllable: ControllableKernel
    exogenous: ExogenousKernel
    reward: StepStack
    reward_bounds: tuple
    init_controllable: np.ndarray
    init_exogenous: np.ndarray
    legal: StepStack | None = None
    name: str = "model"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        f = self.factorization
        S, A, H = f.n_states, self.n_actions, self.horizon
        if H < 1 or A < 1:
            raise ValueError("horizon and action count must be positive")
        if self.controllable.n_controllable != f.n_controllable:
            raise ValueError("controllable kernel size does not match the factorization")
        if self.controllable.idx.shape[1:3] != (S, A):
            raise ValueError("controllable kernel must be indexed by (global state, action)")
        if self.controllable.n_steps != H - 1 or len(self.exogenous.step_map) != H - 1:
            raise ValueError("kernels need one entry per transition step (H - 1)")
        if self.exogenous.n_exogenous != f.n_exogenous:
            raise ValueError("exogenous kernel size does not match the factorization")
        if self.reward.tables.shape[1:] != (S, A) or len(self.reward) != H:
            raise ValueError("reward stack must hold (S, A) tables for H steps")
        lo, hi = self.reward_bounds
        if not (np.isfinite(lo) and np.isfinite(hi)) or lo > hi:
            raise ValueError("reward bounds must be finite with r_min <= r_max")
        tol = 1e-9 * max(1.0, abs(lo), abs(hi))
        if self.reward.tables.min() < lo - tol or self.reward.tables.max() > hi + tol:
            raise ValueError("reward entries fall outside the declared bounds")
        for name, p, n in (("controllable", self.init_controllable, f.n_controllable),
                           ("exogenous", self.init_exogenous, f.n_exogenous)):
            p = np.asarray(p)
            if p.shape != (n,) or np.any(p < 0) or abs(p.sum() - 1.0) > ROW_TOL:
                raise ValueError(f"initial {name} distribution is malformed")
        object.__setattr__(self, "init_controllable", _frozen(self.init_controllable, np.float64))
        object.__setattr__(self, "init_exogenous", _frozen(self.init_exogenous, np.float64))
        if self.legal is None:
            object.__setattr__(self, "legal", StepStack.stationary(np.ones((S, A)), H, np.uint8, "legal"))
        if self.legal.tables.shape[1:] != (S, A) or len(self.legal) != H:
            raise ValueError("legal-action stack must hold (S, A) masks for H steps")
        if np.any(self.legal.tables.max(axis=2) == 0):
            raise ValueError("every state needs at least one legal action")

    @property
    def n_states(self):
        return self.factorization.n_states

    @property
    def n_controllable(self):
        return self.factorization.n_controllable

    @property
    def n_exogenous(self):
        return self.factorization.n_exogenous

    def initial_distribution(self):
        return np.outer(self.init_controllable, self.init_exogenous).ravel()

    def reward_at(self, h, s, a):
        return float(self.reward.at(h)[s, a])

    def legal_actions(self, h, s):
        return np.flatnonzero(self.legal.at(h)[s])

    def sim_arrays(self):
        """Arrays consumed by the rollout kernels."""
        c = self.controllable
        return (c.idx, c.prob, c.nnz, c.step_map, self.exogenous.cdf, self.exogenous.step_map,
                self.reward.tables, self.reward.step_map, sampling_cdf(self.init_controllable),
                sampling_cdf(self.init_exogenous), self.n_exogenous)

    def known_arrays(self):
        """Arrays a learner may read: controllable kernel, rewards, legality. Never p•."""
        c = self.controllable
        return (c.idx, c.prob, c.nnz, c.step_map, self.reward.tables, self.reward.step_map,
                self.legal.tables, self.legal.step_map)

    def with_rewards(self, reward, bounds):
        return replace(self, reward=reward, reward_bounds=tuple(bounds))

    def with_exogenous(self, exogenous):
        return replace(self, exogenous=exogenous)


@dataclass(frozen=True)
class RewardAffine:
    """r' = (r - shift) / scale; ``degenerate`` marks constant-reward models."""

    shift: float
    scale: float
    degenerate: bool = False

    def to_raw(self, normalized):
        return np.asarray(normalized) * self.scale + self.shift

    def to_raw_return(self, normalized_return, n_steps):
        return normalized_return * self.scale + n_steps * self.shift


def normalize_rewards(model):
    """Map rewards affinely into [0, 1] using the model's analytic bounds."""
    lo, hi = (float(x) for x in model.reward_bounds)
    if hi <= lo:
        warnings.warn("degenerate reward bounds: rewards replaced by zeros", RuntimeWarning, stacklevel=2)
        zero = StepStack(np.zeros_like(model.reward.tables), model.reward.step_map)
        return model.with_rewards(zero, (0.0, 0.0)), RewardAffine(lo, 1.0, degenerate=True)
    scaled = np.clip((model.reward.tables - lo) / (hi - lo), 0.0, 1.0)
    return model.with_rewards(StepStack(scaled, model.reward.step_map), (0.0, 1.0)), RewardAffine(lo, hi - lo)


def compose_full_kernel(model, h, budget=DEFAULT_DENSE_BUDGET):
    """Dense ``(S, A, S)`` transition tensor for step ``h`` (small models only)."""
    S, A = model.n_states, model.n_actions
    if not 0 <= h < model.horizon - 1:
        raise IndexError(f"no transition at step {h} (horizon {model.horizon})")
    size = S * A * S
    if size > budget:
        raise BudgetError(f"dense kernel needs {size} entries ({S}x{A}x{S}), budget is {budget}")
    pc = model.controllable.dense(h)                   # (S, A, n_c)
    pe = model.exogenous.at(h)                          # (n_e, n_e)
    e_of_s = np.arange(S) % model.n_exogenous
    full = pc[:, :, :, None] * pe[e_of_s][:, None, None, :]
    return full.reshape(S, A, S)


def _next_weights(model, h, next_V, exo=None):
    """W[c', e] = sum_e' p•(e'|e) V(c', e')."""
    pe = model.exogenous.at(h) if exo is None else exo
    return np.ascontiguousarray(next_V.reshape(model.n_controllable, model.n_exogenous) @ pe.T)


def bellman_backup(model, h, next_V):
    """Q_h(s, a) = r_h(s, a) + sum_s' p_h(s'|s, a) next_V(s'), computed factored."""
    H = model.horizon
    if not 0 <= h < H:
        raise IndexError(f"step {h} outside [0, {H})")
    next_V = np.asarray(next_V, dtype=np.float64)
    S, A = model.n_states, model.n_actions
    Q = np.empty((S, A))
    V = np.empty(S)
    pi = np.empty(S, dtype=np.int32)
    if h == H - 1:
        if np.any(next_V != 0):
            raise ValueError("continuation after the last step must be zero")
        W, idx, prob, nnz = None, *_dummy_support(S, A)
    else:
        W = _next_weights(model, h, next_V)
        idx, prob, nnz = model.controllable.at(h)
    kernels.backup_step(model.reward.at(h), idx, prob, nnz, W, model.legal.at(h),
                        model.n_exogenous, V, pi, Q)
    return Q


def _dummy_support(S, A):
    return (np.zeros((S, A, 1), np.int32), np.zeros((S, A, 1)), np.zeros((S, A), np.int32))


@dataclass
class PlanResult:
    V: np.ndarray        # (H + 1, S), V[H] = 0
    policy: np.ndarray   # (H, S) int32
    Q: np.ndarray | None = None

    @property
    def V1(self):
        return self.V[0]


def backward_induction(model, exo_kernel=None, keep_q=False):
    """Optimal values and greedy policy; ``exo_kernel`` overrides p• (list of H-1 matrices)."""
    H, S, A = model.horizon, model.n_states, model.n_actions
    V = np.zeros((H + 1, S))
    pi = np.empty((H, S), dtype=np.int32)
    Q = np.empty((H, S, A)) if keep_q else None
    dummy = _dummy_support(S, A)
    for h in range(H - 1, -1, -1):
        if h == H - 1:
            W, (idx, prob, nnz) = None, dummy
        else:
            pe = None if exo_kernel is None else exo_kernel[h]
            W = _next_weights(model, h, V[h + 1], pe)
            idx, prob, nnz = model.controllable.at(h)
        kernels.backup_step(model.reward.at(h), idx, prob, nnz, W, model.legal.at(h), model.n_exogenous,
                            V[h], pi[h], None if Q is None else Q[h])
    return PlanResult(V, pi, Q)


def value_iteration(model, keep_q=True):
    """Exact finite-horizon optimal Q, V and greedy policy (ties to the lowest action)."""
    return backward_induction(model, keep_q=keep_q)


def evaluate_policy(model, policy, eps=0.0, exo_kernel=None):
    """Exact V^π for a deterministic policy table, or its ε-greedy wrapper when eps > 0."""
    H, S, A = model.horizon, model.n_states, model.n_actions
    policy = np.ascontiguousarray(policy, dtype=np.int32)
    if policy.shape != (H, S):
        raise ValueError(f"policy needs shape {(H, S)}")
    if policy.min() < 0 or policy.max() >= A:
        raise ValueError("policy actions out of range")
    V = np.zeros((H + 1, S))
    dummy = _dummy_support(S, A)
    for h in range(H - 1, -1, -1):
        if h == H - 1:
            W, (idx, prob, nnz) = None, dummy
        else:
            pe = None if exo_kernel is None else exo_kernel[h]
            W = _next_weights(model, h, V[h + 1], pe)
            idx, prob, nnz = model.controllable.at(h)
        kernels.policy_step(model.reward.at(h), idx, prob, nnz, W, model.legal.at(h), model.n_exogenous,
                            policy[h], float(eps), V[h])
    return V


@dataclass
class Trajectory:
    states: np.ndarray    # (H,) global indices
    actions: np.ndarray   # (H,)
    rewards: np.ndarray   # (H,) in the model's reward units
    n_exogenous: int

    @property
    def exo(self):
        return self.states % self.n_exogenous

    @property
    def ctrl(self):
        return self.states // self.n_exogenous

    @property
    def total(self):
        return float(self.rewards.sum())

    def transitions(self):
        """(state, action, reward, next_state) tuples; the last next_state is None."""
        nxt = list(self.states[1:]) + [None]
        return list(zip(self.states, self.actions, self.rewards, nxt))


def episode_uniforms(rng, horizon, n=None):
    shape = (horizon + 1, 4) if n is None else (n, horizon + 1, 4)
    return rng.random(shape)


def sample_episode(model, policy, rng):
    """Roll out a deterministic policy table; randomness comes only from ``rng``."""
    if hasattr(model, "model"):
        model = model.model
    policy = np.ascontiguousarray(policy, dtype=np.int32)
    u = episode_uniforms(rng, model.horizon)[None]
    states, actions, rewards = kernels.rollout_policy(policy, model.sim_arrays(), u)
    return Trajectory(states[0], actions[0], rewards[0], model.n_exogenous)


@dataclass
class RegretLedger:
    cumulative: float = 0.0
    episodes: int = 0
    increments: list = field(default_factory=list)
    tol: float = 1e-9

    def update(self, v_star, v_pi):
        return regret_update(self, v_star, v_pi)


def regret_update(ledger, v_star_at_s1, v_pi_at_s1):
    """Add V*_1(s1) - V^π_1(s1) to the ledger; a negative gap beyond tolerance is a bug."""
    inc = float(v_star_at_s1) - float(v_pi_at_s1)
    if inc < -ledger.tol * max(1.0, abs(float(v_star_at_s1))):
        raise OracleError(f"negative regret increment {inc:.3e}: policy value exceeds the optimum")
    inc = max(inc, 0.0)
    ledger.cumulative += inc
    ledger.episodes += 1
    ledger.increments.append(inc)
    return ledger.cumulative
