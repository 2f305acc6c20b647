"""Counts, empirical kernels, the counterfactual target and the learning-rate schedule."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from pcmdp import binio


class ExoStatistics:
    """Exogenous visit counts n_h(e) and transition counts m_h(e, e').

    ``n`` has one row per step (the last step counts visits only, which is
    what the model-free learning rate needs); ``m`` has one row per
    transition step.
    """

    def __init__(self, horizon, n_exo):
        self.horizon = int(horizon)
        self.n_exo = int(n_exo)
        self.n = np.zeros((horizon, n_exo), dtype=np.int64)
        self.m = np.zeros((max(horizon - 1, 0), n_exo, n_exo), dtype=np.int64)

    def record_episode(self, exo_path):
        """Record one episode's exogenous path (length H)."""
        exo_path = np.asarray(exo_path, dtype=np.int64)
        if exo_path.shape != (self.horizon,):
            raise ValueError(f"exogenous path needs {self.horizon} entries")
        if exo_path.min() < 0 or exo_path.max() >= self.n_exo:
            raise IndexError("exogenous state out of range")
        steps = np.arange(self.horizon)
        self.n[steps, exo_path] += 1
        if self.horizon > 1:
            self.m[steps[:-1], exo_path[:-1], exo_path[1:]] += 1

    def transition_counts_consistent(self):
        return bool(np.array_equal(self.m.sum(axis=2), self.n[:-1]))

    def empirical(self, h, e):
        return empirical_exo_kernel(self, h, e)

    def empirical_all(self):
        """Stack of p̂•_h for every transition step, with the uniform fallback for unvisited rows."""
        n = self.n[:-1, :, None].astype(np.float64)
        est = np.divide(self.m, n, out=np.full(self.m.shape, 1.0 / self.n_exo), where=n > 0)
        return est

    def unvisited(self, h):
        return np.flatnonzero(self.n[h] == 0)

    def to_arrays(self):
        return {"n": self.n, "m": self.m}

    @classmethod
    def from_arrays(cls, arrays):
        n, m = arrays["n"], arrays["m"]
        stats = cls(n.shape[0], n.shape[1])
        stats.n[:] = n
        stats.m[:] = m
        return stats

    def dump(self, path):
        binio.dump_arrays(path, "exo_stats", self.to_arrays())

    @classmethod
    def load(cls, path):
        return cls.from_arrays(binio.load_arrays(path, "exo_stats")[1])


def record_transition(stats, h, e, e_next):
    """n_h(e) += 1 and m_h(e, e_next) += 1 for a transition step ``h < H - 1``."""
    if not 0 <= h < stats.horizon - 1:
        raise IndexError(f"step {h} has no exogenous successor")
    if not (0 <= e < stats.n_exo and 0 <= e_next < stats.n_exo):
        raise IndexError("exogenous state out of range")
    stats.n[h, e] += 1
    stats.m[h, e, e_next] += 1
    return stats


@dataclass(frozen=True)
class ExoEstimate:
    probs: np.ndarray
    unvisited: bool = False


def empirical_exo_kernel(stats, h, e):
    """p̂(e' | e) = m_h(e, e') / n_h(e); uniform with ``unvisited=True`` when n_h(e) = 0."""
    if not 0 <= h < stats.horizon - 1:
        raise IndexError(f"step {h} has no exogenous successor")
    n = stats.n[h, e]
    if n == 0:
        return ExoEstimate(np.full(stats.n_exo, 1.0 / stats.n_exo), unvisited=True)
    return ExoEstimate(stats.m[h, e] / n)


class FullStatistics:
    """Counts for the unfactored estimator: dense n_h(s, a), sparse n_h(s, a, s').

    Successor counts are kept per step as append-only coordinate lists
    ``(s * A + a, s', count)`` indexed by a dict, which is what the planner
    consumes.
    """

    def __init__(self, horizon, n_states, n_actions):
        self.horizon = int(horizon)
        self.n_states = int(n_states)
        self.n_actions = int(n_actions)
        steps = max(horizon - 1, 0)
        self.n_sa = np.zeros((steps, n_states, n_actions), dtype=np.int64)
        self._index = [dict() for _ in range(steps)]
        self._sa = [np.zeros(16, np.int64) for _ in range(steps)]
        self._sp = [np.zeros(16, np.int64) for _ in range(steps)]
        self._cnt = [np.zeros(16, np.int64) for _ in range(steps)]
        self._len = np.zeros(steps, dtype=np.int64)

    def record(self, h, s, a, s_next):
        key = (int(s) * self.n_actions + int(a), int(s_next))
        self.n_sa[h, s, a] += 1
        pos = self._index[h].get(key)
        if pos is None:
            pos = int(self._len[h])
            if pos == len(self._sa[h]):
                for store in (self._sa, self._sp, self._cnt):
                    store[h] = np.concatenate([store[h], np.zeros_like(store[h])])
            self._index[h][key] = pos
            self._sa[h][pos], self._sp[h][pos] = key
            self._len[h] += 1
        self._cnt[h][pos] += 1

    def record_episode(self, states, actions):
        for h in range(self.horizon - 1):
            self.record(h, states[h], actions[h], states[h + 1])

    def coo(self, h):
        n = int(self._len[h])
        return self._sa[h][:n], self._sp[h][:n], self._cnt[h][:n]

    def count(self, h, s, a, s_next=None):
        if s_next is None:
            return int(self.n_sa[h, s, a])
        pos = self._index[h].get((int(s) * self.n_actions + int(a), int(s_next)))
        return 0 if pos is None else int(self._cnt[h][pos])

    def successor_sums_consistent(self):
        for h in range(self.horizon - 1):
            sa, _, cnt = self.coo(h)
            tot = np.bincount(sa, weights=cnt, minlength=self.n_states * self.n_actions)
            if not np.array_equal(tot.astype(np.int64), self.n_sa[h].ravel()):
                return False
        return True

    def to_arrays(self):
        out = {"n_sa": self.n_sa}
        for h in range(self.horizon - 1):
            sa, sp, cnt = self.coo(h)
            out[f"coo{h}"] = np.stack([sa, sp, cnt]) if len(sa) else np.zeros((3, 0), np.int64)
        return out

    @classmethod
    def from_arrays(cls, arrays):
        n_sa = arrays["n_sa"]
        steps, S, A = n_sa.shape
        stats = cls(steps + 1, S, A)
        stats.n_sa[:] = n_sa
        for h in range(steps):
            sa, sp, cnt = arrays[f"coo{h}"]
            for j in range(len(sa)):
                key = (int(sa[j]), int(sp[j]))
                pos = int(stats._len[h])
                if pos == len(stats._sa[h]):
                    for store in (stats._sa, stats._sp, stats._cnt):
                        store[h] = np.concatenate([store[h], np.zeros_like(store[h])])
                stats._index[h][key] = pos
                stats._sa[h][pos], stats._sp[h][pos], stats._cnt[h][pos] = sa[j], sp[j], cnt[j]
                stats._len[h] += 1
        return stats

    def dump(self, path):
        binio.dump_arrays(path, "full_stats", self.to_arrays())

    @classmethod
    def load(cls, path):
        return cls.from_arrays(binio.load_arrays(path, "full_stats")[1])


def empirical_full_kernel(stats, h, s, a):
    """p̂(s' | s, a) = n(s, a, s') / max(1, n(s, a)); all zeros when unvisited."""
    row = np.zeros(stats.n_states)
    sa, sp, cnt = stats.coo(h)
    sel = sa == int(s) * stats.n_actions + int(a)
    np.add.at(row, sp[sel], cnt[sel])
    return row / max(1, stats.count(h, s, a))


def counterfactual_target(controllable, h, exo_next, f, c, e, a, horizon=None):
    """sum_c' f(c', e_next) p◇_h(c' | c, e, a); zero after the last step.

    ``f`` is a value table over global states; ``horizon`` defaults to the
    kernel's transition count + 1.
    """
    H = controllable.n_steps + 1 if horizon is None else horizon
    if not 0 <= h < H:
        raise IndexError(f"step {h} outside [0, {H})")
    if h == H - 1:
        return 0.0
    f = np.asarray(f, dtype=np.float64)
    n_exo = f.shape[0] // controllable.n_controllable
    idx, prob = controllable.support(h, c * n_exo + e, a)
    return float(np.dot(prob, f[idx * n_exo + exo_next]))


@dataclass(frozen=True)
class LearningRateSchedule:
    """alpha_t = (H + 1) / (H + t)."""

    horizon: int

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be positive")

    def __call__(self, t):
        return learning_rate(self, t)


def learning_rate(schedule, t):
    if t < 1 or int(t) != t:
        raise ValueError("learning-rate index t must be a positive integer")
    H = schedule.horizon
    return (H + 1.0) / (H + t)


def alpha_weights(horizon, t):
    """alpha_t^i for i = 0..t, built by the forward recursion alpha_t^i = alpha_{t-1}^i (1 - alpha_t)."""
    w = np.zeros(t + 1)
    w[0] = 1.0
    for j in range(1, t + 1):
        a = (horizon + 1.0) / (horizon + j)
        w[:j] *= 1.0 - a
        w[j] = a
    return w


def bernstein_bound(variance_sum, bound_b, n=1, delta=0.05, mean=False):
    """sqrt(2 sigma^2 log(2/delta)) + (2B/3) log(2/delta); divided by n when ``mean``."""
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if variance_sum < 0 or bound_b <= 0:
        raise ValueError("variance sum must be >= 0 and B > 0")
    if n < 1:
        raise ValueError("n must be positive")
    log_term = math.log(2.0 / delta)
    val = math.sqrt(2.0 * variance_sum * log_term) + 2.0 * bound_b / 3.0 * log_term
    return val / n if mean else val


def per_entry_bound(p, n, delta, n_outcomes=None, episodes=1):
    """Envelope on |p̂ - p| for the count estimator, union-bounded over outcomes and episodes.

    sqrt(2 p (1 - p) L / n) + 4 L / (3 n) with L = log(2 K n_outcomes / delta).
    """
    p = np.asarray(p, dtype=np.float64)
    k = p.shape[-1] if n_outcomes is None else n_outcomes
    L = math.log(2.0 * episodes * k / delta)
    return np.sqrt(2.0 * p * (1.0 - p) * L / n) + 4.0 * L / (3.0 * n)
