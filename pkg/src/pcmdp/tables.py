"""Step-indexed Q tables with lazily allocated (step, exogenous state) blocks."""

import numpy as np


class StepTables:
    """Q_h(c, e, a) stored as dense ``(n_ctrl, A)`` blocks, one per visited (h, e).

    Blocks live in a growable pool; ``slot[h, e]`` is the pool row or -1.
    Unallocated entries read as ``defaults[h]``.
    """

    def __init__(self, horizon, n_ctrl, n_exo, n_actions, defaults, capacity=None):
        self.horizon = int(horizon)
        self.n_ctrl = int(n_ctrl)
        self.n_exo = int(n_exo)
        self.n_actions = int(n_actions)
        self.defaults = np.ascontiguousarray(np.broadcast_to(np.asarray(defaults, np.float64), (horizon,)))
        self.slot = np.full((horizon, n_exo), -1, dtype=np.int32)
        if capacity is None:
            capacity = min(horizon * n_exo, 4 * horizon)
        self.pool = np.empty((max(int(capacity), 1), n_ctrl, n_actions))
        self.used = np.zeros(1, dtype=np.int64)

    @classmethod
    def optimistic(cls, horizon, n_ctrl, n_exo, n_actions, **kw):
        """Defaults H - h (0-based h), the optimistic start for rewards in [0, 1]."""
        return cls(horizon, n_ctrl, n_exo, n_actions, horizon - np.arange(horizon, dtype=np.float64), **kw)

    @property
    def n_blocks(self):
        return int(self.used[0])

    def reserve(self, extra):
        """Make room for ``extra`` more blocks (kernels allocate without growing)."""
        need = min(int(self.used[0]) + int(extra), self.horizon * self.n_exo)
        if need <= self.pool.shape[0]:
            return
        cap = min(max(need, 2 * self.pool.shape[0]), self.horizon * self.n_exo)
        grown = np.empty((cap, self.n_ctrl, self.n_actions))
        grown[: self.n_blocks] = self.pool[: self.n_blocks]
        self.pool = grown

    def block(self, h, e):
        """The stored block or None when unallocated."""
        b = self.slot[h, e]
        return None if b < 0 else self.pool[b]

    def q_row(self, h, s):
        c, e = divmod(int(s), self.n_exo)
        b = self.slot[h, e]
        if b < 0:
            return np.full(self.n_actions, self.defaults[h])
        return self.pool[b, c].copy()

    def get(self, h, s, a):
        return float(self.q_row(h, s)[a])

    def value(self, h, s, legal_row=None):
        q = self.q_row(h, s)
        if legal_row is not None:
            q = np.where(np.asarray(legal_row, bool), q, -np.inf)
        return float(q.max())

    def dense(self, h):
        """Materialize Q_h as an ``(S, A)`` array (small models only)."""
        out = np.empty((self.n_ctrl, self.n_exo, self.n_actions))
        for e in range(self.n_exo):
            b = self.slot[h, e]
            out[:, e, :] = self.defaults[h] if b < 0 else self.pool[b]
        return out.reshape(self.n_ctrl * self.n_exo, self.n_actions)

    def copy(self):
        other = StepTables(self.horizon, self.n_ctrl, self.n_exo, self.n_actions, self.defaults,
                           capacity=self.pool.shape[0])
        other.slot[:] = self.slot
        other.pool[: self.n_blocks] = self.pool[: self.n_blocks]
        other.used[:] = self.used
        return other

    def to_arrays(self):
        n = self.n_blocks
        return {"defaults": self.defaults, "slot": self.slot, "pool": self.pool[:n].copy(),
                "shape": np.array([self.n_ctrl, self.n_actions], np.int64)}

    @classmethod
    def from_arrays(cls, arrays):
        pool = arrays["pool"]
        slot = arrays["slot"]
        H, n_exo = slot.shape
        n_ctrl, A = (int(x) for x in arrays["shape"])
        if pool.shape[1:] != (n_ctrl, A):
            raise ValueError("table blocks do not match the recorded shape")
        t = cls(H, n_ctrl, n_exo, A, arrays["defaults"], capacity=max(len(pool), 1))
        t.slot[:] = slot
        t.pool[: len(pool)] = pool
        t.used[0] = len(pool)
        return t
