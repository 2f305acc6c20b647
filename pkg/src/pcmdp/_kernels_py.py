"""Pure numpy implementation of the hot loops.

Every function here has a twin in ``_kernels_c.pyx`` with the same signature
and the same arithmetic order where it matters for sampling, so trajectories
drawn from the same uniforms agree across backends.

Array conventions shared by both backends:

* global state ``s = c * n_exo + e``
* per-step stacks are ``(K, ...)`` arrays plus an ``int32`` step map
* controllable supports are padded ``(S, A, M)`` index/prob arrays with a
  ``(S, A)`` count of live entries
* each episode consumes a ``(H + 1, 4)`` block of uniforms: row 0 draws the
  initial state, row ``h + 1`` holds (controllable draw, exogenous draw,
  epsilon test, random action) for step ``h``
"""

import numpy as np


def _sample_support(idx, prob, nnz, u):
    acc = np.cumsum(prob[:nnz])
    j = int(np.searchsorted(acc, u, side="right"))
    return int(idx[min(j, nnz - 1)])


def _sample_cdf(cdf, u):
    return int(np.searchsorted(cdf, u, side="right"))


def _gather(idx, prob, W, e_of_s):
    # W[idx, e] summed against prob; padding has prob 0
    return (prob * W[idx, e_of_s[:, None, None]]).sum(axis=-1)


def _masked(Q, legal):
    return np.where(legal.astype(bool), Q, -np.inf)


def backup_step(reward, idx, prob, nnz, W, legal, n_exo, V_out, pi_out, Q_out=None):
    S = reward.shape[0]
    if W is None:
        Q = reward.copy()
    else:
        e_of_s = np.arange(S) % n_exo
        Q = reward + _gather(idx, prob, W, e_of_s)
    M = _masked(Q, legal)
    pi = M.argmax(axis=1)
    pi_out[:] = pi
    V_out[:] = M[np.arange(S), pi]
    if Q_out is not None:
        Q_out[:] = Q


def policy_step(reward, idx, prob, nnz, W, legal, n_exo, pi, eps, V_out):
    S = reward.shape[0]
    rows = np.arange(S)
    if W is None:
        Q = reward
    else:
        e_of_s = rows % n_exo
        Q = reward + _gather(idx, prob, W, e_of_s)
    v = Q[rows, pi]
    if eps > 0.0:
        lg = legal.astype(bool)
        mean_legal = np.where(lg, Q, 0.0).sum(axis=1) / lg.sum(axis=1)
        v = (1.0 - eps) * v + eps * mean_legal
    V_out[:] = v


def ucbvi_step(reward, n_sa, sa, sp, cnt, V_next, clip, bonus_scale, legal, V_out, pi_out, Q_out=None):
    S, A = reward.shape
    if V_next is None:
        Q = np.minimum(clip, reward)
    else:
        pv = np.bincount(sa, weights=cnt * V_next[sp], minlength=S * A).reshape(S, A)
        n = np.maximum(n_sa, 1).astype(np.float64)
        Q = np.minimum(clip, reward + bonus_scale / np.sqrt(n) + pv / n)
    M = _masked(Q, legal)
    pi = M.argmax(axis=1)
    pi_out[:] = pi
    V_out[:] = M[np.arange(S), pi]
    if Q_out is not None:
        Q_out[:] = Q


def _legal_list(legal_row):
    return np.flatnonzero(legal_row)


def _pick(values, legal_row, eps, u_eps, u_act):
    allowed = _legal_list(legal_row)
    if eps > 0.0 and u_eps < eps:
        k = min(int(u_act * len(allowed)), len(allowed) - 1)
        return int(allowed[k])
    if values is None:
        return int(allowed[0])
    sub = values[allowed]
    return int(allowed[int(np.argmax(sub))])


def _run(choose, sim, u):
    (c_idx, c_prob, c_nnz, c_map, x_cdf, x_map, r_tab, r_map,
     init_c, init_e, n_exo) = sim
    n_ep, H1, _ = u.shape
    H = H1 - 1
    states = np.empty((n_ep, H), dtype=np.int64)
    actions = np.empty((n_ep, H), dtype=np.int32)
    rewards = np.empty((n_ep, H), dtype=np.float64)
    for k in range(n_ep):
        c = _sample_cdf(init_c, u[k, 0, 0])
        e = _sample_cdf(init_e, u[k, 0, 1])
        for h in range(H):
            s = c * n_exo + e
            a = choose(h, s, c, e, u[k, h + 1])
            states[k, h] = s
            actions[k, h] = a
            rewards[k, h] = r_tab[r_map[h], s, a]
            if h < H - 1:
                kc = c_map[h]
                c = _sample_support(c_idx[kc, s, a], c_prob[kc, s, a], c_nnz[kc, s, a], u[k, h + 1, 0])
                e = _sample_cdf(x_cdf[x_map[h], e], u[k, h + 1, 1])
    return states, actions, rewards


def rollout_policy(pi, sim, u):
    def choose(h, s, c, e, uh):
        return int(pi[h, s])
    return _run(choose, sim, u)


def rollout_tables(slot, pool, legal, l_map, eps, sim, u):
    def choose(h, s, c, e, uh):
        b = slot[h, e]
        values = None if b < 0 else pool[b, c]
        return _pick(values, legal[l_map[h], s], eps, uh[2], uh[3])
    return _run(choose, sim, u)


def _alloc(slot, pool, used, defaults, h, e):
    b = slot[h, e]
    if b < 0:
        b = int(used[0])
        if b >= pool.shape[0]:
            raise RuntimeError("table pool exhausted")
        used[0] += 1
        slot[h, e] = b
        pool[b] = defaults[h]
    return b


def _block_values(slot, pool, defaults, legal_tab, h, e, n_exo):
    # max over legal actions of Q_h(., e, .) for every controllable state
    b = slot[h, e]
    n_ctrl = pool.shape[1]
    rows = np.arange(n_ctrl) * n_exo + e
    lg = legal_tab[rows].astype(bool)
    if b < 0:
        return np.full(n_ctrl, defaults[h])
    return np.where(lg, pool[b], -np.inf).max(axis=1)


def exaq_update(slot, pool, used, defaults, counts, states, known, n_exo):
    c_idx, c_prob, c_nnz, c_map, r_tab, r_map, legal, l_map = known
    H = states.shape[0]
    n_ctrl = pool.shape[1]
    for h in range(H):
        e = int(states[h] % n_exo)
        t = int(counts[h, e])
        alpha = (H + 1.0) / (H + t)
        b = _alloc(slot, pool, used, defaults, h, e)
        rows = np.arange(n_ctrl) * n_exo + e
        w = r_tab[r_map[h]][rows].copy()
        if h < H - 1:
            e2 = int(states[h + 1] % n_exo)
            v_next = _block_values(slot, pool, defaults, legal[l_map[h + 1]], h + 1, e2, n_exo)
            kc = c_map[h]
            w += (c_prob[kc][rows] * v_next[c_idx[kc][rows]]).sum(axis=-1)
        pool[b] = (1.0 - alpha) * pool[b] + alpha * w


def ql_update(slot, pool, used, defaults, states, actions, rewards, alpha, legal, l_map, n_exo):
    H = states.shape[0]
    for h in range(H):
        s = int(states[h])
        c, e = divmod(s, n_exo)
        a = int(actions[h])
        target = rewards[h]
        if h < H - 1:
            s2 = int(states[h + 1])
            c2, e2 = divmod(s2, n_exo)
            b2 = slot[h + 1, e2]
            lg = legal[l_map[h + 1], s2].astype(bool)
            if b2 < 0:
                target += defaults[h + 1]
            else:
                target += pool[b2, c2][lg].max()
        b = _alloc(slot, pool, used, defaults, h, e)
        pool[b, c, a] = (1.0 - alpha) * pool[b, c, a] + alpha * target


def greedy_tables(slot, pool, legal, l_map, n_exo):
    H = slot.shape[0]
    n_ctrl = pool.shape[1]
    S = n_ctrl * n_exo
    pi = np.empty((H, S), dtype=np.int32)
    for h in range(H):
        lg = legal[l_map[h]].astype(bool)
        first_legal = lg.argmax(axis=1)
        pi[h] = first_legal
        for e in range(n_exo):
            b = slot[h, e]
            if b < 0:
                continue
            rows = np.arange(n_ctrl) * n_exo + e
            pi[h, rows] = np.where(lg[rows], pool[b], -np.inf).argmax(axis=1)
    return pi
