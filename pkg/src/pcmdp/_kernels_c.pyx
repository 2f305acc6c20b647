# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled twins of the loops in ``_kernels_py``. Same signatures, same conventions."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, INFINITY

cnp.import_array()


cdef inline Py_ssize_t _sample_support(const int[::1] idx, const double[::1] prob, int nnz, double u) noexcept nogil:
    cdef double acc = 0.0
    cdef int m
    for m in range(nnz):
        acc = acc + prob[m]
        if u < acc:
            return idx[m]
    return idx[nnz - 1]


cdef inline Py_ssize_t _sample_cdf(const double[::1] cdf, double u) noexcept nogil:
    # first j with u < cdf[j]; the last live entry of every cdf row is exactly 1.0
    cdef Py_ssize_t lo = 0, hi = cdf.shape[0], mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if u < cdf[mid]:
            hi = mid
        else:
            lo = mid + 1
    return lo


def backup_step(const double[:, ::1] reward, const int[:, :, ::1] idx, const double[:, :, ::1] prob,
                const int[:, ::1] nnz, W, const unsigned char[:, ::1] legal, Py_ssize_t n_exo,
                double[::1] V_out, int[::1] pi_out, Q_out=None):
    cdef Py_ssize_t S = reward.shape[0], A = reward.shape[1]
    cdef Py_ssize_t s, a, e, m, best_a
    cdef double q, best, acc
    cdef bint has_w = W is not None
    cdef bint has_q = Q_out is not None
    cdef const double[:, ::1] Wv
    cdef double[:, ::1] Qv
    if has_w:
        Wv = W
    if has_q:
        Qv = Q_out
    with nogil:
        for s in range(S):
            e = s % n_exo
            best = -INFINITY
            best_a = -1
            for a in range(A):
                q = reward[s, a]
                if has_w:
                    acc = 0.0
                    for m in range(nnz[s, a]):
                        acc = acc + prob[s, a, m] * Wv[idx[s, a, m], e]
                    q = q + acc
                if has_q:
                    Qv[s, a] = q
                if legal[s, a] and q > best:
                    best = q
                    best_a = a
            V_out[s] = best
            pi_out[s] = <int>best_a


def policy_step(const double[:, ::1] reward, const int[:, :, ::1] idx, const double[:, :, ::1] prob,
                const int[:, ::1] nnz, W, const unsigned char[:, ::1] legal, Py_ssize_t n_exo,
                const int[::1] pi, double eps, double[::1] V_out):
    cdef Py_ssize_t S = reward.shape[0], A = reward.shape[1]
    cdef Py_ssize_t s, a, e, m, n_legal
    cdef double q, acc, v, tot
    cdef bint has_w = W is not None
    cdef const double[:, ::1] Wv
    if has_w:
        Wv = W
    with nogil:
        for s in range(S):
            e = s % n_exo
            v = 0.0
            tot = 0.0
            n_legal = 0
            for a in range(A):
                if a != pi[s] and (eps <= 0.0 or not legal[s, a]):
                    continue
                q = reward[s, a]
                if has_w:
                    acc = 0.0
                    for m in range(nnz[s, a]):
                        acc = acc + prob[s, a, m] * Wv[idx[s, a, m], e]
                    q = q + acc
                if a == pi[s]:
                    v = q
                if legal[s, a]:
                    tot = tot + q
                    n_legal = n_legal + 1
            if eps > 0.0:
                v = (1.0 - eps) * v + eps * (tot / n_legal)
            V_out[s] = v


def ucbvi_step(const double[:, ::1] reward, const long long[:, ::1] n_sa, const long long[::1] sa,
               const long long[::1] sp, const long long[::1] cnt, V_next, double clip, double bonus_scale,
               const unsigned char[:, ::1] legal, double[::1] V_out, int[::1] pi_out, Q_out=None):
    cdef Py_ssize_t S = reward.shape[0], A = reward.shape[1]
    cdef Py_ssize_t s, a, j, best_a, nnz = sa.shape[0]
    cdef double q, best, n
    cdef bint has_v = V_next is not None
    cdef bint has_q = Q_out is not None
    cdef const double[::1] Vn
    cdef double[:, ::1] Qv
    cdef double[:, ::1] pv = np.zeros((S, A), dtype=np.float64)
    if has_v:
        Vn = V_next
    if has_q:
        Qv = Q_out
    with nogil:
        if has_v:
            for j in range(nnz):
                pv[sa[j] // A, sa[j] % A] += cnt[j] * Vn[sp[j]]
        for s in range(S):
            best = -INFINITY
            best_a = -1
            for a in range(A):
                if has_v:
                    n = <double>n_sa[s, a]
                    if n < 1.0:
                        n = 1.0
                    q = reward[s, a] + bonus_scale / sqrt(n) + pv[s, a] / n
                else:
                    q = reward[s, a]
                if q > clip:
                    q = clip
                if has_q:
                    Qv[s, a] = q
                if legal[s, a] and q > best:
                    best = q
                    best_a = a
            V_out[s] = best
            pi_out[s] = <int>best_a


cdef int _pick(const double[:, :, ::1] pool, Py_ssize_t b, Py_ssize_t c,
               const unsigned char[::1] legal_row, double eps, double u_eps, double u_act) noexcept nogil:
    cdef Py_ssize_t A = legal_row.shape[0], a, k, n_legal = 0
    cdef int best_a = -1
    cdef double best = -INFINITY
    if eps > 0.0 and u_eps < eps:
        for a in range(A):
            if legal_row[a]:
                n_legal += 1
        k = <Py_ssize_t>(u_act * n_legal)
        if k > n_legal - 1:
            k = n_legal - 1
        for a in range(A):
            if legal_row[a]:
                if k == 0:
                    return <int>a
                k -= 1
    for a in range(A):
        if legal_row[a]:
            if b < 0:
                return <int>a
            if pool[b, c, a] > best:
                best = pool[b, c, a]
                best_a = <int>a
    return best_a


cdef void _run(int mode, const int[:, ::1] pi, const int[:, ::1] slot, const double[:, :, ::1] pool,
               const unsigned char[:, :, ::1] legal, const int[::1] l_map, double eps,
               const int[:, :, :, ::1] c_idx, const double[:, :, :, ::1] c_prob, const int[:, :, ::1] c_nnz,
               const int[::1] c_map, const double[:, :, ::1] x_cdf, const int[::1] x_map,
               const double[:, :, ::1] r_tab, const int[::1] r_map, const double[::1] init_c,
               const double[::1] init_e, Py_ssize_t n_exo, const double[:, :, ::1] u,
               long long[:, ::1] states, int[:, ::1] actions, double[:, ::1] rewards) noexcept nogil:
    cdef Py_ssize_t n_ep = u.shape[0], H = u.shape[1] - 1
    cdef Py_ssize_t k, h, c, e, s, kc
    cdef int a
    for k in range(n_ep):
        c = _sample_cdf(init_c, u[k, 0, 0])
        e = _sample_cdf(init_e, u[k, 0, 1])
        for h in range(H):
            s = c * n_exo + e
            if mode == 0:
                a = pi[h, s]
            else:
                a = _pick(pool, slot[h, e], c, legal[l_map[h], s], eps, u[k, h + 1, 2], u[k, h + 1, 3])
            states[k, h] = s
            actions[k, h] = a
            rewards[k, h] = r_tab[r_map[h], s, a]
            if h < H - 1:
                kc = c_map[h]
                c = _sample_support(c_idx[kc, s, a], c_prob[kc, s, a], c_nnz[kc, s, a], u[k, h + 1, 0])
                e = _sample_cdf(x_cdf[x_map[h], e], u[k, h + 1, 1])


def _outputs(u):
    n_ep, H1 = u.shape[0], u.shape[1]
    return (np.empty((n_ep, H1 - 1), dtype=np.int64), np.empty((n_ep, H1 - 1), dtype=np.int32),
            np.empty((n_ep, H1 - 1), dtype=np.float64))


def rollout_policy(pi, sim, u):
    c_idx, c_prob, c_nnz, c_map, x_cdf, x_map, r_tab, r_map, init_c, init_e, n_exo = sim
    states, actions, rewards = _outputs(u)
    cdef int[:, ::1] dummy_slot = np.zeros((1, 1), dtype=np.int32)
    cdef double[:, :, ::1] dummy_pool = np.zeros((1, 1, 1))
    cdef unsigned char[:, :, ::1] dummy_legal = np.ones((1, 1, 1), dtype=np.uint8)
    cdef int[::1] dummy_map = np.zeros(1, dtype=np.int32)
    _run(0, pi, dummy_slot, dummy_pool, dummy_legal, dummy_map, 0.0, c_idx, c_prob, c_nnz, c_map,
         x_cdf, x_map, r_tab, r_map, init_c, init_e, n_exo, u, states, actions, rewards)
    return states, actions, rewards


def rollout_tables(slot, pool, legal, l_map, double eps, sim, u):
    c_idx, c_prob, c_nnz, c_map, x_cdf, x_map, r_tab, r_map, init_c, init_e, n_exo = sim
    states, actions, rewards = _outputs(u)
    cdef int[:, ::1] dummy_pi = np.zeros((1, 1), dtype=np.int32)
    _run(1, dummy_pi, slot, pool, legal, l_map, eps, c_idx, c_prob, c_nnz, c_map,
         x_cdf, x_map, r_tab, r_map, init_c, init_e, n_exo, u, states, actions, rewards)
    return states, actions, rewards


cdef Py_ssize_t _alloc(int[:, ::1] slot, double[:, :, ::1] pool, long long[::1] used,
                       const double[::1] defaults, Py_ssize_t h, Py_ssize_t e) except -1:
    cdef Py_ssize_t b = slot[h, e], c, a
    if b < 0:
        b = used[0]
        if b >= pool.shape[0]:
            raise RuntimeError("table pool exhausted")
        used[0] += 1
        slot[h, e] = <int>b
        for c in range(pool.shape[1]):
            for a in range(pool.shape[2]):
                pool[b, c, a] = defaults[h]
    return b


def exaq_update(int[:, ::1] slot, double[:, :, ::1] pool, long long[::1] used, const double[::1] defaults,
                const long long[:, ::1] counts, const long long[::1] states, known, Py_ssize_t n_exo):
    c_idx_o, c_prob_o, c_nnz_o, c_map_o, r_tab_o, r_map_o, legal_o, l_map_o = known
    cdef const int[:, :, :, ::1] c_idx = c_idx_o
    cdef const double[:, :, :, ::1] c_prob = c_prob_o
    cdef const int[:, :, ::1] c_nnz = c_nnz_o
    cdef const int[::1] c_map = c_map_o
    cdef const double[:, :, ::1] r_tab = r_tab_o
    cdef const int[::1] r_map = r_map_o
    cdef const unsigned char[:, :, ::1] legal = legal_o
    cdef const int[::1] l_map = l_map_o
    cdef Py_ssize_t H = states.shape[0], n_ctrl = pool.shape[1], A = pool.shape[2]
    cdef Py_ssize_t h, e, e2, b, b2, c, a, m, s, s2, kc, kr, kl
    cdef double alpha, w, acc, best
    cdef double[::1] v_next = np.empty(n_ctrl, dtype=np.float64)
    for h in range(H):
        e = states[h] % n_exo
        alpha = (H + 1.0) / (H + counts[h, e])
        b = _alloc(slot, pool, used, defaults, h, e)
        with nogil:
            if h < H - 1:
                e2 = states[h + 1] % n_exo
                b2 = slot[h + 1, e2]
                kl = l_map[h + 1]
                for c in range(n_ctrl):
                    if b2 < 0:
                        v_next[c] = defaults[h + 1]
                        continue
                    s2 = c * n_exo + e2
                    best = -INFINITY
                    for a in range(A):
                        if legal[kl, s2, a] and pool[b2, c, a] > best:
                            best = pool[b2, c, a]
                    v_next[c] = best
            kr = r_map[h]
            kc = c_map[h] if h < H - 1 else 0
            for c in range(n_ctrl):
                s = c * n_exo + e
                for a in range(A):
                    w = r_tab[kr, s, a]
                    if h < H - 1:
                        acc = 0.0
                        for m in range(c_nnz[kc, s, a]):
                            acc = acc + c_prob[kc, s, a, m] * v_next[c_idx[kc, s, a, m]]
                        w = w + acc
                    pool[b, c, a] = (1.0 - alpha) * pool[b, c, a] + alpha * w


def ql_update(int[:, ::1] slot, double[:, :, ::1] pool, long long[::1] used, const double[::1] defaults,
              const long long[::1] states, const int[::1] actions, const double[::1] rewards, double alpha,
              const unsigned char[:, :, ::1] legal, const int[::1] l_map, Py_ssize_t n_exo):
    cdef Py_ssize_t H = states.shape[0], A = pool.shape[2]
    cdef Py_ssize_t h, s, c, e, s2, c2, e2, b, b2, a, kl
    cdef double target, best
    for h in range(H):
        s = states[h]
        c = s // n_exo
        e = s % n_exo
        target = rewards[h]
        if h < H - 1:
            s2 = states[h + 1]
            c2 = s2 // n_exo
            e2 = s2 % n_exo
            b2 = slot[h + 1, e2]
            if b2 < 0:
                target = target + defaults[h + 1]
            else:
                kl = l_map[h + 1]
                best = -INFINITY
                for a in range(A):
                    if legal[kl, s2, a] and pool[b2, c2, a] > best:
                        best = pool[b2, c2, a]
                target = target + best
        b = _alloc(slot, pool, used, defaults, h, e)
        a = actions[h]
        pool[b, c, a] = (1.0 - alpha) * pool[b, c, a] + alpha * target


def greedy_tables(const int[:, ::1] slot, const double[:, :, ::1] pool, const unsigned char[:, :, ::1] legal,
                  const int[::1] l_map, Py_ssize_t n_exo):
    cdef Py_ssize_t H = slot.shape[0], n_ctrl = pool.shape[1], A = pool.shape[2]
    cdef Py_ssize_t h, c, e, s, a, b, kl
    cdef int best_a
    cdef double best
    out = np.empty((H, n_ctrl * n_exo), dtype=np.int32)
    cdef int[:, ::1] pi = out
    with nogil:
        for h in range(H):
            kl = l_map[h]
            for e in range(n_exo):
                b = slot[h, e]
                for c in range(n_ctrl):
                    s = c * n_exo + e
                    best = -INFINITY
                    best_a = -1
                    for a in range(A):
                        if not legal[kl, s, a]:
                            continue
                        if b < 0:
                            best_a = <int>a
                            break
                        if pool[b, c, a] > best:
                            best = pool[b, c, a]
                            best_a = <int>a
                    pi[h, s] = best_a
    return out
