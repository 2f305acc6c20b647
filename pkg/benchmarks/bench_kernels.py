"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--env elevator] [--repeat 3]

Each row is the best of ``--repeat`` runs. Both backends receive identical
inputs; the script checks their outputs agree before timing.
"""

import argparse
import time

import numpy as np

from pcmdp import kernels
from pcmdp.config import make_env
from pcmdp.core import _dummy_support, _next_weights, episode_uniforms
from pcmdp.tables import StepTables


def plan(mod, m):
    H, S, A = m.horizon, m.n_states, m.n_actions
    V = np.zeros((H + 1, S))
    pi = np.empty((H, S), np.int32)
    for h in range(H - 1, -1, -1):
        if h == H - 1:
            W, (idx, prob, nnz) = None, _dummy_support(S, A)
        else:
            W = _next_weights(m, h, V[h + 1])
            idx, prob, nnz = m.controllable.at(h)
        mod.backup_step(m.reward.at(h), idx, prob, nnz, W, m.legal.at(h), m.n_exogenous, V[h], pi[h])
    return V, pi


def rollouts(mod, m, pi, n=100):
    u = episode_uniforms(np.random.default_rng(0), m.horizon, n)
    return mod.rollout_policy(pi, m.sim_arrays(), u)


def learn(mod, env, rule, n=20):
    m = env.model
    H, n_c, n_e, A = m.horizon, m.n_controllable, m.n_exogenous, m.n_actions
    t = StepTables.optimistic(H, n_c, n_e, A) if rule == "exaq" else StepTables(H, n_c, n_e, A, 0.0)
    counts = np.zeros((H, n_e), np.int64)
    known = env.known().arrays()
    lg = m.legal
    r = np.random.default_rng(1)
    for _ in range(n):
        u = episode_uniforms(r, H, 1)
        eps = 0.3 if rule == "ql" else 0.0
        states, actions, rewards = mod.rollout_tables(t.slot, t.pool, lg.tables, lg.step_map, eps, m.sim_arrays(), u)
        t.reserve(H)
        if rule == "exaq":
            counts[np.arange(H), states[0] % n_e] += 1
            mod.exaq_update(t.slot, t.pool, t.used, t.defaults, counts, states[0], known, n_e)
        else:
            mod.ql_update(t.slot, t.pool, t.used, t.defaults, states[0], actions[0], rewards[0], 0.2,
                          lg.tables, lg.step_map, n_e)
    return t.pool[:t.n_blocks]


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - start)
    return min(times), out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--env", default="elevator", choices=("taxi", "elevator", "trading", "lower-bound"))
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)

    env = make_env(args.env, desk_scale=True, episodes=10_000).normalized()
    m = env.model
    backends = kernels.backends()
    pi = plan(backends["python"], m)[1]
    cases = {
        "backward induction": lambda mod: plan(mod, m)[0],
        "100 greedy rollouts": lambda mod: rollouts(mod, m, pi)[0],
        "20 ExAQ episodes": lambda mod: learn(mod, env, "exaq"),
        "20 QL episodes": lambda mod: learn(mod, env, "ql"),
    }
    print(f"env {args.env}: S={m.n_states} A={m.n_actions} H={m.horizon}; backends {', '.join(backends)}")
    print(f"{'case':<22}" + "".join(f"{name:>12}" for name in backends) + f"{'speedup':>10}")
    for case, fn in cases.items():
        times, outs = {}, {}
        for name, mod in backends.items():
            times[name], outs[name] = best_of(lambda: fn(mod), args.repeat)
        if len(outs) == 2:
            np.testing.assert_allclose(outs["python"], outs["cython"], atol=1e-9)
        speed = f"{times['python'] / times['cython']:>9.1f}x" if "cython" in times else f"{'-':>10}"
        print(f"{case:<22}" + "".join(f"{times[n] * 1000:>10.1f}ms" for n in backends) + speed)


if __name__ == "__main__":
    main()
