"""Command line: run, aggregate, verify, scaling."""

from __future__ import annotations

import argparse
import sys

import numpy as np

from pcmdp import harness, oracle
from pcmdp.config import ExperimentConfig, config_from_ini, parse_grid, parse_seeds


def _parser():
    p = argparse.ArgumentParser(prog="pcmdp", description="Factored-MDP learners and benchmark harness.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="train one learner on one environment over several seeds")
    r.add_argument("--env")
    r.add_argument("--algo")
    r.add_argument("--episodes", type=int)
    r.add_argument("--seeds", type=parse_seeds)
    r.add_argument("--config", help="INI file with [env], [algo] and [run] sections")
    r.add_argument("--out", required=True)
    r.add_argument("--replan-every", type=int)
    r.add_argument("--desk-scale", action="store_true", default=None)
    r.add_argument("--eval-every", type=int)
    r.add_argument("--eval-episodes", type=int)
    r.add_argument("--regret", choices=("auto", "on", "off"))
    r.add_argument("--master-seed", type=int)
    r.add_argument("--workers", type=int)

    a = sub.add_parser("aggregate", help="mean and 95%% band per cadence point")
    a.add_argument("--in", dest="inp", required=True)
    a.add_argument("--out", required=True)

    v = sub.add_parser("verify", help="run the oracle and property checks")
    v.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("scaling", help="regret sweep over N and K on the lower-bound family")
    s.add_argument("--family", default="lower-bound", choices=("lower-bound",))
    s.add_argument("--N", dest="ns", type=parse_grid, default=(2, 4, 8))
    s.add_argument("--K", dest="ks", type=parse_grid, default=(1000, 2000, 4000, 8000, 16000))
    s.add_argument("--algos", default="exaq,ql")
    s.add_argument("--seeds", type=parse_seeds, default=tuple(range(1, 11)))
    s.add_argument("--gap-scale", type=float, default=1.0)
    s.add_argument("--out")
    return p


def _run(args):
    over = dict(env=args.env, algo=args.algo, episodes=args.episodes, seeds=args.seeds,
                replan_every=args.replan_every, desk_scale=args.desk_scale, eval_every=args.eval_every,
                eval_episodes=args.eval_episodes, regret=args.regret, master_seed=args.master_seed,
                workers=args.workers, out=args.out)
    if args.config:
        cfg = config_from_ini(args.config, **over)
    else:
        missing = [f"--{k}" for k in ("env", "algo", "episodes") if over[k] is None]
        if missing:
            raise ValueError(f"missing {', '.join(missing)} (or pass --config)")
        cfg = ExperimentConfig(**{k: v for k, v in over.items() if v is not None})
    records = harness.run_experiment(cfg)
    harness.emit_csv(records, args.out)
    print(f"wrote {len(records)} records to {args.out}")


def _aggregate(args):
    rows = harness.aggregate(harness.read_csv(args.inp))
    harness.emit_csv(rows, args.out)
    print(f"wrote {len(rows)} rows to {args.out}")


def verify_checks(seed=0):
    """(name, passed, detail) for a quick pass over the oracle suite."""
    rng = np.random.default_rng(seed)
    from pcmdp.core import value_iteration

    out = []
    gap = 0.0
    for _ in range(50):
        m = oracle.random_model(rng)
        gap = max(gap, float(np.abs(oracle.brute_force_optimal(m) - value_iteration(m).V[0]).max()))
    out.append(("brute force matches value iteration", gap <= 1e-9, f"max gap {gap:.2e}"))

    rates = all(oracle.check_learning_rates(h, 2000).ok for h in (1, 5, 10))
    out.append(("learning-rate identities", rates, "H in 1, 5, 10; t <= 2000"))

    rate = oracle.concentration_coverage((0.3, 0.7), 10_000, 0.05, 1000, rng)
    out.append(("per-entry envelope coverage", rate <= 0.06, f"violation rate {rate:.3f}"))

    fit = oracle.regret_slope([1e3, 2e3, 4e3, 8e3], [3 * k ** 0.5 for k in (1e3, 2e3, 4e3, 8e3)])
    out.append(("slope fit recovers 0.5", abs(fit.slope - 0.5) < 1e-6, f"slope {fit.slope:.8f}"))

    flagged = oracle.exogeneity_test(oracle.NonExogenousMock(), 0, 0, 2000, rng).rejects(1e-3)
    out.append(("planted action dependence is flagged", flagged, ""))

    worst = 0.0
    for _ in range(5):
        m = oracle.random_model(rng, 3, 3, 2, 3)
        f = rng.random(m.n_states)
        c, e, a = int(rng.integers(3)), int(rng.integers(3)), int(rng.integers(2))
        mean, se = oracle.counterfactual_mc(m, f, 0, c, e, a, 20_000, rng)
        exact = oracle.exact_factored_expectation(m, f, 0, c, e, a)
        worst = max(worst, abs(mean - exact) / max(se, 1e-12))
    out.append(("counterfactual target is unbiased", worst <= 4.0, f"max |z| {worst:.2f}"))
    return out


def _verify(args):
    ok = True
    for name, passed, detail in verify_checks(args.seed):
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name}  {detail}".rstrip())
    if not ok:
        raise RuntimeError("verification failed")


def _scaling(args):
    algos = tuple(a.strip() for a in args.algos.split(",") if a.strip())
    rows = harness.scaling_sweep(args.ns, args.ks, algos, args.seeds, args.gap_scale)
    if args.out:
        harness.emit_scaling_csv(rows, args.out)
    print(",".join(harness.SCALING_HEADER))
    for r in rows:
        print(",".join(harness._fmt(getattr(r, f)) for f in harness.SCALING_HEADER))


COMMANDS = {"run": _run, "aggregate": _aggregate, "verify": _verify, "scaling": _scaling}


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except (ValueError, OSError, RuntimeError, TypeError) as exc:
        print(f"pcmdp {args.command}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
