"""Multi-seed experiment runs, CSV emission, confidence bands and the scaling sweep."""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from pcmdp.algorithms import MODEL_BASED, make_learner
from pcmdp.config import ExperimentConfig, make_env, resolve_workers
from pcmdp.core import RegretLedger, backward_induction, evaluate_policy, regret_update
from pcmdp.oracle import regret_slope

RAW_HEADER = ("env", "algo", "seed", "episode", "train_return", "eval_return", "cum_regret", "wall_ms")
AGG_HEADER = ("env", "algo", "episode", "n_seeds", "mean_eval", "ci_low", "ci_high")
SCALING_HEADER = ("algo", "N", "K", "n_seeds", "mean_regret", "slope", "intercept")
REGRET_AUTO_LIMIT = 2_500_000   # S * A * H


@dataclass(frozen=True)
class RunRecord:
    env: str
    algo: str
    seed: int
    episode: int
    train_return: float
    eval_return: float | None
    cum_regret: float | None
    wall_ms: float


@dataclass(frozen=True)
class AggregateRow:
    env: str
    algo: str
    episode: int
    n_seeds: int
    mean_eval: float
    ci_low: float | None
    ci_high: float | None


def seed_streams(master_seed, seed):
    """(train, eval, instance) generators for one seed; adding seeds never perturbs others."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(int(seed),))
    return tuple(np.random.default_rng(s) for s in ss.spawn(3))


def check_admissible(algo, env):
    spec = getattr(env, "spec", None)
    if algo in MODEL_BASED and env.name == "trading" and spec is not None and spec.is_full_scale:
        raise ValueError(f"{algo} is not admissible on full-scale trading; use --desk-scale")
    if algo == "twap" and env.name != "trading":
        raise ValueError("twap runs on the trading environment only")


def regret_enabled(config, env):
    if config.regret == "on":
        return True
    if config.regret == "off":
        return False
    return env.n_states * env.n_actions * env.horizon <= REGRET_AUTO_LIMIT


def optimal_value(env):
    """V*_1 averaged over the initial distribution, in the env's own reward units."""
    m = env.model
    return float(backward_induction(m).V[0] @ m.initial_distribution())


def optimal_return(config, seed=None):
    """Exact optimal expected raw return for the environment a run with ``config`` would build."""
    seed = config.seeds[0] if seed is None else seed
    inst = seed_streams(config.master_seed, seed)[2]
    raw = make_env(config.env, config.env_params, config.desk_scale, config.episodes, inst)
    return optimal_value(raw)


def run_seed(config, seed):
    train_rng, eval_rng, inst_rng = seed_streams(config.master_seed, seed)
    raw = make_env(config.env, config.env_params, config.desk_scale, config.episodes, inst_rng)
    check_admissible(config.algo, raw)
    env = raw.normalized()
    learner = make_learner(config.algo, env, config.episodes, config.replan_every, **config.hyper)
    H, aff = env.horizon, env.affine
    use_regret = regret_enabled(config, env)
    if use_regret:
        init = env.model.initial_distribution()
        v_star = optimal_value(env)
        ledger = RegretLedger()
    cadence = set(config.cadence())
    records = []
    start = time.perf_counter()
    for k in range(1, config.episodes + 1):
        if use_regret:
            pi, eps = learner.behavior()
            regret_update(ledger, v_star, float(evaluate_policy(env.model, pi, eps)[0] @ init))
        traj = learner.episode(env, train_rng)
        if k in cadence:
            ev = None
            if config.eval_episodes:
                ev = float(aff.to_raw_return(learner.evaluate(env, eval_rng, config.eval_episodes).mean(), H))
            records.append(RunRecord(
                env=config.env, algo=config.algo, seed=int(seed), episode=k,
                train_return=float(aff.to_raw_return(traj.total, H)),
                eval_return=ev,
                cum_regret=float(ledger.cumulative * aff.scale) if use_regret else None,
                wall_ms=(time.perf_counter() - start) * 1000.0,
            ))
    return records


def _run_seed_args(args):
    return run_seed(*args)


def run_experiment(config):
    """Records for every seed, ordered by the config's seed list."""
    workers = min(resolve_workers(config.workers), len(config.seeds))
    jobs = [(config, s) for s in config.seeds]
    if workers <= 1:
        per_seed = [run_seed(*j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            per_seed = list(ex.map(_run_seed_args, jobs))
    return [r for recs in per_seed for r in recs]


# CSV

def _fmt(x):
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    if isinstance(x, float):
        return "%.17g" % x
    return str(x)


def _write(path, header, rows):
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_fmt(v) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


def emit_csv(records, path):
    """Raw records or aggregate rows, chosen by the element type."""
    records = list(records)
    if records and isinstance(records[0], AggregateRow):
        _write(path, AGG_HEADER, ([getattr(r, f) for f in AGG_HEADER] for r in records))
    else:
        _write(path, RAW_HEADER, ([getattr(r, f) for f in RAW_HEADER] for r in records))


def _opt_float(text):
    return None if text == "" else float(text)


def read_csv(path):
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc}") from exc
    if not rows or tuple(rows[0]) != RAW_HEADER:
        raise ValueError(f"{path}: header does not match {','.join(RAW_HEADER)}")
    return [RunRecord(env=r[0], algo=r[1], seed=int(r[2]), episode=int(r[3]), train_return=float(r[4]),
                      eval_return=_opt_float(r[5]), cum_regret=_opt_float(r[6]), wall_ms=float(r[7]))
            for r in rows[1:]]


def strip_wall_clock(text):
    """CSV text without the wall_ms column, for byte comparisons."""
    out = []
    for line in text.splitlines():
        out.append(line.rsplit(",", 1)[0])
    return "\n".join(out) + "\n"


# aggregation

def confidence_band(values):
    """(mean, half-width) with half-width 1.96 sd / sqrt(n); None for a single value."""
    v = np.asarray(values, dtype=np.float64)
    if len(v) == 0:
        raise ValueError("no values to aggregate")
    if len(v) == 1:
        return float(v[0]), None
    return float(v.mean()), float(1.96 * v.std(ddof=1) / math.sqrt(len(v)))


def aggregate(records):
    groups = {}
    for r in records:
        if r.eval_return is None:
            continue
        groups.setdefault((r.env, r.algo, r.episode), []).append(r.eval_return)
    out = []
    for (env, algo, ep), vals in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2])):
        mean, half = confidence_band(vals)
        lo, hi = (None, None) if half is None else (mean - half, mean + half)
        out.append(AggregateRow(env, algo, ep, len(vals), mean, lo, hi))
    return out


def mean_curve(records, field="eval_return"):
    """{episode: mean over seeds} for one (env, algo) stream."""
    groups = {}
    for r in records:
        v = getattr(r, field)
        if v is not None:
            groups.setdefault(r.episode, []).append(v)
    return {ep: float(np.mean(v)) for ep, v in sorted(groups.items())}


def first_reach(curve, threshold):
    """First cadence episode whose value is >= threshold, or None."""
    for ep, v in curve.items():
        if v >= threshold:
            return ep
    return None


def reach_threshold(optimum, frac=0.95):
    """optimum - (1 - frac) |optimum|; equals frac * optimum for positive optima."""
    return optimum - (1.0 - frac) * abs(optimum)


# scaling sweep

@dataclass(frozen=True)
class ScalingRow:
    algo: str
    N: int
    K: int
    n_seeds: int
    mean_regret: float
    slope: float | None
    intercept: float | None


def scaling_sweep(ns, ks, algos=("exaq", "ql"), seeds=tuple(range(1, 11)), gap_scale=1.0, master_seed=0,
                  workers=1, hyper=None):
    """Final cumulative regret on the lower-bound family for every (algo, N, K), plus log-log fits."""
    hyper = hyper or {}
    rows = []
    for algo in algos:
        for n in ns:
            means = []
            for k in ks:
                cfg = ExperimentConfig(env="lower-bound", algo=algo, episodes=k, seeds=seeds,
                                       env_params=dict(n_branches=n, gap_scale=gap_scale),
                                       hyper=dict(hyper.get(algo, {})), eval_every=k, eval_episodes=0,
                                       regret="on", master_seed=master_seed, workers=workers)
                recs = run_experiment(cfg)
                means.append(float(np.mean([r.cum_regret for r in recs if r.episode == k])))
            fit = regret_slope(ks, means) if len(ks) >= 4 and min(means) > 0 else None
            for k, m in zip(ks, means):
                rows.append(ScalingRow(algo, n, k, len(seeds), m, fit and fit.slope, fit and fit.intercept))
    return rows


def emit_scaling_csv(rows, path):
    _write(path, SCALING_HEADER, ([getattr(r, f) for f in SCALING_HEADER] for r in rows))


def read_scaling_csv(path):
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != SCALING_HEADER:
        raise ValueError(f"{path}: not a scaling table")
    return [ScalingRow(r[0], int(r[1]), int(r[2]), int(r[3]), float(r[4]), _opt_float(r[5]), _opt_float(r[6]))
            for r in rows[1:]]


def with_seeds(config, seeds):
    return replace(config, seeds=tuple(seeds))
