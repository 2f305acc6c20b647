"""Experiment configuration: INI files, seed/grid syntax and environment construction."""

from __future__ import annotations

import ast
import configparser
import os
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np

from pcmdp.envs import (ElevatorSpec, TaxiTrafficSpec, TradingSpec, build_elevator, build_lower_bound,
                        build_taxi, build_trading, hard_instance)
from pcmdp.envs.lower_bound import LowerBoundSpec

ENVIRONMENTS = ("taxi", "trading", "elevator", "lower-bound")
WORKERS_ENV = "PCMDP_WORKERS"


def parse_range(text, kind=int):
    """(lo, hi) for 'lo..hi', None for anything else."""
    text = str(text).strip()
    if ".." in text:
        lo, hi = (kind(x) for x in text.split(".."))
        return lo, hi
    return None


def parse_seeds(text):
    """'1..10' -> 1, 2, ..., 10; '1,3,7' -> those seeds."""
    rng = parse_range(text)
    if rng:
        lo, hi = rng
        if hi < lo:
            raise ValueError(f"empty seed range {text!r}")
        return tuple(range(lo, hi + 1))
    seeds = tuple(int(x) for x in str(text).split(",") if x.strip())
    if not seeds:
        raise ValueError("seed list is empty")
    return seeds


def parse_grid(text):
    """'1000..16000' -> 1000, 2000, 4000, 8000, 16000 (doubling); '2,4,8' -> a list."""
    rng = parse_range(text)
    if rng:
        lo, hi = rng
        if lo < 1 or hi < lo:
            raise ValueError(f"bad doubling grid {text!r}")
        out = [lo]
        while out[-1] * 2 <= hi:
            out.append(out[-1] * 2)
        return tuple(out)
    return tuple(int(x) for x in str(text).split(",") if x.strip())


def _value(raw):
    try:
        return ast.literal_eval(raw)
    except (ValueError, SyntaxError):
        return raw


def read_ini(path):
    """Sections of an INI file as nested dicts with literal-evaluated values."""
    cp = configparser.ConfigParser()
    with open(path, encoding="utf-8") as fh:
        cp.read_file(fh)
    return {sec: {k: _value(v) for k, v in cp.items(sec)} for sec in cp.sections()}


def bundled_config(name):
    """Path of an INI shipped with the package (``taxi``, ``trading_desk``, ...)."""
    return str(resources.files("pcmdp") / "configs" / f"{name}.ini")


@dataclass(frozen=True)
class ExperimentConfig:
    env: str
    algo: str
    episodes: int
    seeds: tuple = tuple(range(1, 11))
    env_params: dict = field(default_factory=dict)
    hyper: dict = field(default_factory=dict)
    eval_every: int = 50
    eval_episodes: int = 50
    replan_every: int = 1
    regret: str = "auto"
    desk_scale: bool = False
    master_seed: int = 0
    workers: int = 1
    out: str | None = None

    def __post_init__(self):
        if self.env not in ENVIRONMENTS:
            raise ValueError(f"unknown environment {self.env!r}; choose from {', '.join(ENVIRONMENTS)}")
        if self.episodes < 1:
            raise ValueError("episodes must be >= 1")
        seeds = tuple(int(s) for s in self.seeds)
        if not seeds or len(set(seeds)) != len(seeds):
            raise ValueError("seeds must be nonempty and distinct")
        if min(seeds) < 0:
            raise ValueError("seeds must be nonnegative")
        object.__setattr__(self, "seeds", seeds)
        if self.eval_every < 1 or self.eval_episodes < 0 or self.replan_every < 1:
            raise ValueError("cadences must be positive and the eval window nonnegative")
        if self.regret not in ("auto", "on", "off"):
            raise ValueError("regret must be auto, on or off")

    def cadence(self):
        """Episodes (1-based) after which a record is written."""
        pts = list(range(self.eval_every, self.episodes + 1, self.eval_every))
        if not pts or pts[-1] != self.episodes:
            pts.append(self.episodes)
        return pts

    def with_overrides(self, **kw):
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


def config_from_ini(path, **overrides):
    data = read_ini(path)
    env = dict(data.get("env", {}))
    algo = dict(data.get("algo", {}))
    run = dict(data.get("run", {}))
    kw = dict(env=env.pop("name", overrides.get("env")), algo=algo.pop("name", overrides.get("algo")),
              episodes=run.pop("episodes", overrides.get("episodes") or 1), env_params=env, hyper=algo)
    if "seeds" in run:
        kw["seeds"] = parse_seeds(run.pop("seeds"))
    kw.update(run)
    kw.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**kw)


def resolve_workers(requested):
    raw = os.environ.get(WORKERS_ENV)
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ValueError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
        if n < 1:
            raise ValueError(f"{WORKERS_ENV} must be >= 1")
        return n
    return max(1, int(requested))


def _spec(cls, params):
    known = set(cls.__dataclass_fields__)
    extra = set(params) - known
    if extra:
        raise ValueError(f"unknown {cls.__name__} parameters: {', '.join(sorted(extra))}")
    return cls(**{k: tuple(map(tuple, v)) if k == "traffic_locations" else v for k, v in params.items()})


def make_env(name, params=None, desk_scale=False, episodes=None, instance_rng=None):
    """Build the raw-reward environment named ``name``.

    The lower-bound family draws its branch signs from ``instance_rng`` when
    no explicit ``p`` is given; the gap uses ``episodes`` unless overridden.
    """
    params = dict(params or {})
    if name == "taxi":
        return build_taxi(_spec(TaxiTrafficSpec, params))
    if name == "trading":
        spec = TradingSpec.desk(**params) if desk_scale else _spec(TradingSpec, params)
        return build_trading(spec)
    if name == "elevator":
        return build_elevator(_spec(ElevatorSpec, params))
    if name == "lower-bound":
        if "p" in params:
            return build_lower_bound(LowerBoundSpec(tuple(params["p"])))
        n = int(params.pop("n_branches", 4))
        scale = float(params.pop("gap_scale", 1.0))
        k = int(params.pop("gap_episodes", episodes or 1000))
        if params:
            raise ValueError(f"unknown lower-bound parameters: {', '.join(sorted(params))}")
        rng = instance_rng if instance_rng is not None else np.random.default_rng(0)
        return build_lower_bound(hard_instance(n, k, rng, scale))
    raise ValueError(f"unknown environment {name!r}; choose from {', '.join(ENVIRONMENTS)}")
