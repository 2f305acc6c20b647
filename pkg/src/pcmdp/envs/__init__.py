"""Benchmark environments exposed through the generative interface."""

from pcmdp.envs.base import GenerativeEnv, KnownDynamics
from pcmdp.envs.elevator import ElevatorSpec, build_elevator
from pcmdp.envs.lower_bound import LowerBoundSpec, build_lower_bound, hard_instance
from pcmdp.envs.taxi import TaxiTrafficSpec, build_taxi
from pcmdp.envs.trading import TradingSpec, build_trading, twap_targets

__all__ = [
    "GenerativeEnv", "KnownDynamics", "ElevatorSpec", "build_elevator", "LowerBoundSpec",
    "build_lower_bound", "hard_instance", "TaxiTrafficSpec", "build_taxi", "TradingSpec",
    "build_trading", "twap_targets",
]
