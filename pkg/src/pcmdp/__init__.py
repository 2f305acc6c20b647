"""Finite-horizon MDPs whose state splits into a controllable and an exogenous part."""

from pcmdp.core import (BudgetError, ControllableKernel, ExogenousKernel, FactoredModel, OracleError,
                        PlanResult, RegretLedger, RewardAffine, StateFactorization, StepStack, Trajectory,
                        backward_induction, bellman_backup, compose_full_kernel, evaluate_policy,
                        normalize_rewards, regret_update, sample_episode, value_iteration)
from pcmdp.kernels import BACKEND

__version__ = "0.1.0"
