import numpy as np
import pytest

from pcmdp.core import (ControllableKernel, ExogenousKernel, FactoredModel, StateFactorization, StepStack)

ACCEPTANCE = {}


def record_acceptance(number, passed, detail):
    ACCEPTANCE[number] = (bool(passed), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")


def chain_model(horizon=5, stay=0.8, n_actions=2):
    """Two controllable and two exogenous states; the reward pays for matching c to e."""
    n_c, n_e, A = 2, 2, n_actions
    S = n_c * n_e
    next_c = np.zeros((S, A), np.int32)
    reward = np.zeros((S, A))
    for c in range(n_c):
        for e in range(n_e):
            s = c * n_e + e
            for a in range(A):
                next_c[s, a] = a % n_c
                reward[s, a] = 1.0 if c == e else 0.0
    P = np.array([[stay, 1 - stay], [1 - stay, stay]])
    return FactoredModel(
        factorization=StateFactorization(n_c, n_e),
        n_actions=A,
        horizon=horizon,
        controllable=ControllableKernel.deterministic(next_c[None], np.zeros(horizon - 1, np.int32), n_c),
        exogenous=ExogenousKernel.stationary(P, horizon),
        reward=StepStack.stationary(reward, horizon),
        reward_bounds=(0.0, 1.0),
        init_controllable=np.array([1.0, 0.0]),
        init_exogenous=np.array([0.5, 0.5]),
        name="chain",
    )


@pytest.fixture
def chain():
    return chain_model()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
