"""
Two-Armed Bandit
One-step episodes with a constant observation; arm 0 pays 1, arm 1 pays 0.
"""

from typing import Optional

import numpy as np

from ..errors import ContractViolation
from .base import Environment, StepResult


class BanditEnv(Environment):
    env_id = "bandit"
    discrete = True
    n_actions = 2
    observation_dim = 1

    def __init__(self, payouts=(1.0, 0.0)):
        self.payouts = tuple(float(p) for p in payouts)
        self.n_actions = len(self.payouts)
        self.terminated = True

    @property
    def horizon(self) -> int:
        return 1

    def reset(self, seed: Optional[int] = None) -> np.ndarray:
        self.terminated = False
        return np.ones(1)

    def step(self, action) -> StepResult:
        if self.terminated:
            raise ContractViolation("step() called on a finished bandit episode; call reset()")
        self.terminated = True
        return StepResult(observation=np.ones(1), reward=self.payouts[int(action)], terminated=True)
