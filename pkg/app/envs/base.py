"""
Environment Interface
Common reset/step contract shared by the highway, reacher and bandit environments.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np


@dataclass
class StepResult:
    """
    Outcome of one environment step

    Attributes:
        observation: Observation after the action
        reward: Intrinsic reward r_t
        terminated: True when the episode ended on this step
        collision_flag: 1 if the step ended in a collision
        lane_index: Ego lane after the step, -1 when the env has no lanes
        info: Diagnostics that are not part of the observation
    """
    observation: np.ndarray
    reward: float
    terminated: bool
    collision_flag: int = 0
    lane_index: int = -1
    info: Dict[str, Any] = field(default_factory=dict)


class Environment(ABC):
    """
    Base class for workbench environments.

    Subclasses set `env_id`, `observation_dim`, and either `n_actions`
    (discrete) or `action_dim` plus `action_limit` (continuous).
    """

    env_id: str = "env"
    discrete: bool = True
    n_actions: int = 0
    action_dim: int = 0
    action_limit: float = 1.0
    observation_dim: int = 0

    @abstractmethod
    def reset(self, seed: Optional[int] = None) -> np.ndarray:
        """Start a new episode and return the first observation."""

    @abstractmethod
    def step(self, action) -> StepResult:
        """Advance one step; stepping a finished episode raises ContractViolation."""

    @property
    def observation_scale(self) -> np.ndarray:
        """Per-entry scale the policy divides observations by."""
        return np.ones(self.observation_dim)

    @property
    def horizon(self) -> int:
        raise NotImplementedError
