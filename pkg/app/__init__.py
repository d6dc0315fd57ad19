"""
App Package
Reward-shaping workbench: environments, feedback strategies and PPO training.
"""

from .errors import WorkbenchError
from .schemas import ExperimentConfig

__version__ = "0.1.0"

__all__ = [
    'WorkbenchError',
    'ExperimentConfig',
]
