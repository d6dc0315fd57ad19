"""
Environments Package
Highway driving, two-link reacher and a toy bandit behind one reset/step interface.
"""

from ..schemas.experiment import EnvName, ExperimentConfig
from .bandit import BanditEnv
from .base import Environment, StepResult
from .highway import HighwayAction, HighwayEnv, IDMParams, idm_accel, scenario_features
from .reacher import ReacherEnv, ReacherState, end_effector, reacher_reward


def make_env(config: ExperimentConfig) -> Environment:
    """Build the environment named by an experiment configuration"""
    if config.env == EnvName.REACHER:
        return ReacherEnv(config.reacher)
    return HighwayEnv(config.highway_config())


__all__ = [
    'BanditEnv',
    'Environment',
    'StepResult',
    'HighwayAction',
    'HighwayEnv',
    'IDMParams',
    'idm_accel',
    'scenario_features',
    'ReacherEnv',
    'ReacherState',
    'end_effector',
    'reacher_reward',
    'make_env',
]
