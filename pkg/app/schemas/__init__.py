"""
Workbench Schema Module
Defines data structures for trajectories, feedback tables, verdicts and experiment configuration
"""

from .trajectory import Action, Profile, ShapedTransition, ShapingSource, Transition, training_reward
from .feedback import (
    BUILTIN_COEFFICIENTS,
    ScenarioFeatures,
    ShapingWeights,
    StyleCoefficients,
    coefficients_for,
)
from .verdicts import BiasVerdict, LLMVerdictD, Verdict
from .experiment import (
    FIS,
    Cell,
    EnvName,
    ExperimentConfig,
    FMAConfig,
    HighwayConfig,
    LLMConfig,
    PPOConfig,
    ProviderKind,
    ReacherConfig,
    Scenario,
    SurrogateConfig,
)
from .validation import ConfigValidator

__all__ = [
    'Action',
    'Profile',
    'ShapedTransition',
    'ShapingSource',
    'Transition',
    'training_reward',
    'BUILTIN_COEFFICIENTS',
    'ScenarioFeatures',
    'ShapingWeights',
    'StyleCoefficients',
    'coefficients_for',
    'BiasVerdict',
    'LLMVerdictD',
    'Verdict',
    'FIS',
    'Cell',
    'EnvName',
    'ExperimentConfig',
    'FMAConfig',
    'HighwayConfig',
    'LLMConfig',
    'PPOConfig',
    'ProviderKind',
    'ReacherConfig',
    'Scenario',
    'SurrogateConfig',
    'ConfigValidator',
]
