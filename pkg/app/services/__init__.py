"""
App Services Package
Provides the shaping pipelines, models, optimizer and experiment runner.
"""

from .trajectory_store import TrajectoryDataset, export_csv, load_dataset, save_dataset
from .feedback_rules import (
    collision_scenario_index,
    hf_d_score,
    reacher_rule_score,
    rule_scores,
    shape_dataset_hf_d,
    speed_scenario_index,
)
from .surrogate import SurrogateModel, fit_surrogate, shape_dataset_hf_rsm
from .pca import PCAModel, fit_dataset, step_features
from .prompts import PromptKind, build_prompt_d, build_prompt_hfbf
from .verdict_parser import parse_verdict_d, parse_verdict_hfbf
from .providers import FeedbackProvider, FeedbackRequest, MockOracle, RemoteLLM, build_provider
from .llm_shaping import shape_dataset_hfbf, shape_dataset_llm_d
from .ppo import ActorCritic, clipped_loss, collect, evaluate, gae, train
from .metrics import MetricsReport, aer, att, evaluate_metrics, fma, rank_agreement

__all__ = [
    'TrajectoryDataset',
    'export_csv',
    'load_dataset',
    'save_dataset',
    'collision_scenario_index',
    'hf_d_score',
    'reacher_rule_score',
    'rule_scores',
    'shape_dataset_hf_d',
    'speed_scenario_index',
    'SurrogateModel',
    'fit_surrogate',
    'shape_dataset_hf_rsm',
    'PCAModel',
    'fit_dataset',
    'step_features',
    'PromptKind',
    'build_prompt_d',
    'build_prompt_hfbf',
    'parse_verdict_d',
    'parse_verdict_hfbf',
    'FeedbackProvider',
    'FeedbackRequest',
    'MockOracle',
    'RemoteLLM',
    'build_provider',
    'shape_dataset_hfbf',
    'shape_dataset_llm_d',
    'ActorCritic',
    'clipped_loss',
    'collect',
    'evaluate',
    'gae',
    'train',
    'MetricsReport',
    'aer',
    'att',
    'evaluate_metrics',
    'fma',
    'rank_agreement',
]
