"""
Metrics Service
Average episodic reward, average terminate time and feedback misalignment.
"""

import json
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Sequence

import numpy as np
from scipy.stats import spearmanr

from ..envs.highway import OBS_EGO_SPEED
from ..envs.reacher import OBS_DISTANCE
from ..errors import DatasetError, UnsupportedMetricError
from ..schemas.experiment import FMAConfig
from .trajectory_store import TrajectoryDataset


@dataclass
class EpisodeMetrics:
    """Per-episode figures behind a report"""
    episode_id: int
    cumulative_reward: float
    length: int
    fma: float

    def to_dict(self) -> Dict[str, Any]:
        return {
            'episode_id': self.episode_id,
            'cumulative_reward': self.cumulative_reward,
            'length': self.length,
            'fma': None if math.isnan(self.fma) else self.fma,
        }


@dataclass
class MetricsReport:
    """
    Evaluation summary of one trained policy

    Attributes:
        aer: Mean per-episode cumulative intrinsic reward
        att: Mean episode length
        fma: Mean per-episode misalignment (NaN where unsupported)
        per_episode: Figures of each episode, ascending episode_id
        episode_count: Number of episodes
    """
    aer: float
    att: float
    fma: float
    per_episode: List[EpisodeMetrics] = field(default_factory=list)
    episode_count: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            'aer': self.aer,
            'att': self.att,
            'fma': None if math.isnan(self.fma) else self.fma,
            'episode_count': self.episode_count,
            'per_episode': [episode.to_dict() for episode in self.per_episode],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_row(self) -> Dict[str, float]:
        """Metric columns of a results-table row"""
        return {'fma': self.fma, 'att': self.att, 'aer': self.aer}


def _episodes(dataset: TrajectoryDataset, metric: str) -> List[list]:
    episodes = list(dataset.episodes())
    if not episodes:
        raise DatasetError(f"{metric} needs at least one episode")
    return episodes


def aer(dataset: TrajectoryDataset) -> float:
    """Mean over episodes of the summed intrinsic reward"""
    episodes = _episodes(dataset, "AER")
    return float(np.mean([sum(step.reward for step in episode) for episode in episodes]))


def att(dataset: TrajectoryDataset) -> float:
    """Mean episode length"""
    episodes = _episodes(dataset, "ATT")
    return float(np.mean([len(episode) for episode in episodes]))


def episode_fma(episode: Sequence, config: FMAConfig) -> float:
    """
    Weighted misalignment count of one highway episode.

    Lane changes compare each step's lane_index with the previous step's;
    the speed change of step 0 is 0.
    """
    total = 0.0
    previous = None
    for step in episode:
        speed = step.next_state[OBS_EGO_SPEED]
        if previous is not None:
            total += config.lambda1 * float(step.lane_index != previous.lane_index)
            total += config.lambda4 * abs(speed - previous.next_state[OBS_EGO_SPEED])
        total += config.lambda2 * float(step.reward < config.theta)
        total += config.lambda3 * float(step.collision_flag == 1)
        previous = step
    return total


def fma(dataset: TrajectoryDataset, config: FMAConfig = FMAConfig()) -> float:
    """
    Mean per-episode feedback misalignment.

    Raises:
        UnsupportedMetricError: the dataset is not highway data
        DatasetError: empty dataset
    """
    if dataset.env_id != "highway" or any(not step.is_highway for step in dataset):
        raise UnsupportedMetricError(f"FMA is defined for highway data only, got '{dataset.env_id}'")
    episodes = _episodes(dataset, "FMA")
    return float(np.mean([episode_fma(episode, config) for episode in episodes]))


def evaluate_metrics(dataset: TrajectoryDataset, config: FMAConfig = FMAConfig()) -> MetricsReport:
    """All metrics of an evaluation dataset; FMA is NaN outside highway"""
    episodes = _episodes(dataset, "metrics")
    highway = dataset.env_id == "highway"
    per_episode = [
        EpisodeMetrics(
            episode_id=episode[0].episode_id,
            cumulative_reward=float(sum(step.reward for step in episode)),
            length=len(episode),
            fma=episode_fma(episode, config) if highway else math.nan,
        )
        for episode in episodes
    ]
    return MetricsReport(
        aer=float(np.mean([e.cumulative_reward for e in per_episode])),
        att=float(np.mean([e.length for e in per_episode])),
        fma=float(np.mean([e.fma for e in per_episode])) if highway else math.nan,
        per_episode=per_episode,
        episode_count=len(per_episode),
    )


def mean_distance_to_target(dataset: TrajectoryDataset) -> float:
    """Mean end-effector distance to the target over every reacher step"""
    if dataset.env_id != "reacher":
        raise UnsupportedMetricError("distance to target is defined for reacher data only")
    if len(dataset) == 0:
        raise DatasetError("distance to target needs at least one step")
    return float(np.mean([step.next_state[OBS_DISTANCE] for step in dataset]))


def rank_agreement(a: Sequence[float], b: Sequence[float]) -> float:
    """Spearman rank correlation of two aligned score series"""
    if len(a) != len(b) or len(a) < 2:
        raise ValueError("rank agreement needs two aligned series of length >= 2")
    return float(spearmanr(a, b).correlation)


def episode_totals(dataset: TrajectoryDataset) -> List[float]:
    """Summed shaped reward of each episode, ascending episode_id"""
    return [
        float(sum(getattr(step, 'shaped_reward', 0.0) for step in episode))
        for episode in dataset.episodes()
    ]
