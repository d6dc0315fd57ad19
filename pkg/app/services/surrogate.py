"""
Surrogate Feedback Service
Regressor trained on rule-proxy labels that stands in for live human feedback.
"""

import json
import logging
import math
from typing import Any, Dict, Optional, Sequence

import numpy as np

from ..envs.highway import scenario_features
from ..envs.reacher import OBS_DISTANCE, OBS_OMEGA1, OBS_OMEGA2
from ..errors import DatasetError, DegenerateInputError, ModelNotFittedError
from ..logging_config import kv
from ..schemas.experiment import SurrogateConfig
from ..schemas.trajectory import Profile, ShapedTransition, ShapingSource
from .feedback_rules import check_single_env, episode_windows
from .mlp import MLP, Adam
from .trajectory_store import TrajectoryDataset

logger = logging.getLogger(__name__)


def surrogate_inputs(
    dataset: TrajectoryDataset,
    dt: float = 1.0,
    v_thresh: Sequence[float] = (20.0, 30.0),
) -> np.ndarray:
    """
    Feature matrix the surrogate consumes, one row per transition.

    Highway rows are ScenarioFeatures.as_vector(); reacher rows are
    [distance before, distance change, ||a||^2, ||omega||].
    """
    if len(dataset) == 0:
        return np.zeros((0, 0))
    if check_single_env(dataset):
        return np.array([
            scenario_features(window, dt, v_thresh).as_vector() for _, window in episode_windows(dataset)
        ])
    rows = []
    for transition in dataset:
        before = transition.state[OBS_DISTANCE]
        rows.append([
            before,
            transition.next_state[OBS_DISTANCE] - before,
            float(sum(float(a) ** 2 for a in transition.action)),
            math.hypot(transition.next_state[OBS_OMEGA1], transition.next_state[OBS_OMEGA2]),
        ])
    return np.array(rows)


class SurrogateModel:
    """
    Two-hidden-layer regressor from step features to a feedback score.

    Inputs are z-scored with the training statistics; targets are
    standardized during training and mapped back on prediction.
    """

    def __init__(self, config: Optional[SurrogateConfig] = None, env_id: str = "highway", profile: Profile = Profile.NA):
        self.config = config or SurrogateConfig()
        self.env_id = env_id
        self.profile = profile
        self.network: Optional[MLP] = None
        self.feature_mean: Optional[np.ndarray] = None
        self.feature_std: Optional[np.ndarray] = None
        self.target_mean = 0.0
        self.target_std = 1.0
        self.training_mse: Optional[float] = None

    @property
    def is_fitted(self) -> bool:
        return self.network is not None

    def fit(self, features: np.ndarray, targets: Sequence[float]) -> float:
        """
        Fit by minibatch Adam on mean squared error.

        Args:
            features: N x F input matrix
            targets: N labels

        Returns:
            Final training MSE in label units

        Raises:
            DegenerateInputError: too few samples or every feature constant
        """
        x = np.asarray(features, dtype=float)
        y = np.asarray(targets, dtype=float).reshape(-1)
        if x.ndim != 2 or len(x) != len(y):
            raise ValueError(f"features {x.shape} and targets {y.shape} do not align")
        if len(x) < self.config.min_samples:
            raise DegenerateInputError(f"surrogate needs >= {self.config.min_samples} samples, got {len(x)}")
        std = x.std(axis=0)
        if not np.any(std > 0):
            raise DegenerateInputError("every surrogate input feature is constant")

        self.feature_mean = x.mean(axis=0)
        self.feature_std = np.where(std > 0, std, 1.0)
        self.target_mean = float(y.mean())
        target_std = float(y.std())
        self.target_std = target_std if target_std > 0 else 1.0

        rng = np.random.default_rng(self.config.seed)
        hidden = self.config.hidden_size
        self.network = MLP((x.shape[1], hidden, hidden, 1), rng, output_gain=0.1)
        optimizer = Adam(self.network.params(), lr=self.config.learning_rate)

        xn = self._normalize(x)
        yn = ((y - self.target_mean) / self.target_std)[:, None]
        size = self.config.minibatch_size
        for _ in range(self.config.epochs):
            order = rng.permutation(len(xn))
            for start in range(0, len(order), size):
                index = order[start:start + size]
                out, cache = self.network.forward(xn[index])
                grad = 2.0 * (out - yn[index]) / len(index)
                optimizer.step(self.network.backward(cache, grad))

        self.training_mse = float(np.mean((self.predict(x) - y) ** 2))
        logger.info(kv("surrogate fitted", env=self.env_id, profile=self.profile.value,
                       samples=len(x), training_mse=round(self.training_mse, 6)))
        return self.training_mse

    def _normalize(self, x: np.ndarray) -> np.ndarray:
        return (x - self.feature_mean) / self.feature_std

    def predict(self, features: np.ndarray) -> np.ndarray:
        """Predicted scores for an N x F matrix"""
        if not self.is_fitted:
            raise ModelNotFittedError("surrogate model has not been fitted")
        x = np.atleast_2d(np.asarray(features, dtype=float))
        return self.network(self._normalize(x))[:, 0] * self.target_std + self.target_mean

    def to_dict(self) -> Dict[str, Any]:
        if not self.is_fitted:
            raise ModelNotFittedError("surrogate model has not been fitted")
        return {
            'env_id': self.env_id,
            'profile': self.profile.value,
            'config': self.config.to_dict(),
            'feature_mean': self.feature_mean.tolist(),
            'feature_std': self.feature_std.tolist(),
            'target_mean': self.target_mean,
            'target_std': self.target_std,
            'training_mse': self.training_mse,
            'network': self.network.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'SurrogateModel':
        model = cls(SurrogateConfig.from_dict(data['config']), data['env_id'], Profile(data['profile']))
        model.feature_mean = np.array(data['feature_mean'], dtype=float)
        model.feature_std = np.array(data['feature_std'], dtype=float)
        model.target_mean = float(data['target_mean'])
        model.target_std = float(data['target_std'])
        model.training_mse = data.get('training_mse')
        model.network = MLP.from_dict(data['network'])
        return model

    def save(self, path: str) -> str:
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(self.to_dict(), f, indent=2)
        return path

    @classmethod
    def load(cls, path: str) -> 'SurrogateModel':
        with open(path, 'r', encoding='utf-8') as f:
            return cls.from_dict(json.load(f))


def fit_surrogate(
    dataset: TrajectoryDataset,
    labels: Sequence[float],
    config: Optional[SurrogateConfig] = None,
    profile: Profile = Profile.NA,
    dt: float = 1.0,
    v_thresh: Sequence[float] = (20.0, 30.0),
) -> SurrogateModel:
    """
    Fit a surrogate on (features, label) pairs taken from a dataset.

    Args:
        dataset: Source of the step features
        labels: One rule score per transition, in dataset order
        config: Network and optimizer settings
        profile: Profile the labels came from (recorded on the model)
        dt: Highway step length
        v_thresh: Highway speed thresholds
    """
    if len(labels) != len(dataset):
        raise ValueError(f"{len(labels)} labels for {len(dataset)} transitions")
    model = SurrogateModel(config, dataset.env_id, profile)
    model.fit(surrogate_inputs(dataset, dt, v_thresh), labels)
    return model


def shape_dataset_hf_rsm(
    dataset: TrajectoryDataset,
    model: SurrogateModel,
    dt: float = 1.0,
    v_thresh: Sequence[float] = (20.0, 30.0),
) -> TrajectoryDataset:
    """
    Annotate every step with the surrogate's predicted feedback.

    Raises:
        ModelNotFittedError: the model was never fitted
        DatasetError: the model was fitted on another environment family
    """
    if not model.is_fitted:
        raise ModelNotFittedError("surrogate model has not been fitted")
    if len(dataset) == 0:
        return TrajectoryDataset(dataset.env_id)
    if model.env_id != dataset.env_id:
        raise DatasetError(f"surrogate fitted on '{model.env_id}' cannot shape '{dataset.env_id}' data")
    scores = model.predict(surrogate_inputs(dataset, dt, v_thresh))
    return TrajectoryDataset(dataset.env_id, [
        ShapedTransition.annotate(transition, float(score), ShapingSource.HF_RSM, model.profile)
        for transition, score in zip(dataset, scores)
    ])
