"""
PCA Service
Principal components of per-step trajectory features, summarized as PC1-PC3.
"""

import json
import logging
import math
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..envs.highway import NEIGHBOR_SLOTS, OBS_EGO_SPEED, OBS_NEIGHBORS, SLOT_WIDTH
from ..envs.reacher import OBS_DISTANCE, OBS_OMEGA1, OBS_OMEGA2
from ..errors import DegenerateInputError
from ..logging_config import kv
from ..schemas.trajectory import ShapedTransition, Transition

logger = logging.getLogger(__name__)

SUMMARY_AXES = 3

HIGHWAY_STEP_FEATURES = (
    'ego_speed', 'mean_neighbor_gap', 'action_id', 'reward',
    'collision_flag', 'lane_index', 'adjusted_reward',
)
REACHER_STEP_FEATURES = (
    'distance', 'joint_speed', 'torque_magnitude', 'reward',
    'collision_flag', 'lane_index', 'adjusted_reward',
)


@dataclass(frozen=True, eq=False)
class PCAModel:
    """
    Fitted principal axes

    Attributes:
        feature_names: Input feature order
        mean: Per-feature mean of the fit data
        std: Per-feature sample std (1 for constant features)
        components: Rows are principal axes, sorted by eigenvalue descending
        eigenvalues: Variance along each axis in z-scored units
        explained_variance_ratio: eigenvalues / their sum
    """
    feature_names: Tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray
    components: np.ndarray
    eigenvalues: np.ndarray
    explained_variance_ratio: np.ndarray

    @property
    def n_features(self) -> int:
        return len(self.mean)

    def normalize(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.mean) / self.std

    def denormalize(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=float) * self.std + self.mean

    def transform(self, x: np.ndarray) -> np.ndarray:
        """Coordinates on every axis; accepts a vector or an N x F matrix"""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {x.shape[-1]}")
        return self.normalize(x) @ self.components.T

    def project(self, x: Sequence[float]) -> Tuple[float, float, float]:
        """
        (PC1, PC2, PC3) of one feature vector; axes beyond F are 0.

        Raises:
            ValueError: length mismatch
        """
        x = np.asarray(x, dtype=float)
        if x.ndim != 1 or len(x) != self.n_features:
            raise ValueError(f"expected a vector of {self.n_features} features, got shape {x.shape}")
        coords = self.transform(x)[:SUMMARY_AXES]
        padded = np.zeros(SUMMARY_AXES)
        padded[:len(coords)] = coords
        return tuple(float(c) for c in padded)

    def inverse_project(self, coords: np.ndarray) -> np.ndarray:
        """z-scored features from coordinates on the leading axes"""
        coords = np.asarray(coords, dtype=float)
        k = coords.shape[-1]
        return coords @ self.components[:k]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'feature_names': list(self.feature_names),
            'mean': self.mean.tolist(),
            'std': self.std.tolist(),
            'components': self.components.tolist(),
            'eigenvalues': self.eigenvalues.tolist(),
            'explained_variance_ratio': self.explained_variance_ratio.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'PCAModel':
        return cls(
            feature_names=tuple(data['feature_names']),
            mean=np.array(data['mean'], dtype=float),
            std=np.array(data['std'], dtype=float),
            components=np.array(data['components'], dtype=float),
            eigenvalues=np.array(data['eigenvalues'], dtype=float),
            explained_variance_ratio=np.array(data['explained_variance_ratio'], dtype=float),
        )

    def save(self, path: str) -> str:
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(self.to_dict(), f, indent=2)
        return path

    @classmethod
    def load(cls, path: str) -> 'PCAModel':
        with open(path, 'r', encoding='utf-8') as f:
            return cls.from_dict(json.load(f))


def fit(features: np.ndarray, feature_names: Optional[Sequence[str]] = None) -> PCAModel:
    """
    Fit principal axes on z-scored features.

    Args:
        features: N x F matrix, N >= 2
        feature_names: Optional names, f0..fF-1 by default

    Returns:
        PCAModel whose largest-magnitude loading on each axis is positive

    Raises:
        DegenerateInputError: fewer than 2 rows or every column constant
    """
    x = np.asarray(features, dtype=float)
    if x.ndim != 2 or x.shape[0] < 2 or x.shape[1] < 1:
        raise DegenerateInputError(f"PCA needs an N x F matrix with N >= 2, got shape {x.shape}")
    std = x.std(axis=0, ddof=1)
    if not np.any(std > 0):
        raise DegenerateInputError("every PCA input feature is constant")

    mean = x.mean(axis=0)
    std = np.where(std > 0, std, 1.0)
    z = (x - mean) / std
    covariance = z.T @ z / (len(z) - 1)

    eigenvalues, vectors = np.linalg.eigh(covariance)
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = np.clip(eigenvalues[order], 0.0, None)
    components = vectors[:, order].T.copy()
    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0

    names = tuple(feature_names) if feature_names is not None else tuple(f"f{i}" for i in range(x.shape[1]))
    if len(names) != x.shape[1]:
        raise ValueError(f"{len(names)} feature names for {x.shape[1]} features")
    model = PCAModel(
        feature_names=names,
        mean=mean,
        std=std,
        components=components,
        eigenvalues=eigenvalues,
        explained_variance_ratio=eigenvalues / eigenvalues.sum(),
    )
    logger.debug(kv("pca fitted", rows=len(x), features=x.shape[1],
                    top3=round(float(model.explained_variance_ratio[:SUMMARY_AXES].sum()), 4)))
    return model


def step_features(transition: Transition) -> List[float]:
    """
    Fixed-order feature vector of one (shaped) step.

    Highway: [ego_speed, mean |dx| of present neighbors, action id, reward,
    collision flag, lane index, adjusted score]. Reacher: [distance, joint
    speed, torque magnitude, reward, 0, -1, adjusted score]. The adjusted
    score is the step's shaped_reward (0 for unshaped steps).
    """
    adjusted = transition.shaped_reward if isinstance(transition, ShapedTransition) else 0.0
    state = transition.state
    if transition.is_highway:
        gaps = [
            abs(state[OBS_NEIGHBORS + slot * SLOT_WIDTH + 1])
            for slot in range(NEIGHBOR_SLOTS)
            if state[OBS_NEIGHBORS + slot * SLOT_WIDTH] > 0
        ]
        return [
            float(state[OBS_EGO_SPEED]),
            float(np.mean(gaps)) if gaps else 0.0,
            float(transition.action),
            float(transition.reward),
            float(transition.collision_flag),
            float(transition.lane_index),
            float(adjusted),
        ]
    return [
        float(state[OBS_DISTANCE]),
        math.hypot(state[OBS_OMEGA1], state[OBS_OMEGA2]),
        math.hypot(*(float(a) for a in transition.action)),
        float(transition.reward),
        0.0,
        -1.0,
        float(adjusted),
    ]


def fit_dataset(dataset) -> PCAModel:
    """Fit on step_features of every transition of a dataset"""
    rows = [step_features(transition) for transition in dataset]
    names = HIGHWAY_STEP_FEATURES if dataset.env_id == "highway" else REACHER_STEP_FEATURES
    return fit(np.array(rows), names)
