"""
Feedback Rules Service
Rule-based human feedback proxies: style-coefficient scoring for highway
steps and the distance/torque rules for the reacher.
"""

import logging
import math
from typing import Iterator, List, Sequence, Tuple, Union

import numpy as np

from ..envs.highway import LANE_CHANGE_WINDOW, scenario_features
from ..envs.reacher import OBS_DISTANCE, OBS_OMEGA1, OBS_OMEGA2
from ..errors import DatasetError
from ..logging_config import kv
from ..schemas.feedback import ScenarioFeatures, ShapingWeights, StyleCoefficients, coefficients_for
from ..schemas.trajectory import Profile, ShapedTransition, ShapingSource, Transition
from .trajectory_store import TrajectoryDataset

logger = logging.getLogger(__name__)

DISTANCE_EPS = 1e-3
LARGE_ACTION = 0.5
IMPULSIVE_OMEGA = 0.5

ProfileLike = Union[Profile, str, StyleCoefficients]


def collision_scenario_index(ttc: float, acc: float, lc: int) -> int:
    """
    Collision sub-scenario c0..c4.

    ttc < 0.5 is immediate risk (c3) and ttc > 2.0 a safe path (c4). Inside
    [0.5, 2.0]: braking is c0, accelerating c1, a lane change at constant
    speed c2, and constant speed in lane falls back to c0.
    """
    if ttc < 0:
        raise ValueError(f"ttc must be >= 0 or inf, got {ttc}")
    if ttc < 0.5:
        return 3
    if ttc > 2.0:
        return 4
    if acc < 0:
        return 0
    if acc > 0:
        return 1
    if lc:
        return 2
    return 0


def speed_scenario_index(rho: int, v: float, v_thresh: Sequence[float] = (20.0, 30.0)) -> int:
    """3 * (rho - 1) + speed level, where level is 0 high, 1 medium, 2 low"""
    if rho not in (1, 2, 3):
        raise ValueError(f"rho must be 1, 2 or 3, got {rho}")
    if v > v_thresh[1]:
        level = 0
    elif v >= v_thresh[0]:
        level = 1
    else:
        level = 2
    return 3 * (rho - 1) + level


def hf_d_score(
    features: ScenarioFeatures,
    profile: ProfileLike,
    weights: ShapingWeights = ShapingWeights(),
) -> float:
    """
    Weighted sum of the lane, collision and speed coefficients for one step.

    Args:
        features: Scenario features of the step
        profile: Profile name/enum or a custom coefficient table
        weights: Category weights

    Returns:
        The rule score zeta
    """
    table = coefficients_for(profile)
    lane = table.b_lane[features.lane_change_count]
    collision = table.b_collision[collision_scenario_index(features.ttc, features.acc, features.lc)]
    speed = table.b_speed[speed_scenario_index(features.rho, features.v, features.v_thresh)]
    return weights.w_lane * lane + weights.w_collision * collision + weights.w_speed * speed


def _action_energy(action) -> float:
    return float(sum(float(a) ** 2 for a in action))


def reacher_rule_score(transition: Transition, profile: ProfileLike) -> float:
    """
    Reacher proxy feedback.

    IDEAL: +1 when the fingertip closes in by more than 1e-3, -1 when it
    moves away by more than 1e-3, and -1 more for ||a||^2 > 0.5.
    AGG: same distance term, but large torques earn +1 and small ones -1.
    RAD: progress scores +1 only with fast joints (||omega|| > 0.5), smooth
    progress scores -1, no progress scores 0.
    """
    name = profile.profile if isinstance(profile, StyleCoefficients) else Profile.parse(profile)
    before = transition.state[OBS_DISTANCE]
    after = transition.next_state[OBS_DISTANCE]
    closer = before - after > DISTANCE_EPS
    farther = after - before > DISTANCE_EPS
    distance_term = 1.0 if closer else (-1.0 if farther else 0.0)
    large = _action_energy(transition.action) > LARGE_ACTION

    if name == Profile.IDEAL:
        return distance_term - (1.0 if large else 0.0)
    if name == Profile.AGG:
        return distance_term + (1.0 if large else -1.0)
    if name == Profile.RAD:
        if not closer:
            return 0.0
        omega = math.hypot(transition.next_state[OBS_OMEGA1], transition.next_state[OBS_OMEGA2])
        return 1.0 if omega > IMPULSIVE_OMEGA else -1.0
    raise ValueError(f"No reacher rule for profile {name.value}")


def episode_windows(dataset: TrajectoryDataset) -> Iterator[Tuple[Transition, List[Transition]]]:
    """
    Pair each transition (in dataset order) with its episode's recent history.

    The window ends at the transition itself and holds at most the last
    LANE_CHANGE_WINDOW steps of that episode.
    """
    history = {}
    for transition in dataset:
        window = history.setdefault(transition.episode_id, [])
        window.append(transition)
        if len(window) > LANE_CHANGE_WINDOW:
            del window[0]
        yield transition, list(window)


def check_single_env(dataset: TrajectoryDataset) -> bool:
    """
    Confirm every record matches the dataset's environment family.

    Returns:
        True for highway data, False for reacher data

    Raises:
        DatasetError: records from both families, or records disagreeing with env_id
    """
    highway = dataset.env_id == "highway"
    flags = {transition.is_highway for transition in dataset}
    if len(flags) > 1:
        raise DatasetError("dataset mixes highway and reacher transitions")
    if flags and flags.pop() != highway:
        raise DatasetError(f"dataset env_id '{dataset.env_id}' disagrees with its transitions")
    return highway


def rule_scores(
    dataset: TrajectoryDataset,
    profile: ProfileLike,
    weights: ShapingWeights = ShapingWeights(),
    dt: float = 1.0,
    v_thresh: Sequence[float] = (20.0, 30.0),
) -> List[float]:
    """Rule score of every transition, aligned with dataset order"""
    highway = check_single_env(dataset)
    if highway:
        table = coefficients_for(profile)
        return [
            hf_d_score(scenario_features(window, dt, v_thresh), table, weights)
            for _, window in episode_windows(dataset)
        ]
    return [reacher_rule_score(transition, profile) for transition in dataset]


def shape_dataset_hf_d(
    dataset: TrajectoryDataset,
    profile: ProfileLike,
    weights: ShapingWeights = ShapingWeights(),
    dt: float = 1.0,
    v_thresh: Sequence[float] = (20.0, 30.0),
) -> TrajectoryDataset:
    """
    Annotate every step with the rule score of a profile.

    Args:
        dataset: Collected dataset (highway or reacher)
        profile: Profile name/enum or a custom coefficient table
        weights: Category weights (highway only)
        dt: Highway step length
        v_thresh: Highway speed thresholds

    Returns:
        Shaped dataset with source HF-D

    Raises:
        DatasetError: mixed-environment dataset
    """
    scores = rule_scores(dataset, profile, weights, dt, v_thresh)
    recorded = profile.profile if isinstance(profile, StyleCoefficients) else Profile.parse(profile)
    shaped = TrajectoryDataset(dataset.env_id, [
        ShapedTransition.annotate(transition, score, ShapingSource.HF_D, recorded)
        for transition, score in zip(dataset, scores)
    ])
    if scores:
        logger.debug(kv("hf-d shaping", profile=recorded.value, steps=len(scores), mean=float(np.mean(scores))))
    return shaped
