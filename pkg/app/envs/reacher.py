"""
Reacher Environment
Two-link planar arm driven by joint torques toward a random target.
"""

import logging
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple

import numpy as np

from ..errors import ContractViolation, InvalidGeometryError
from ..logging_config import kv
from ..schemas.experiment import ReacherConfig
from .base import Environment, StepResult

logger = logging.getLogger(__name__)

DAMPING = 0.99
TARGET_RADIUS = (0.05, 0.18)

# Observation layout
OBS_COS1, OBS_SIN1, OBS_COS2, OBS_SIN2 = 0, 1, 2, 3
OBS_TARGET_X, OBS_TARGET_Y = 4, 5
OBS_OMEGA1, OBS_OMEGA2 = 6, 7
OBS_DELTA_X, OBS_DELTA_Y, OBS_DISTANCE = 8, 9, 10


@dataclass(frozen=True)
class ReacherState:
    """
    Arm configuration and target

    Attributes:
        joint_angles: (theta1, theta2) radians
        joint_velocities: (omega1, omega2) rad/s
        target: (x, y) meters
        link_lengths: (l1, l2) meters
    """
    joint_angles: Tuple[float, float]
    joint_velocities: Tuple[float, float]
    target: Tuple[float, float]
    link_lengths: Tuple[float, float] = (0.1, 0.1)

    def __post_init__(self):
        l1, l2 = self.link_lengths
        radius = math.hypot(*self.target)
        if not abs(l1 - l2) - 1e-12 <= radius <= l1 + l2 + 1e-12:
            raise InvalidGeometryError(
                f"target radius {radius} outside reachable annulus [{abs(l1 - l2)}, {l1 + l2}]"
            )


def end_effector(state: ReacherState) -> Tuple[float, float]:
    """Fingertip position by forward kinematics"""
    (t1, t2), (l1, l2) = state.joint_angles, state.link_lengths
    return (
        l1 * math.cos(t1) + l2 * math.cos(t1 + t2),
        l1 * math.sin(t1) + l2 * math.sin(t1 + t2),
    )


def distance_to_target(state: ReacherState) -> float:
    x, y = end_effector(state)
    return math.hypot(state.target[0] - x, state.target[1] - y)


def clamp_action(action: Sequence[float], limit: float) -> Tuple[Tuple[float, float], bool]:
    """Clamp each torque to [-limit, limit]; reports whether anything changed."""
    raw = (float(action[0]), float(action[1]))
    clamped = tuple(min(max(a, -limit), limit) for a in raw)
    return clamped, clamped != raw


def reacher_reward(state: ReacherState, action: Sequence[float], config: ReacherConfig) -> float:
    """
    Distance-plus-control penalty.

    r = -w_near * ||p_eff - p_tgt|| - w_ctrl * ||a||^2, with the action
    clamped to the torque limit first.
    """
    (a1, a2), clamped = clamp_action(action, config.torque_limit)
    if clamped:
        logger.debug(kv("torque clamped", action=list(action), limit=config.torque_limit))
    return -config.w_near * distance_to_target(state) - config.w_ctrl * (a1 * a1 + a2 * a2)


class ReacherEnv(Environment):
    """Unit-inertia, decoupled two-joint arm with velocity damping."""

    env_id = "reacher"
    discrete = False
    action_dim = 2
    observation_dim = 11

    def __init__(self, config: Optional[ReacherConfig] = None):
        self.config = config or ReacherConfig()
        self.action_limit = self.config.torque_limit
        self.state: Optional[ReacherState] = None
        self.t = 0
        self.terminated = True
        self._clamp_logged = False
        self._rng = np.random.default_rng(self.config.seed)

    @property
    def horizon(self) -> int:
        return self.config.episode_length

    @property
    def observation_scale(self) -> np.ndarray:
        return np.array([1.0, 1.0, 1.0, 1.0, 0.2, 0.2, 5.0, 5.0, 0.2, 0.2, 0.2])

    def reset(self, seed: Optional[int] = None) -> np.ndarray:
        seed = self.config.seed if seed is None else seed
        self._rng = np.random.default_rng(seed)
        angles = self._rng.uniform(-0.1, 0.1, size=2)
        velocities = self._rng.uniform(-0.005, 0.005, size=2)
        lo, hi = TARGET_RADIUS
        # area-uniform radius
        radius = math.sqrt(self._rng.uniform(lo * lo, hi * hi))
        heading = self._rng.uniform(-math.pi, math.pi)
        self.state = ReacherState(
            joint_angles=(float(angles[0]), float(angles[1])),
            joint_velocities=(float(velocities[0]), float(velocities[1])),
            target=(radius * math.cos(heading), radius * math.sin(heading)),
        )
        self.t = 0
        self.terminated = False
        self._clamp_logged = False
        return self.observe(self.state)

    def step(self, action) -> StepResult:
        """
        Semi-implicit Euler update followed by damping.

        Raises:
            ContractViolation: the episode already terminated
        """
        if self.terminated or self.state is None:
            raise ContractViolation("step() called on a terminated reacher episode; call reset()")
        torque, clamped = clamp_action(action, self.config.torque_limit)
        if clamped and not self._clamp_logged:
            logger.debug(kv("torque clamped", action=[float(a) for a in action], t=self.t))
            self._clamp_logged = True

        dt = self.config.dt
        omega = [(w + tau * dt) * DAMPING for w, tau in zip(self.state.joint_velocities, torque)]
        theta = [th + w * dt for th, w in zip(self.state.joint_angles, omega)]
        self.state = replace(
            self.state,
            joint_angles=(theta[0], theta[1]),
            joint_velocities=(omega[0], omega[1]),
        )
        self.t += 1

        reward = reacher_reward(self.state, torque, self.config)
        self.terminated = self.t >= self.config.episode_length
        return StepResult(
            observation=self.observe(self.state),
            reward=float(reward),
            terminated=self.terminated,
            collision_flag=0,
            lane_index=-1,
            info={'t': self.t},
        )

    @staticmethod
    def observe(state: ReacherState) -> np.ndarray:
        """(cos, sin) of both joints, target, joint velocities, target offset and its norm"""
        (t1, t2), (w1, w2) = state.joint_angles, state.joint_velocities
        ex, ey = end_effector(state)
        dx, dy = state.target[0] - ex, state.target[1] - ey
        return np.array([
            math.cos(t1), math.sin(t1), math.cos(t2), math.sin(t2),
            state.target[0], state.target[1],
            w1, w2,
            dx, dy, math.hypot(dx, dy),
        ])
