"""
Highway Simulator
Lane-based highway with IDM-controlled traffic, an ego vehicle driven by
discrete actions, and the congested-lane / slow-obstacle scenario variants.
"""

import logging
import math
from dataclasses import dataclass
from enum import IntEnum
from typing import List, Optional, Sequence

import numpy as np

from ..errors import ContractViolation, InvalidGeometryError
from ..logging_config import kv
from ..schemas.experiment import HighwayConfig, Scenario
from ..schemas.feedback import ScenarioFeatures
from ..schemas.trajectory import Transition
from .base import Environment, StepResult

logger = logging.getLogger(__name__)

VEHICLE_LENGTH = 5.0
SPEED_DELTA = 2.0
MAX_SPEED = 40.0
EGO_START_SPEED = 25.0
NEIGHBOR_SLOTS = 5
NEIGHBOR_RANGE = 150.0
DENSITY_RANGE = 50.0
LANE_CHANGE_WINDOW = 10
MIN_IDM_GAP = 0.1

# Observation layout
OBS_EGO_SPEED = 0
OBS_EGO_LANE = 1
OBS_AHEAD_COUNT = 2
OBS_LEADER_PRESENT = 3
OBS_LEADER_GAP = 4
OBS_LEADER_CLOSING = 5
OBS_NEIGHBORS = 6
SLOT_WIDTH = 4


class HighwayAction(IntEnum):
    """Discrete ego controls"""
    LANE_LEFT = 0
    IDLE = 1
    LANE_RIGHT = 2
    FASTER = 3
    SLOWER = 4


@dataclass(frozen=True)
class IDMParams:
    """Intelligent Driver Model parameters"""
    a_max: float = 1.5
    b_comf: float = 2.0
    v_desired: float = 28.0
    time_headway: float = 1.5
    min_gap: float = 5.0
    delta: float = 4.0


DEFAULT_IDM = IDMParams()


@dataclass
class VehicleState:
    """
    One vehicle on the road

    Attributes:
        lane: Lane index, 0 is the leftmost
        position: Longitudinal position of the vehicle center (m)
        speed: m/s, never negative
        desired_speed: IDM free-road target speed
    """
    lane: int
    position: float
    speed: float
    desired_speed: float = DEFAULT_IDM.v_desired


def idm_accel(
    gap: float,
    own_speed: float,
    lead_speed: float,
    params: IDMParams = DEFAULT_IDM,
    desired_speed: Optional[float] = None,
) -> float:
    """
    Intelligent Driver Model acceleration.

    Args:
        gap: Bumper-to-bumper distance to the leader (math.inf without a leader)
        own_speed: Follower speed
        lead_speed: Leader speed
        params: IDM parameters
        desired_speed: Overrides params.v_desired for this vehicle

    Returns:
        Acceleration clamped to [-2 * b_comf, a_max]

    Raises:
        InvalidGeometryError: gap <= 0
    """
    if not gap > 0:
        raise InvalidGeometryError(f"IDM gap must be > 0, got {gap}")
    v0 = params.v_desired if desired_speed is None else desired_speed
    interaction = own_speed * params.time_headway + (
        own_speed * (own_speed - lead_speed) / (2.0 * math.sqrt(params.a_max * params.b_comf))
    )
    s_star = params.min_gap + max(0.0, interaction)
    accel = params.a_max * (1.0 - (own_speed / v0) ** params.delta - (s_star / gap) ** 2)
    return float(min(max(accel, -2.0 * params.b_comf), params.a_max))


def _advance(vehicle: VehicleState, accel: float, dt: float) -> None:
    """Ballistic update that stops at zero speed instead of reversing."""
    new_speed = vehicle.speed + accel * dt
    if new_speed < 0.0:
        vehicle.position += vehicle.speed ** 2 / (2.0 * -accel) if accel < 0 else 0.0
        vehicle.speed = 0.0
    else:
        vehicle.position += vehicle.speed * dt + 0.5 * accel * dt * dt
        vehicle.speed = new_speed


class HighwayEnv(Environment):
    """
    Highway driving environment.

    Reward per step: -1 on collision, +0.1 in the rightmost lane and +0.4 for
    a speed inside `speed_reward_band`; the terms add up. Episodes end on a
    collision or after `duration` steps.
    """

    env_id = "highway"
    discrete = True
    n_actions = len(HighwayAction)
    observation_dim = OBS_NEIGHBORS + NEIGHBOR_SLOTS * SLOT_WIDTH

    def __init__(self, config: Optional[HighwayConfig] = None, idm: IDMParams = DEFAULT_IDM):
        self.config = config or HighwayConfig()
        self.idm = idm
        self.ego: Optional[VehicleState] = None
        self.npcs: List[VehicleState] = []
        self.t = 0
        self.terminated = True
        self._rng = np.random.default_rng(self.config.seed)

    @property
    def horizon(self) -> int:
        return self.config.duration

    @property
    def rightmost_lane(self) -> int:
        return self.config.lane_count - 1

    @property
    def middle_lane(self) -> int:
        return self.config.lane_count // 2

    @property
    def observation_scale(self) -> np.ndarray:
        head = [MAX_SPEED, float(self.rightmost_lane), 10.0, 1.0, 100.0, 20.0]
        slot = [1.0, NEIGHBOR_RANGE, float(self.rightmost_lane), 20.0]
        return np.array(head + slot * NEIGHBOR_SLOTS, dtype=float)

    def reset(self, seed: Optional[int] = None) -> np.ndarray:
        """
        Place the ego and the traffic for the configured scenario.

        Args:
            seed: Episode seed; config.seed when None

        Returns:
            First observation
        """
        seed = self.config.seed if seed is None else seed
        self._rng = np.random.default_rng(seed)
        scenario = self.config.scenario

        if scenario == Scenario.CONGESTED_LANE:
            self.ego = VehicleState(self.rightmost_lane, 0.0, EGO_START_SPEED)
            self.npcs = self._spawn_congested_lane()
        elif scenario == Scenario.SLOW_OBSTACLE_MIDDLE:
            self.ego = VehicleState(self.middle_lane, 0.0, EGO_START_SPEED)
            self.npcs = self._spawn_slow_obstacle()
        else:
            lane = int(self._rng.integers(0, self.config.lane_count))
            self.ego = VehicleState(lane, 0.0, EGO_START_SPEED)
            self.npcs = self._spawn_default()

        self.t = 0
        self.terminated = False
        logger.debug(kv("highway reset", scenario=scenario.value, seed=seed, npcs=len(self.npcs)))
        return self._observe()

    def _spawn_default(self) -> List[VehicleState]:
        lanes = self.config.lane_count
        cursors = [float(self._rng.uniform(-80.0, -40.0)) for _ in range(lanes)]
        npcs = []
        for i in range(self.config.vehicle_count - 1):
            lane = i % lanes
            x = cursors[lane]
            while lane == self.ego.lane and abs(x - self.ego.position) < 20.0:
                x += float(self._rng.uniform(25.0, 45.0))
            cursors[lane] = x + float(self._rng.uniform(25.0, 45.0))
            npcs.append(VehicleState(lane, x, float(self._rng.uniform(20.0, 26.0)), self.idm.v_desired))
        return npcs

    def _cruising_lane(self, lane: int) -> List[VehicleState]:
        npcs = []
        for base in (-40.0, 20.0, 80.0):
            x = base + float(self._rng.uniform(-5.0, 5.0))
            speed = float(self._rng.uniform(25.0, 30.0))
            npcs.append(VehicleState(lane, x, speed, speed))
        return npcs

    def _spawn_congested_lane(self) -> List[VehicleState]:
        npcs = []
        for i in range(6):
            speed = float(self._rng.uniform(15.0, 20.0))
            npcs.append(VehicleState(self.rightmost_lane, 25.0 + 25.0 * i, speed, speed))
        for lane in range(self.config.lane_count - 1):
            npcs.extend(self._cruising_lane(lane))
        return npcs

    def _spawn_slow_obstacle(self) -> List[VehicleState]:
        middle = self.middle_lane
        npcs = [VehicleState(middle, 30.0, 15.0, 15.0)]
        for lane in (middle - 1, middle + 1):
            if 0 <= lane < self.config.lane_count:
                npcs.extend(self._cruising_lane(lane))
        return npcs

    def _npc_accelerations(self, include_ego: bool) -> List[float]:
        """IDM acceleration of every NPC from the current (pre-step) state."""
        vehicles = list(self.npcs) + ([self.ego] if include_ego else [])
        accels = [0.0] * len(self.npcs)
        by_lane = {}
        for index, vehicle in enumerate(vehicles):
            by_lane.setdefault(vehicle.lane, []).append(index)
        for indices in by_lane.values():
            ordered = sorted(indices, key=lambda i: (-vehicles[i].position, i))
            for rank, index in enumerate(ordered):
                if index >= len(self.npcs):
                    continue
                follower = vehicles[index]
                if rank == 0:
                    gap, lead_speed = math.inf, follower.speed
                else:
                    leader = vehicles[ordered[rank - 1]]
                    gap = max(leader.position - follower.position - VEHICLE_LENGTH, MIN_IDM_GAP)
                    lead_speed = leader.speed
                accels[index] = idm_accel(gap, follower.speed, lead_speed, self.idm, follower.desired_speed)
        return accels

    def step(self, action) -> StepResult:
        """
        Apply an action and advance the traffic by one IDM step.

        Raises:
            ContractViolation: the episode already terminated
        """
        if self.terminated or self.ego is None:
            raise ContractViolation("step() called on a terminated highway episode; call reset()")
        action = HighwayAction(int(action))
        dt = self.config.dt

        previous_lane = self.ego.lane
        if action == HighwayAction.LANE_LEFT:
            self.ego.lane = max(0, self.ego.lane - 1)
        elif action == HighwayAction.LANE_RIGHT:
            self.ego.lane = min(self.rightmost_lane, self.ego.lane + 1)
        elif action == HighwayAction.FASTER:
            self.ego.speed = min(MAX_SPEED, self.ego.speed + SPEED_DELTA)
        elif action == HighwayAction.SLOWER:
            self.ego.speed = max(0.0, self.ego.speed - SPEED_DELTA)

        before = [npc.position - self.ego.position for npc in self.npcs]
        accels = self._npc_accelerations(include_ego=True)
        for npc, accel in zip(self.npcs, accels):
            _advance(npc, accel, dt)
        self.ego.position += self.ego.speed * dt
        self.t += 1

        collision = 0
        for npc, dx_before in zip(self.npcs, before):
            if npc.lane != self.ego.lane:
                continue
            dx_after = npc.position - self.ego.position
            if abs(dx_after) < VEHICLE_LENGTH or dx_before * dx_after < 0:
                collision = 1
                break

        low, high = self.config.speed_reward_band
        reward = -1.0 * collision
        reward += 0.1 * (self.ego.lane == self.rightmost_lane)
        reward += 0.4 * (low <= self.ego.speed <= high)

        self.terminated = bool(collision) or self.t >= self.config.duration
        return StepResult(
            observation=self._observe(),
            reward=float(reward),
            terminated=self.terminated,
            collision_flag=collision,
            lane_index=self.ego.lane,
            info={'lane_changed': self.ego.lane != previous_lane, 't': self.t},
        )

    def _observe(self) -> np.ndarray:
        ego = self.ego
        obs = np.zeros(self.observation_dim)
        obs[OBS_EGO_SPEED] = ego.speed
        obs[OBS_EGO_LANE] = ego.lane

        ahead = 0
        leader: Optional[VehicleState] = None
        for npc in self.npcs:
            dx = npc.position - ego.position
            if 0.0 < dx <= DENSITY_RANGE:
                ahead += 1
            if npc.lane == ego.lane and dx > 0.0 and (leader is None or npc.position < leader.position):
                leader = npc
        obs[OBS_AHEAD_COUNT] = ahead
        if leader is not None:
            obs[OBS_LEADER_PRESENT] = 1.0
            obs[OBS_LEADER_GAP] = max(leader.position - ego.position - VEHICLE_LENGTH, 0.0)
            obs[OBS_LEADER_CLOSING] = ego.speed - leader.speed

        nearby = [
            (abs(npc.position - ego.position), npc.lane, index)
            for index, npc in enumerate(self.npcs)
            if abs(npc.position - ego.position) <= NEIGHBOR_RANGE
        ]
        nearby.sort()
        for slot, (_, _, index) in enumerate(nearby[:NEIGHBOR_SLOTS]):
            npc = self.npcs[index]
            base = OBS_NEIGHBORS + slot * SLOT_WIDTH
            obs[base:base + SLOT_WIDTH] = (1.0, npc.position - ego.position, npc.lane - ego.lane, npc.speed - ego.speed)
        return obs

    def traffic_rollout(self, steps: int) -> float:
        """
        Advance the current traffic with the ego removed.

        Args:
            steps: Number of IDM steps

        Returns:
            Smallest same-lane bumper gap between NPCs seen during the rollout
        """
        if self.ego is None:
            self.reset()
        smallest = math.inf
        for _ in range(steps):
            accels = self._npc_accelerations(include_ego=False)
            for npc, accel in zip(self.npcs, accels):
                _advance(npc, accel, self.config.dt)
            by_lane = {}
            for npc in self.npcs:
                by_lane.setdefault(npc.lane, []).append(npc.position)
            for positions in by_lane.values():
                positions.sort()
                for behind, ahead in zip(positions, positions[1:]):
                    smallest = min(smallest, ahead - behind - VEHICLE_LENGTH)
        return smallest


def density_level(vehicles_ahead: float) -> int:
    """Traffic density level from the count of vehicles within 50 m ahead"""
    if vehicles_ahead <= 2:
        return 1
    if vehicles_ahead <= 5:
        return 2
    return 3


def scenario_features(
    window: Sequence[Transition],
    dt: float = 1.0,
    v_thresh=(20.0, 30.0),
) -> ScenarioFeatures:
    """
    Derive the rule-table features of the latest step in a window.

    Args:
        window: Transitions of one episode up to and including the scored step
        dt: Step length in seconds
        v_thresh: (low, high) speed thresholds

    Returns:
        ScenarioFeatures of window[-1]
    """
    if not window:
        raise ContractViolation("scenario_features needs a nonempty window")
    last = window[-1]
    state, nxt = last.state, last.next_state

    closing = nxt[OBS_LEADER_CLOSING]
    if nxt[OBS_LEADER_PRESENT] > 0 and closing > 0:
        ttc = nxt[OBS_LEADER_GAP] / closing
    else:
        ttc = math.inf

    recent = window[-LANE_CHANGE_WINDOW:]
    lane_changes = sum(1 for tr in recent if tr.next_state[OBS_EGO_LANE] != tr.state[OBS_EGO_LANE])

    return ScenarioFeatures(
        ttc=float(ttc),
        acc=float((nxt[OBS_EGO_SPEED] - state[OBS_EGO_SPEED]) / dt),
        lc=int(nxt[OBS_EGO_LANE] != state[OBS_EGO_LANE]),
        rho=density_level(nxt[OBS_AHEAD_COUNT]),
        v=float(nxt[OBS_EGO_SPEED]),
        v_thresh=tuple(v_thresh),
        lane_change_count=lane_changes,
    )
