"""
Feedback Schema
Style coefficient tables, shaping weights and scenario features for the rule-based proxy
"""

import math
from dataclasses import dataclass
from typing import Any, Dict, List, Sequence, Tuple

from .trajectory import Profile

LANE_SLOTS = 4
COLLISION_SLOTS = 5
SPEED_SLOTS = 9


@dataclass(frozen=True)
class StyleCoefficients:
    """
    Coefficient arrays of one behavioral profile

    Attributes:
        profile: Profile name
        b_lane: n0..n3, indexed by lane changes in the recent window
        b_collision: c0..c4, indexed by the collision scenario
        b_speed: s0..s8, indexed by 3(rho-1) + speed level
    """
    profile: Profile
    b_lane: Tuple[int, ...]
    b_collision: Tuple[int, ...]
    b_speed: Tuple[int, ...]

    def __post_init__(self):
        sizes = (len(self.b_lane), len(self.b_collision), len(self.b_speed))
        if sizes != (LANE_SLOTS, COLLISION_SLOTS, SPEED_SLOTS):
            raise ValueError(
                f"Style coefficients need 4+5+9 entries, got {sizes[0]}+{sizes[1]}+{sizes[2]}"
            )

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary"""
        return {
            'profile': self.profile.value,
            'b_lane': list(self.b_lane),
            'b_collision': list(self.b_collision),
            'b_speed': list(self.b_speed),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'StyleCoefficients':
        """Create from dictionary (custom tables from config)"""
        return cls(
            profile=Profile.parse(data.get('profile', 'NA')),
            b_lane=tuple(int(v) for v in data['b_lane']),
            b_collision=tuple(int(v) for v in data['b_collision']),
            b_speed=tuple(int(v) for v in data['b_speed']),
        )


BUILTIN_COEFFICIENTS: Dict[Profile, StyleCoefficients] = {
    Profile.IDEAL: StyleCoefficients(
        profile=Profile.IDEAL,
        b_lane=(1, 0, -1, -1),
        b_collision=(1, 0, 1, -2, 2),
        b_speed=(2, 1, -1, -1, 2, -1, -2, -1, 2),
    ),
    Profile.AGG: StyleCoefficients(
        profile=Profile.AGG,
        b_lane=(-2, 1, 2, 2),
        b_collision=(-2, 2, 1, -1, -2),
        b_speed=(2, 1, -2, 1, 0, -1, 2, 1, -2),
    ),
    Profile.RAD: StyleCoefficients(
        profile=Profile.RAD,
        b_lane=(-2, 0, 1, 1),
        b_collision=(-2, 1, 1, 0, -2),
        b_speed=(1, 0, -2, 0, -1, -2, 1, 0, -2),
    ),
}


def coefficients_for(profile) -> StyleCoefficients:
    """Built-in table for a profile name or enum"""
    if isinstance(profile, StyleCoefficients):
        return profile
    parsed = Profile.parse(profile)
    if parsed not in BUILTIN_COEFFICIENTS:
        raise ValueError(f"No built-in coefficient table for profile {parsed.value}")
    return BUILTIN_COEFFICIENTS[parsed]


@dataclass(frozen=True)
class ShapingWeights:
    """Category weights of the rule score (all 1 by default)"""
    w_lane: float = 1.0
    w_collision: float = 1.0
    w_speed: float = 1.0

    def __post_init__(self):
        for name in ('w_lane', 'w_collision', 'w_speed'):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")

    def scaled(self, alpha: float) -> 'ShapingWeights':
        return ShapingWeights(self.w_lane * alpha, self.w_collision * alpha, self.w_speed * alpha)

    def to_dict(self) -> Dict[str, Any]:
        return {'w_lane': self.w_lane, 'w_collision': self.w_collision, 'w_speed': self.w_speed}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ShapingWeights':
        return cls(
            w_lane=float(data.get('w_lane', 1.0)),
            w_collision=float(data.get('w_collision', 1.0)),
            w_speed=float(data.get('w_speed', 1.0)),
        )


@dataclass(frozen=True)
class ScenarioFeatures:
    """
    Per-step quantities that index the coefficient tables

    Attributes:
        ttc: Time to collision with the leader, math.inf when not closing
        acc: Ego acceleration over the step (m/s^2)
        lc: 1 if the ego changed lane this step
        rho: Traffic density level in {1, 2, 3}
        v: Ego speed after the step (m/s)
        v_thresh: (low, high) speed thresholds
        lane_change_count: Lane changes in the recent window, clamped to [0, 3]
    """
    ttc: float
    acc: float
    lc: int
    rho: int
    v: float
    v_thresh: Tuple[float, float] = (20.0, 30.0)
    lane_change_count: int = 0

    def __post_init__(self):
        if self.rho not in (1, 2, 3):
            raise ValueError(f"rho must be 1, 2 or 3, got {self.rho}")
        if not self.v_thresh[0] < self.v_thresh[1]:
            raise ValueError(f"v_thresh must be increasing, got {self.v_thresh}")
        object.__setattr__(self, 'lane_change_count', min(max(int(self.lane_change_count), 0), 3))

    @property
    def speed_level(self) -> int:
        """0 high, 1 medium, 2 low"""
        if self.v > self.v_thresh[1]:
            return 0
        if self.v >= self.v_thresh[0]:
            return 1
        return 2

    def as_vector(self, ttc_cap: float = 10.0) -> List[float]:
        """Finite numeric encoding used as surrogate model input"""
        return [
            min(self.ttc, ttc_cap),
            float(self.acc),
            float(self.lc),
            float(self.rho),
            float(self.v),
            float(self.lane_change_count),
        ]


SURROGATE_HIGHWAY_FEATURES: Sequence[str] = ('ttc', 'acc', 'lc', 'rho', 'v', 'lane_change_count')
