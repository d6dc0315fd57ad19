"""
Trajectory Schema
Per-step experience records for collected (D) and shaped (D') datasets
"""

import math
from dataclasses import dataclass, field, fields
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple, Union

Action = Union[int, Tuple[float, float]]


class ShapingSource(str, Enum):
    """Feedback integration strategies"""
    HF_D = "HF-D"
    HF_RSM = "HF-RSM"
    LLM_D = "LLM-D"
    LLM_HFBF = "LLM-HFBF"


class Profile(str, Enum):
    """Behavioral profiles of the rule-based feedback proxy"""
    IDEAL = "IDEAL"
    AGG = "AGG"
    RAD = "RAD"
    NA = "NA"

    @classmethod
    def parse(cls, value: Union[str, 'Profile']) -> 'Profile':
        """Accept 'ideal', 'IDEAL' or a Profile"""
        if isinstance(value, Profile):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise ValueError(f"Unknown profile '{value}'; expected one of {[p.value for p in cls]}")


def _float_list(values) -> List[float]:
    return [float(v) for v in values]


def _encode_action(action: Action) -> Any:
    if isinstance(action, (list, tuple)):
        return [float(a) for a in action]
    return int(action)


def _decode_action(raw: Any) -> Action:
    if isinstance(raw, list):
        return tuple(float(a) for a in raw)
    return int(raw)


@dataclass
class Transition:
    """
    One environment step

    Attributes:
        episode_id: Episode the step belongs to
        t: Timestep within the episode (0-based)
        state: Observation before the action
        action: Discrete action id (Highway) or torque pair (Reacher)
        reward: Intrinsic environment reward r_t
        next_state: Observation after the action
        collision_flag: 1 if the step ended in a collision
        lane_index: Ego lane after the step, -1 for Reacher
        terminal: True on the last step of the episode
        behavior_logprob: log pi(a|s) of the collecting policy
    """
    episode_id: int
    t: int
    state: List[float]
    action: Action
    reward: float
    next_state: List[float]
    collision_flag: int
    lane_index: int
    terminal: bool
    behavior_logprob: float

    def __post_init__(self):
        if not math.isfinite(self.behavior_logprob):
            raise ValueError(
                f"behavior_logprob must be finite (episode {self.episode_id}, t {self.t})"
            )

    @property
    def is_highway(self) -> bool:
        return self.lane_index >= 0

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary with JSON-native values"""
        return {
            'episode_id': int(self.episode_id),
            't': int(self.t),
            'state': _float_list(self.state),
            'action': _encode_action(self.action),
            'reward': float(self.reward),
            'next_state': _float_list(self.next_state),
            'collision_flag': int(self.collision_flag),
            'lane_index': int(self.lane_index),
            'terminal': bool(self.terminal),
            'behavior_logprob': float(self.behavior_logprob),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'Transition':
        """Create from dictionary"""
        return cls(**_transition_kwargs(data))

    def base_kwargs(self) -> Dict[str, Any]:
        """Constructor kwargs of the plain Transition fields"""
        return {f.name: getattr(self, f.name) for f in fields(Transition)}


def _transition_kwargs(data: Dict[str, Any]) -> Dict[str, Any]:
    return {
        'episode_id': int(data['episode_id']),
        't': int(data['t']),
        'state': _float_list(data['state']),
        'action': _decode_action(data['action']),
        'reward': float(data['reward']),
        'next_state': _float_list(data['next_state']),
        'collision_flag': int(data['collision_flag']),
        'lane_index': int(data['lane_index']),
        'terminal': bool(data['terminal']),
        'behavior_logprob': float(data['behavior_logprob']),
    }


@dataclass
class ShapedTransition(Transition):
    """
    Transition annotated with a shaping signal

    Attributes:
        shaped_reward: Feedback term r_hat_t
        augmented_reward: r_t + r_hat_t, kept exactly equal to the sum
        shaping_source: Strategy that produced r_hat_t
        profile: Rule profile behind the feedback (NA for pure LLM feedback)
        bias_flagged: LLM-HFBF only, True when the human score was replaced
        pc: LLM-HFBF only, (PC1, PC2, PC3) of the step features
        skipped: True when the provider never produced a usable answer
    """
    shaped_reward: float = 0.0
    augmented_reward: float = 0.0
    shaping_source: ShapingSource = ShapingSource.HF_D
    profile: Profile = Profile.NA
    bias_flagged: Optional[bool] = None
    pc: Optional[Tuple[float, float, float]] = None
    skipped: bool = False

    def __post_init__(self):
        super().__post_init__()
        self.shaped_reward = float(self.shaped_reward)
        self.augmented_reward = float(self.reward) + self.shaped_reward
        is_hfbf = self.shaping_source == ShapingSource.LLM_HFBF
        if is_hfbf != (self.bias_flagged is not None and self.pc is not None):
            raise ValueError("bias_flagged and pc must be present exactly for LLM-HFBF steps")

    @classmethod
    def annotate(
        cls,
        transition: Transition,
        shaped_reward: float,
        source: ShapingSource,
        profile: Profile = Profile.NA,
        bias_flagged: Optional[bool] = None,
        pc: Optional[Tuple[float, float, float]] = None,
        skipped: bool = False,
    ) -> 'ShapedTransition':
        """Wrap a (possibly already shaped) transition with a new shaping signal"""
        return cls(
            **transition.base_kwargs(),
            shaped_reward=shaped_reward,
            shaping_source=source,
            profile=profile,
            bias_flagged=bias_flagged,
            pc=tuple(float(v) for v in pc) if pc is not None else None,
            skipped=skipped,
        )

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary with JSON-native values"""
        data = super().to_dict()
        data.update({
            'shaped_reward': float(self.shaped_reward),
            'augmented_reward': float(self.augmented_reward),
            'shaping_source': self.shaping_source.value,
            'profile': self.profile.value,
            'bias_flagged': self.bias_flagged,
            'pc': [float(v) for v in self.pc] if self.pc is not None else None,
            'skipped': bool(self.skipped),
        })
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ShapedTransition':
        """Create from dictionary"""
        pc = data.get('pc')
        record = cls(
            **_transition_kwargs(data),
            shaped_reward=float(data['shaped_reward']),
            shaping_source=ShapingSource(data['shaping_source']),
            profile=Profile(data['profile']),
            bias_flagged=data.get('bias_flagged'),
            pc=tuple(float(v) for v in pc) if pc is not None else None,
            skipped=bool(data.get('skipped', False)),
        )
        stored = float(data['augmented_reward'])
        if stored != record.augmented_reward:
            raise ValueError(
                f"augmented_reward {stored!r} != reward + shaped_reward {record.augmented_reward!r}"
            )
        return record


def training_reward(transition: Transition) -> float:
    """Reward the optimizer sees: augmented when shaped, intrinsic otherwise"""
    if isinstance(transition, ShapedTransition):
        return transition.augmented_reward
    return transition.reward
