"""
Experiment Schema
Configuration dataclasses for environments, optimizer, feedback and the experiment matrix
"""

from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import Any, Dict, Optional, Tuple

from ..errors import ConfigurationError
from .feedback import ShapingWeights, StyleCoefficients, coefficients_for
from .trajectory import Profile


class Scenario(str, Enum):
    """Highway scenario variants"""
    DEFAULT = "default"
    CONGESTED_LANE = "congested_lane"
    SLOW_OBSTACLE_MIDDLE = "slow_obstacle_middle"


class EnvName(str, Enum):
    """Experiment environments"""
    HIGHWAY_DEFAULT = "highway_default"
    HIGHWAY_CASE1 = "highway_case1"
    HIGHWAY_CASE2 = "highway_case2"
    REACHER = "reacher"

    @property
    def is_highway(self) -> bool:
        return self != EnvName.REACHER

    @property
    def default_total_timesteps(self) -> int:
        """Training budget used when the config leaves ppo.total_timesteps out"""
        return 50_000 if self == EnvName.REACHER else 10_000

    @property
    def scenario(self) -> Scenario:
        return {
            EnvName.HIGHWAY_CASE1: Scenario.CONGESTED_LANE,
            EnvName.HIGHWAY_CASE2: Scenario.SLOW_OBSTACLE_MIDDLE,
        }.get(self, Scenario.DEFAULT)

    @classmethod
    def for_scenario(cls, scenario: Scenario) -> 'EnvName':
        return {
            Scenario.DEFAULT: cls.HIGHWAY_DEFAULT,
            Scenario.CONGESTED_LANE: cls.HIGHWAY_CASE1,
            Scenario.SLOW_OBSTACLE_MIDDLE: cls.HIGHWAY_CASE2,
        }[scenario]


class FIS(str, Enum):
    """Feedback integration strategy of an experiment cell"""
    HF_D = "HF-D"
    HF_RSM = "HF-RSM"
    LLM_D = "LLM-D"
    LLM_HFBF = "LLM-HFBF"
    NONE = "none"

    @classmethod
    def parse(cls, value) -> 'FIS':
        if isinstance(value, FIS):
            return value
        text = str(value).strip()
        if text.lower() == "none":
            return cls.NONE
        try:
            return cls(text.upper())
        except ValueError:
            raise ConfigurationError(f"Unknown FIS '{value}'; expected one of {[f.value for f in cls]}")


class ProviderKind(str, Enum):
    MOCK = "mock"
    REMOTE = "remote"


def _pick(cls, data: Optional[Dict[str, Any]]) -> Dict[str, Any]:
    """Keep only keys that are fields of the dataclass, rejecting unknown ones"""
    data = dict(data or {})
    known = set(cls.__dataclass_fields__)
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigurationError(f"Unknown keys for {cls.__name__}: {unknown}")
    return data


@dataclass(frozen=True)
class HighwayConfig:
    """
    Highway simulator settings

    Attributes:
        lane_count: Number of lanes (lane lane_count-1 is the rightmost)
        vehicle_count: Vehicles on the road including the ego
        duration: Maximum steps per episode
        dt: Seconds per step
        speed_reward_band: Speeds earning the speed reward (m/s)
        scenario: Default or one of the edge-case layouts
        seed: Base seed
    """
    lane_count: int = 4
    vehicle_count: int = 50
    duration: int = 40
    dt: float = 1.0
    speed_reward_band: Tuple[float, float] = (20.0, 30.0)
    scenario: Scenario = Scenario.DEFAULT
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'scenario', Scenario(self.scenario))
        object.__setattr__(self, 'speed_reward_band', tuple(float(v) for v in self.speed_reward_band))
        errors = []
        if self.lane_count < 2:
            errors.append("lane_count must be >= 2")
        if self.vehicle_count < 1:
            errors.append("vehicle_count must be >= 1")
        if self.duration < 1:
            errors.append("duration must be >= 1")
        if self.dt <= 0:
            errors.append("dt must be > 0")
        if len(self.speed_reward_band) != 2 or not self.speed_reward_band[0] < self.speed_reward_band[1]:
            errors.append("speed_reward_band must be [v_lo, v_hi] with v_lo < v_hi")
        if errors:
            raise ConfigurationError("; ".join(errors))

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['scenario'] = self.scenario.value
        data['speed_reward_band'] = list(self.speed_reward_band)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'HighwayConfig':
        return cls(**_pick(cls, data))


@dataclass(frozen=True)
class ReacherConfig:
    """
    Two-link reacher settings

    Attributes:
        w_near: Weight of the distance penalty
        w_ctrl: Weight of the squared-torque penalty
        torque_limit: Per-joint torque bound
        dt: Seconds per step
        episode_length: Steps per episode
        seed: Base seed
    """
    w_near: float = 1.0
    w_ctrl: float = 0.01
    torque_limit: float = 1.0
    dt: float = 0.02
    episode_length: int = 50
    seed: int = 0

    def __post_init__(self):
        errors = []
        if not self.w_near > 0:
            errors.append("w_near must be > 0")
        if self.w_ctrl < 0:
            errors.append("w_ctrl must be >= 0")
        if not self.torque_limit > 0:
            errors.append("torque_limit must be > 0")
        if self.episode_length < 1:
            errors.append("episode_length must be >= 1")
        if errors:
            raise ConfigurationError("; ".join(errors))

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ReacherConfig':
        return cls(**_pick(cls, data))


@dataclass(frozen=True)
class PPOConfig:
    """
    PPO hyperparameters

    Attributes:
        clip_eps: Ratio clip epsilon
        gamma: Discount
        gae_lambda: GAE lambda
        learning_rate: Adam step size
        epochs_per_batch: Passes over each collected batch
        minibatch_size: Samples per gradient step
        batch_timesteps: Steps collected per batch (episodes are completed)
        total_timesteps: Training budget
        hidden_size: Width of the two hidden layers
        value_coef: Weight of the value loss
        entropy_coef: Weight of the entropy bonus
        max_grad_norm: Global gradient-norm clip
        single_batch: Collect once and optimize offline on that batch only
    """
    clip_eps: float = 0.2
    gamma: float = 0.99
    gae_lambda: float = 0.95
    learning_rate: float = 3e-4
    epochs_per_batch: int = 10
    minibatch_size: int = 64
    batch_timesteps: int = 2048
    total_timesteps: int = 10_000
    hidden_size: int = 64
    value_coef: float = 0.5
    entropy_coef: float = 0.01
    max_grad_norm: float = 0.5
    single_batch: bool = False

    def __post_init__(self):
        errors = []
        if not 0 < self.clip_eps < 1:
            errors.append("clip_eps must be in (0, 1)")
        if not 0 < self.gamma <= 1:
            errors.append("gamma must be in (0, 1]")
        if not 0 < self.gae_lambda <= 1:
            errors.append("gae_lambda must be in (0, 1]")
        if not self.learning_rate > 0:
            errors.append("learning_rate must be > 0")
        if self.epochs_per_batch < 1 or self.minibatch_size < 1 or self.batch_timesteps < 1:
            errors.append("epochs_per_batch, minibatch_size and batch_timesteps must be >= 1")
        if self.total_timesteps < 0:
            errors.append("total_timesteps must be >= 0")
        if errors:
            raise ConfigurationError("; ".join(errors))

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'PPOConfig':
        return cls(**_pick(cls, data))


@dataclass(frozen=True)
class FMAConfig:
    """Feedback-misalignment weights and reward threshold"""
    lambda1: float = 1.0
    lambda2: float = 1.0
    lambda3: float = 1.0
    lambda4: float = 0.1
    theta: float = 0.0

    def __post_init__(self):
        if min(self.lambda1, self.lambda2, self.lambda3, self.lambda4) < 0:
            raise ConfigurationError("FMA weights must be >= 0")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'FMAConfig':
        return cls(**_pick(cls, data))


@dataclass(frozen=True)
class SurrogateConfig:
    """HF-RSM regressor settings"""
    hidden_size: int = 32
    epochs: int = 200
    learning_rate: float = 1e-3
    minibatch_size: int = 64
    min_samples: int = 100
    seed: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'SurrogateConfig':
        return cls(**_pick(cls, data))


@dataclass(frozen=True)
class LLMConfig:
    """
    Feedback provider settings

    Attributes:
        provider: mock or remote
        model: Model name sent to the chat endpoint
        temperature: Decoding temperature
        timeout: Per-request timeout in seconds
        max_retries: Transport retries per request
        reask_attempts: Re-asks after an unparseable answer
        max_in_flight: Concurrent requests bound
        alpha_action: Scale of llm_score_1
        alpha_reward: Scale of llm_score_2
        bias_tolerance: Mock oracle tolerance before flagging a score as biased
        use_pcs_in_direct: Include PC1-PC3 in direct-feedback prompts
    """
    provider: ProviderKind = ProviderKind.MOCK
    model: str = "mistral-7b-instruct"
    temperature: float = 0.0
    timeout: float = 60.0
    max_retries: int = 2
    reask_attempts: int = 2
    max_in_flight: int = 4
    alpha_action: float = 0.25
    alpha_reward: float = 0.2
    bias_tolerance: float = 0.5
    use_pcs_in_direct: bool = False

    def __post_init__(self):
        object.__setattr__(self, 'provider', ProviderKind(self.provider))
        if self.max_in_flight < 1:
            raise ConfigurationError("max_in_flight must be >= 1")
        if self.max_retries < 0 or self.reask_attempts < 0:
            raise ConfigurationError("max_retries and reask_attempts must be >= 0")

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data['provider'] = self.provider.value
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'LLMConfig':
        return cls(**_pick(cls, data))


@dataclass(frozen=True)
class Cell:
    """One (strategy, profile) entry of the experiment matrix"""
    fis: FIS
    profile: Profile

    @property
    def label(self) -> str:
        if self.profile == Profile.NA:
            return self.fis.value
        return f"{self.fis.value}/{self.profile.value}"

    @property
    def slug(self) -> str:
        return self.label.replace("/", "_").lower()

    def to_dict(self) -> Dict[str, Any]:
        return {'fis': self.fis.value, 'profile': self.profile.value}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'Cell':
        fis = FIS.parse(data.get('fis', 'none'))
        profile = Profile.parse(data.get('profile', 'NA'))
        if fis in (FIS.LLM_D, FIS.NONE):
            profile = Profile.NA
        return cls(fis=fis, profile=profile)


@dataclass(frozen=True)
class ExperimentConfig:
    """
    Full experiment description

    Attributes:
        env: Environment of every cell
        matrix: (strategy, profile) cells to run
        seeds: Seeds run per cell
        eval_episodes: Greedy evaluation episodes per trained policy
        output_dir: Root directory for artifacts
        workers: Parallel worker processes for the matrix
        highway: Highway simulator settings
        reacher: Reacher settings
        ppo: Optimizer settings
        fma: Misalignment metric settings
        llm: Feedback provider settings
        surrogate: HF-RSM settings
        weights: Rule score category weights
        custom_coefficients: Optional user tables keyed by profile name
    """
    env: EnvName = EnvName.HIGHWAY_DEFAULT
    matrix: Tuple[Cell, ...] = (Cell(FIS.HF_D, Profile.IDEAL),)
    seeds: Tuple[int, ...] = (0,)
    eval_episodes: int = 5
    output_dir: str = "runs"
    workers: int = 1
    highway: HighwayConfig = field(default_factory=HighwayConfig)
    reacher: ReacherConfig = field(default_factory=ReacherConfig)
    ppo: PPOConfig = field(default_factory=PPOConfig)
    fma: FMAConfig = field(default_factory=FMAConfig)
    llm: LLMConfig = field(default_factory=LLMConfig)
    surrogate: SurrogateConfig = field(default_factory=SurrogateConfig)
    weights: ShapingWeights = field(default_factory=ShapingWeights)
    custom_coefficients: Dict[str, StyleCoefficients] = field(default_factory=dict)

    @property
    def fis(self) -> FIS:
        """Strategy of the first cell (single-cell commands)"""
        return self.matrix[0].fis

    @property
    def profile(self) -> Profile:
        return self.matrix[0].profile

    @property
    def needs_llm(self) -> bool:
        return any(cell.fis in (FIS.LLM_D, FIS.LLM_HFBF) for cell in self.matrix)

    def highway_config(self) -> HighwayConfig:
        """Highway settings with the scenario implied by the env name"""
        return replace(self.highway, scenario=self.env.scenario)

    def with_cell(self, cell: Cell) -> 'ExperimentConfig':
        return replace(self, matrix=(cell,))

    def coefficients(self, profile: Profile) -> StyleCoefficients:
        """Custom table for the profile if configured, built-in otherwise"""
        custom = self.custom_coefficients.get(profile.value)
        return custom if custom is not None else coefficients_for(profile)

    def to_dict(self) -> Dict[str, Any]:
        """Nested dictionary mirroring the YAML layout"""
        return {
            'env': {'name': self.env.value, **{
                k: v for k, v in self.highway.to_dict().items() if k != 'scenario'
            }},
            'reacher': self.reacher.to_dict(),
            'fis': {
                'strategy': self.fis.value,
                'profile': self.profile.value,
                'weights': self.weights.to_dict(),
                'coefficients': {
                    k: {key: val for key, val in v.to_dict().items() if key != 'profile'}
                    for k, v in self.custom_coefficients.items()
                },
            },
            'llm': self.llm.to_dict(),
            'ppo': self.ppo.to_dict(),
            'fma': self.fma.to_dict(),
            'surrogate': self.surrogate.to_dict(),
            'experiment': {
                'seeds': list(self.seeds),
                'eval_episodes': self.eval_episodes,
                'output_dir': self.output_dir,
                'workers': self.workers,
                'matrix': [cell.to_dict() for cell in self.matrix],
            },
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ExperimentConfig':
        """Create from the nested YAML layout"""
        data = dict(data or {})
        env_section = dict(data.get('env') or {})
        name = env_section.pop('name', None)
        scenario = env_section.pop('scenario', None)
        try:
            if scenario is not None:
                env = EnvName.for_scenario(Scenario(scenario))
            elif name is not None:
                env = EnvName(name)
            else:
                env = EnvName.HIGHWAY_DEFAULT
        except ValueError as e:
            raise ConfigurationError(f"env: {e}")

        fis_section = dict(data.get('fis') or {})
        experiment = dict(data.get('experiment') or {})
        try:
            if experiment.get('matrix'):
                matrix = tuple(Cell.from_dict(c) for c in experiment['matrix'])
            else:
                matrix = (Cell.from_dict({
                    'fis': fis_section.get('strategy', 'HF-D'),
                    'profile': fis_section.get('profile', 'IDEAL'),
                }),)
            custom = {
                Profile.parse(key).value: StyleCoefficients.from_dict({'profile': key, **table})
                for key, table in (fis_section.get('coefficients') or {}).items()
            }
            weights = ShapingWeights.from_dict(fis_section.get('weights') or {})
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigurationError(f"fis: {e}")

        ppo_section = dict(data.get('ppo') or {})
        if 'total_timesteps' in experiment:
            ppo_section['total_timesteps'] = experiment['total_timesteps']
        ppo_section.setdefault('total_timesteps', env.default_total_timesteps)

        try:
            return cls(
                env=env,
                matrix=matrix,
                seeds=tuple(int(s) for s in experiment.get('seeds', [0])),
                eval_episodes=int(experiment.get('eval_episodes', 5)),
                output_dir=str(experiment.get('output_dir', 'runs')),
                workers=int(experiment.get('workers', 1)),
                highway=HighwayConfig.from_dict(env_section),
                reacher=ReacherConfig.from_dict(data.get('reacher')),
                ppo=PPOConfig.from_dict(ppo_section),
                fma=FMAConfig.from_dict(data.get('fma')),
                llm=LLMConfig.from_dict(data.get('llm')),
                surrogate=SurrogateConfig.from_dict(data.get('surrogate')),
                weights=weights,
                custom_coefficients=custom,
            )
        except (TypeError, ValueError) as e:
            raise ConfigurationError(str(e))
