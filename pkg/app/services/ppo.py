"""
PPO Service
Actor-critic MLPs, rollout collection, GAE and the clipped-surrogate update in numpy.
"""

import json
import logging
import math
from dataclasses import asdict, dataclass
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from ..envs.base import Environment
from ..errors import ContractViolation, NumericalError
from ..logging_config import kv
from ..schemas.experiment import PPOConfig
from ..schemas.trajectory import ShapedTransition, Transition, training_reward
from .mlp import MLP, Adam, clip_grad_norm
from .trajectory_store import TrajectoryDataset

logger = logging.getLogger(__name__)

Shaper = Callable[[TrajectoryDataset], TrajectoryDataset]

LOG_STD_BOUNDS = (-5.0, 2.0)
LOG_2PI = math.log(2.0 * math.pi)
EPISODE_SEED_STRIDE = 100_000
EVAL_SEED_OFFSET = 90_000
TRAINING_LOG_COLUMNS = (
    'batch_index', 'timesteps', 'mean_intrinsic_reward', 'mean_shaped_reward',
    'policy_loss', 'value_loss', 'entropy',
)


class ActorCritic:
    """
    Policy and value networks for one environment.

    Discrete policies output action logits. Continuous policies output a
    tanh-squashed Gaussian mean (scaled to the action limit) with a
    state-independent log-std kept inside LOG_STD_BOUNDS.
    """

    def __init__(
        self,
        obs_dim: int,
        n_actions: int = 0,
        action_dim: int = 0,
        action_limit: float = 1.0,
        hidden_size: int = 64,
        seed: int = 0,
        obs_scale: Optional[Sequence[float]] = None,
    ):
        if (n_actions > 0) == (action_dim > 0):
            raise ValueError("set exactly one of n_actions (discrete) or action_dim (continuous)")
        rng = np.random.default_rng(seed)
        self.obs_dim = int(obs_dim)
        self.discrete = n_actions > 0
        self.n_actions = int(n_actions)
        self.action_dim = int(action_dim)
        self.action_limit = float(action_limit)
        self.hidden_size = int(hidden_size)
        self.seed = int(seed)
        scale = np.ones(obs_dim) if obs_scale is None else np.asarray(obs_scale, dtype=float)
        self.obs_scale = np.where(scale != 0, scale, 1.0)
        outputs = self.n_actions if self.discrete else self.action_dim
        self.policy = MLP((obs_dim, hidden_size, hidden_size, outputs), rng, output_gain=0.01)
        self.value = MLP((obs_dim, hidden_size, hidden_size, 1), rng, output_gain=1.0)
        self.log_std = np.zeros(self.action_dim)

    @classmethod
    def for_env(cls, env: Environment, hidden_size: int = 64, seed: int = 0) -> 'ActorCritic':
        if env.discrete:
            return cls(env.observation_dim, n_actions=env.n_actions, hidden_size=hidden_size,
                       seed=seed, obs_scale=env.observation_scale)
        return cls(env.observation_dim, action_dim=env.action_dim, action_limit=env.action_limit,
                   hidden_size=hidden_size, seed=seed, obs_scale=env.observation_scale)

    def parameters(self) -> List[np.ndarray]:
        """Live parameter arrays: policy, log-std (continuous only), value"""
        params = list(self.policy.params())
        if not self.discrete:
            params.append(self.log_std)
        return params + list(self.value.params())

    def _inputs(self, observations) -> np.ndarray:
        x = np.atleast_2d(np.asarray(observations, dtype=float))
        if x.shape[1] != self.obs_dim:
            raise ContractViolation(f"observation has {x.shape[1]} entries, policy expects {self.obs_dim}")
        return x / self.obs_scale

    def action_probs(self, observations) -> np.ndarray:
        """Categorical probabilities (discrete policies)"""
        logits = self.policy(self._inputs(observations))
        return np.exp(_log_softmax(logits))

    def mean_action(self, observations) -> np.ndarray:
        """Gaussian mean (continuous policies)"""
        return self.action_limit * np.tanh(self.policy(self._inputs(observations)))

    def act(self, observation, rng: np.random.Generator, greedy: bool = False) -> Tuple[Any, float]:
        """
        Choose an action for one observation.

        Returns:
            (action, log-probability under the current policy)
        """
        if self.discrete:
            log_probs = _log_softmax(self.policy(self._inputs(observation)))[0]
            probs = np.exp(log_probs)
            if greedy:
                action = int(np.argmax(log_probs))
            else:
                drawn = int(np.searchsorted(np.cumsum(probs), rng.random(), side='right'))
                # never past the last action whose probability did not underflow
                action = min(drawn, int(np.flatnonzero(probs > 0)[-1]))
            return action, float(log_probs[action])
        mean = self.mean_action(observation)[0]
        if greedy:
            sample = mean
        else:
            sample = mean + np.exp(self.log_std) * rng.standard_normal(self.action_dim)
        action = tuple(float(a) for a in sample)
        return action, float(self.log_prob([observation], [action])[0])

    def log_prob(self, observations, actions) -> np.ndarray:
        x = self._inputs(observations)
        if self.discrete:
            index = np.asarray(actions, dtype=int)
            return _log_softmax(self.policy(x))[np.arange(len(x)), index]
        mean = self.action_limit * np.tanh(self.policy(x))
        return _gaussian_log_prob(np.asarray(actions, dtype=float), mean, self.log_std)

    def values(self, observations) -> np.ndarray:
        return self.value(self._inputs(observations))[:, 0]

    def copy(self) -> 'ActorCritic':
        return ActorCritic.from_dict(self.to_dict())

    def to_dict(self) -> Dict[str, Any]:
        """Checkpoint: JSON weight dump with shape metadata"""
        return {
            'obs_dim': self.obs_dim,
            'n_actions': self.n_actions,
            'action_dim': self.action_dim,
            'action_limit': self.action_limit,
            'hidden_size': self.hidden_size,
            'seed': self.seed,
            'obs_scale': self.obs_scale.tolist(),
            'policy': self.policy.to_dict(),
            'value': self.value.to_dict(),
            'log_std': self.log_std.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'ActorCritic':
        model = cls(data['obs_dim'], data['n_actions'], data['action_dim'], data['action_limit'],
                    data['hidden_size'], data['seed'], data['obs_scale'])
        model.policy = MLP.from_dict(data['policy'])
        model.value = MLP.from_dict(data['value'])
        model.log_std = np.array(data['log_std'], dtype=float)
        return model


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _gaussian_log_prob(actions: np.ndarray, mean: np.ndarray, log_std: np.ndarray) -> np.ndarray:
    z = (actions - mean) / np.exp(log_std)
    return np.sum(-0.5 * z * z - log_std - 0.5 * LOG_2PI, axis=1)


def save_checkpoint(model: ActorCritic, path: str) -> str:
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(model.to_dict(), f)
    return path


def load_checkpoint(path: str) -> ActorCritic:
    with open(path, 'r', encoding='utf-8') as f:
        return ActorCritic.from_dict(json.load(f))


@dataclass
class AdvantageBatch:
    """
    GAE output for one batch

    Attributes:
        advantages: Per-step advantage estimates
        returns: advantages + values (value-function targets)
        normalized: Advantages shifted to zero mean and scaled to unit std
    """
    advantages: np.ndarray
    returns: np.ndarray
    normalized: np.ndarray


def gae(rewards: Sequence[float], values: Sequence[float], terminals: Sequence[bool],
        gamma: float, lam: float) -> AdvantageBatch:
    """
    Generalized advantage estimation over a sequence of episodes.

    Bootstrapping stops at terminal steps; a trailing non-terminal step
    bootstraps from 0.

    Raises:
        ValueError: the three sequences differ in length
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    terminals = np.asarray(terminals, dtype=bool)
    if not len(rewards) == len(values) == len(terminals):
        raise ValueError(f"length mismatch: {len(rewards)} rewards, {len(values)} values, {len(terminals)} terminals")

    advantages = np.zeros(len(rewards))
    running = 0.0
    for t in reversed(range(len(rewards))):
        if terminals[t] or t + 1 == len(rewards):
            next_value, running = 0.0, 0.0
        else:
            next_value = values[t + 1]
        delta = rewards[t] + gamma * next_value - values[t]
        running = delta + gamma * lam * running
        advantages[t] = running

    centered = advantages - advantages.mean() if len(advantages) else advantages
    std = centered.std() if len(centered) > 1 else 0.0
    normalized = centered / (std + 1e-8) if std > 0 else centered
    return AdvantageBatch(advantages, advantages + values, normalized)


@dataclass
class RolloutBatch:
    """Minibatch the clipped loss is evaluated on"""
    observations: np.ndarray
    actions: np.ndarray
    behavior_logprobs: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray

    def __len__(self) -> int:
        return len(self.observations)

    def subset(self, index: np.ndarray) -> 'RolloutBatch':
        return RolloutBatch(self.observations[index], self.actions[index], self.behavior_logprobs[index],
                            self.advantages[index], self.returns[index])


@dataclass
class LossTerms:
    total: float
    policy_loss: float
    value_loss: float
    entropy: float
    clip_fraction: float


def clipped_loss(
    model: ActorCritic,
    batch: RolloutBatch,
    clip_eps: float = 0.2,
    value_coef: float = 0.5,
    entropy_coef: float = 0.01,
    batch_index: Optional[int] = None,
) -> Tuple[LossTerms, List[np.ndarray]]:
    """
    Clipped surrogate + value + entropy loss and its gradient.

    total = -mean(min(rho*A, clip(rho, 1-eps, 1+eps)*A)) + value_coef*mean((V-G)^2)
            - entropy_coef*mean(H)

    Returns:
        (loss terms, gradients aligned with model.parameters())

    Raises:
        ContractViolation: empty batch
        NumericalError: non-finite loss or gradient
    """
    n = len(batch)
    if n == 0:
        raise ContractViolation("clipped_loss needs a non-empty batch")
    x = model._inputs(batch.observations)
    advantages = batch.advantages

    out, policy_cache = model.policy.forward(x)
    if model.discrete:
        log_probs = _log_softmax(out)
        probs = np.exp(log_probs)
        actions = batch.actions.astype(int)
        logp = log_probs[np.arange(n), actions]
        per_step_entropy = -np.sum(probs * log_probs, axis=1)
    else:
        squashed = np.tanh(out)
        mean = model.action_limit * squashed
        actions = batch.actions.astype(float)
        logp = _gaussian_log_prob(actions, mean, model.log_std)
        per_step_entropy = np.full(n, float(np.sum(model.log_std + 0.5 * (1.0 + LOG_2PI))))

    ratio = np.exp(logp - batch.behavior_logprobs)
    clipped_ratio = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps)
    unclipped_term = ratio * advantages
    clipped_term = clipped_ratio * advantages
    policy_loss = -float(np.mean(np.minimum(unclipped_term, clipped_term)))
    entropy = float(np.mean(per_step_entropy))

    # gradient flows only through the unclipped branch when it is the minimum
    grad_ratio = np.where(unclipped_term <= clipped_term, -advantages / n, 0.0)
    grad_logp = grad_ratio * ratio

    if model.discrete:
        one_hot = np.zeros_like(probs)
        one_hot[np.arange(n), actions] = 1.0
        grad_out = grad_logp[:, None] * (one_hot - probs)
        grad_out += (entropy_coef / n) * probs * (log_probs + per_step_entropy[:, None])
        policy_grads = model.policy.backward(policy_cache, grad_out)
        extra = []
    else:
        variance = np.exp(2.0 * model.log_std)
        diff = actions - mean
        grad_mean = grad_logp[:, None] * diff / variance
        grad_out = grad_mean * model.action_limit * (1.0 - squashed ** 2)
        policy_grads = model.policy.backward(policy_cache, grad_out)
        grad_log_std = np.sum(grad_logp[:, None] * (diff * diff / variance - 1.0), axis=0)
        grad_log_std -= entropy_coef
        extra = [grad_log_std]

    value_out, value_cache = model.value.forward(x)
    value_error = value_out[:, 0] - batch.returns
    value_loss = float(np.mean(value_error ** 2))
    value_grads = model.value.backward(value_cache, (value_coef * 2.0 * value_error / n)[:, None])

    total = policy_loss + value_coef * value_loss - entropy_coef * entropy
    grads = policy_grads + extra + value_grads
    if not math.isfinite(total) or not all(np.all(np.isfinite(g)) for g in grads):
        raise NumericalError("non-finite loss or gradient in the PPO update", batch_index)

    clip_fraction = float(np.mean(np.abs(ratio - 1.0) > clip_eps))
    return LossTerms(total, policy_loss, value_loss, entropy, clip_fraction), grads


def collect(
    env: Environment,
    model: ActorCritic,
    n_timesteps: int,
    rng: np.random.Generator,
    shaper: Optional[Shaper] = None,
    seed: int = 0,
    first_episode: int = 0,
) -> TrajectoryDataset:
    """
    Roll out whole episodes until at least n_timesteps steps are gathered.

    Episode i is reset with seed * EPISODE_SEED_STRIDE + i, so a batch is
    determined by (seed, first_episode, policy, rng state).

    Returns:
        Raw dataset, or the shaper's output when one is supplied
    """
    dataset = TrajectoryDataset(env.env_id)
    episode = first_episode
    while len(dataset) < n_timesteps:
        observation = env.reset(seed=seed * EPISODE_SEED_STRIDE + episode)
        t = 0
        terminated = False
        while not terminated:
            action, logp = model.act(observation, rng)
            result = env.step(action)
            terminated = bool(result.terminated)
            dataset.append(Transition(
                episode_id=episode,
                t=t,
                state=[float(v) for v in observation],
                action=action,
                reward=float(result.reward),
                next_state=[float(v) for v in result.observation],
                collision_flag=int(result.collision_flag),
                lane_index=int(result.lane_index),
                terminal=terminated,
                behavior_logprob=logp,
            ))
            observation = result.observation
            t += 1
        episode += 1
    if shaper is not None and len(dataset):
        return shaper(dataset)
    return dataset


def rollout_batch(model: ActorCritic, dataset: TrajectoryDataset, gamma: float,
                  lam: float) -> Tuple[RolloutBatch, AdvantageBatch]:
    """Advantages over the augmented rewards of a collected dataset"""
    transitions = dataset.transitions
    observations = np.array([tr.state for tr in transitions], dtype=float)
    if model.discrete:
        actions = np.array([tr.action for tr in transitions], dtype=int)
    else:
        actions = np.array([list(tr.action) for tr in transitions], dtype=float)
    rewards = [training_reward(tr) for tr in transitions]
    terminals = [tr.terminal for tr in transitions]
    advantage = gae(rewards, model.values(observations), terminals, gamma, lam)
    batch = RolloutBatch(
        observations=observations,
        actions=actions,
        behavior_logprobs=np.array([tr.behavior_logprob for tr in transitions], dtype=float),
        advantages=advantage.normalized,
        returns=advantage.returns,
    )
    return batch, advantage


def update(model: ActorCritic, optimizer: Adam, batch: RolloutBatch, config: PPOConfig,
           rng: np.random.Generator, batch_index: int = 0) -> LossTerms:
    """Epochs of minibatch clipped updates; returns loss terms averaged over minibatches"""
    history = []
    for _ in range(config.epochs_per_batch):
        order = rng.permutation(len(batch))
        for start in range(0, len(order), config.minibatch_size):
            minibatch = batch.subset(order[start:start + config.minibatch_size])
            terms, grads = clipped_loss(model, minibatch, config.clip_eps, config.value_coef,
                                        config.entropy_coef, batch_index)
            grads, _ = clip_grad_norm(grads, config.max_grad_norm)
            optimizer.step(grads)
            if not model.discrete:
                np.clip(model.log_std, *LOG_STD_BOUNDS, out=model.log_std)
            history.append(terms)
    return LossTerms(
        total=float(np.mean([h.total for h in history])),
        policy_loss=float(np.mean([h.policy_loss for h in history])),
        value_loss=float(np.mean([h.value_loss for h in history])),
        entropy=float(np.mean([h.entropy for h in history])),
        clip_fraction=float(np.mean([h.clip_fraction for h in history])),
    )


@dataclass
class BatchLog:
    """One row of the training log"""
    batch_index: int
    timesteps: int
    mean_intrinsic_reward: float
    mean_shaped_reward: float
    policy_loss: float
    value_loss: float
    entropy: float

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _mean_shaped(dataset: TrajectoryDataset) -> float:
    values = [tr.shaped_reward for tr in dataset if isinstance(tr, ShapedTransition)]
    return float(np.mean(values)) if values else 0.0


def train(
    env: Environment,
    config: PPOConfig,
    shaper: Optional[Shaper] = None,
    seed: int = 0,
) -> Tuple[ActorCritic, List[BatchLog]]:
    """
    Alternate collection, shaping and clipped updates until the budget is spent.

    With config.single_batch the policy is optimized on one collected batch
    only (the offline reading). total_timesteps = 0 returns the initial policy.

    Args:
        env: Environment to train on
        config: PPO hyperparameters
        shaper: Feedback strategy applied to each collected batch
        seed: Seeds the policy, the sampling stream and the episode seeds

    Returns:
        (trained policy, per-batch training log)
    """
    model = ActorCritic.for_env(env, config.hidden_size, seed)
    if config.total_timesteps == 0:
        return model, []

    rng = np.random.default_rng([seed, 1])
    optimizer = Adam(model.parameters(), lr=config.learning_rate)
    logs: List[BatchLog] = []
    consumed = 0
    episode = 0
    batch_index = 0
    while consumed < config.total_timesteps:
        size = min(config.batch_timesteps, config.total_timesteps - consumed)
        if config.single_batch:
            size = config.total_timesteps
        dataset = collect(env, model, size, rng, shaper, seed, episode)
        episode += dataset.episode_count()
        consumed += len(dataset)

        batch, _ = rollout_batch(model, dataset, config.gamma, config.gae_lambda)
        terms = update(model, optimizer, batch, config, rng, batch_index)
        log = BatchLog(
            batch_index=batch_index,
            timesteps=consumed,
            mean_intrinsic_reward=float(np.mean([tr.reward for tr in dataset])),
            mean_shaped_reward=_mean_shaped(dataset),
            policy_loss=terms.policy_loss,
            value_loss=terms.value_loss,
            entropy=terms.entropy,
        )
        logs.append(log)
        logger.info(kv("ppo batch", env=env.env_id, seed=seed, **log.to_dict()))
        batch_index += 1
        if config.single_batch:
            break
    return model, logs


def evaluate(env: Environment, model: ActorCritic, n_episodes: int, seed: int = 0) -> TrajectoryDataset:
    """
    Greedy rollouts for metrics; records intrinsic rewards only.

    Episode i is reset with EVAL_SEED_OFFSET + seed * EPISODE_SEED_STRIDE + i.
    """
    dataset = TrajectoryDataset(env.env_id)
    rng = np.random.default_rng(seed)
    for episode in range(n_episodes):
        observation = env.reset(seed=EVAL_SEED_OFFSET + seed * EPISODE_SEED_STRIDE + episode)
        t = 0
        terminated = False
        while not terminated:
            action, logp = model.act(observation, rng, greedy=True)
            result = env.step(action)
            terminated = bool(result.terminated)
            dataset.append(Transition(
                episode_id=episode,
                t=t,
                state=[float(v) for v in observation],
                action=action,
                reward=float(result.reward),
                next_state=[float(v) for v in result.observation],
                collision_flag=int(result.collision_flag),
                lane_index=int(result.lane_index),
                terminal=terminated,
                behavior_logprob=logp,
            ))
            observation = result.observation
            t += 1
    return dataset


def write_training_log(logs: Sequence[BatchLog], path: str) -> str:
    """Training log as CSV with a fixed column order"""
    frame = pd.DataFrame([log.to_dict() for log in logs], columns=list(TRAINING_LOG_COLUMNS))
    frame.to_csv(path, index=False)
    return path
