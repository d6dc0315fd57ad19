"""
Unit tests for the numpy PPO: GAE, the clipped loss and its gradient, rollouts and training.
"""

import os
import shutil
import tempfile

import numpy as np
import pandas as pd
import pytest

from app.envs import BanditEnv, HighwayEnv, ReacherEnv
from app.errors import ContractViolation, NumericalError
from app.schemas.experiment import HighwayConfig, PPOConfig, ReacherConfig
from app.schemas.trajectory import Profile, ShapedTransition
from app.services.feedback_rules import shape_dataset_hf_d
from app.services.mlp import Adam
from app.services.ppo import (
    LOG_STD_BOUNDS,
    TRAINING_LOG_COLUMNS,
    ActorCritic,
    RolloutBatch,
    clipped_loss,
    collect,
    evaluate,
    gae,
    load_checkpoint,
    rollout_batch,
    save_checkpoint,
    train,
    update,
    write_training_log,
)


def brute_force_advantages(rewards, values, terminals, gamma, lam):
    n = len(rewards)
    advantages = []
    for t in range(n):
        total, weight = 0.0, 1.0
        for k in range(t, n):
            next_value = 0.0 if terminals[k] or k + 1 == n else values[k + 1]
            total += weight * (rewards[k] + gamma * next_value - values[k])
            if terminals[k]:
                break
            weight *= gamma * lam
        advantages.append(total)
    return np.array(advantages)


def random_batch(model, n, seed, offsets=(0.05, -0.05, 0.6, -0.6)):
    rng = np.random.default_rng(seed)
    observations = rng.standard_normal((n, model.obs_dim))
    if model.discrete:
        actions = rng.integers(0, model.n_actions, n)
    else:
        actions = rng.uniform(-0.8, 0.8, (n, model.action_dim))
    current = model.log_prob(observations, actions)
    shift = np.array([offsets[i % len(offsets)] for i in range(n)])
    return RolloutBatch(
        observations=observations,
        actions=actions,
        behavior_logprobs=current + shift,
        advantages=rng.standard_normal(n),
        returns=rng.standard_normal(n),
    )


def assert_gradients_match(model, batch, h=1e-5):
    _, grads = clipped_loss(model, batch)
    for param, grad in zip(model.parameters(), grads):
        assert grad.shape == param.shape
        for index in np.ndindex(param.shape):
            saved = param[index]
            param[index] = saved + h
            up = clipped_loss(model, batch)[0].total
            param[index] = saved - h
            down = clipped_loss(model, batch)[0].total
            param[index] = saved
            assert grad[index] == pytest.approx((up - down) / (2 * h), rel=1e-3, abs=1e-6)


class TestGAE:
    """Test generalized advantage estimation"""

    def test_matches_brute_force(self):
        rewards = [1.0, 0.0, -1.0, 0.5, 2.0, 0.3]
        values = [0.2, 0.1, -0.3, 0.4, 0.0, 0.7]
        terminals = [False, False, True, False, True, False]

        result = gae(rewards, values, terminals, gamma=0.9, lam=0.8)

        np.testing.assert_allclose(result.advantages, brute_force_advantages(rewards, values, terminals, 0.9, 0.8))
        np.testing.assert_allclose(result.returns, result.advantages + np.array(values))

    def test_trailing_step_bootstraps_zero(self):
        result = gae([1.0], [0.5], [False], gamma=0.99, lam=0.95)

        assert result.advantages[0] == pytest.approx(0.5)

    def test_normalized_advantages(self):
        result = gae([1.0, 2.0, 3.0, 4.0], [0.0] * 4, [False, False, False, True], 0.99, 0.95)

        assert result.normalized.mean() == pytest.approx(0.0, abs=1e-12)
        assert result.normalized.std() == pytest.approx(1.0, rel=1e-6)

    def test_constant_advantages_are_only_centered(self):
        result = gae([1.0, 1.0], [0.0, 0.0], [True, True], 0.99, 0.95)

        np.testing.assert_array_equal(result.normalized, [0.0, 0.0])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            gae([1.0, 2.0], [0.0], [True, True], 0.99, 0.95)


class TestClippedLoss:
    """Test the clipped surrogate objective and its analytic gradient"""

    def test_discrete_gradient(self):
        model = ActorCritic(4, n_actions=3, hidden_size=5, seed=1)
        assert_gradients_match(model, random_batch(model, 8, seed=2))

    def test_continuous_gradient(self):
        model = ActorCritic(3, action_dim=2, action_limit=1.0, hidden_size=4, seed=3)
        model.log_std[:] = [-0.3, 0.2]
        assert_gradients_match(model, random_batch(model, 8, seed=4))

    def test_unit_ratio_reduces_to_mean_advantage(self):
        model = ActorCritic(4, n_actions=3, hidden_size=5, seed=5)
        batch = random_batch(model, 10, seed=6, offsets=(0.0,))

        terms, _ = clipped_loss(model, batch)
        assert terms.policy_loss == pytest.approx(-batch.advantages.mean())
        assert terms.clip_fraction == 0.0

    def test_clip_fraction(self):
        model = ActorCritic(4, n_actions=3, hidden_size=5, seed=5)
        batch = random_batch(model, 8, seed=6, offsets=(0.0, 1.0))

        assert clipped_loss(model, batch)[0].clip_fraction == pytest.approx(0.5)

    def test_empty_batch(self):
        model = ActorCritic(4, n_actions=3, hidden_size=5)
        batch = random_batch(model, 3, seed=0).subset(np.array([], dtype=int))

        with pytest.raises(ContractViolation):
            clipped_loss(model, batch)

    def test_non_finite_values_raise(self):
        model = ActorCritic(4, n_actions=3, hidden_size=5)
        batch = random_batch(model, 3, seed=0)
        batch.returns[1] = np.inf

        with pytest.raises(NumericalError) as exc:
            clipped_loss(model, batch, batch_index=7)
        assert exc.value.batch_index == 7

    def test_log_std_stays_in_bounds(self):
        model = ActorCritic(3, action_dim=2, hidden_size=4, seed=0)
        model.log_std[:] = [LOG_STD_BOUNDS[1], LOG_STD_BOUNDS[0]]
        batch = random_batch(model, 16, seed=1)
        config = PPOConfig(learning_rate=1.0, epochs_per_batch=3, minibatch_size=8)

        update(model, Adam(model.parameters(), lr=1.0), batch, config, np.random.default_rng(0))

        assert np.all(model.log_std >= LOG_STD_BOUNDS[0])
        assert np.all(model.log_std <= LOG_STD_BOUNDS[1])


class TestActorCritic:
    """Test the policy/value container"""

    def test_exactly_one_action_space(self):
        with pytest.raises(ValueError):
            ActorCritic(4)
        with pytest.raises(ValueError):
            ActorCritic(4, n_actions=2, action_dim=2)

    def test_observation_size_checked(self):
        model = ActorCritic(4, n_actions=2)

        with pytest.raises(ContractViolation):
            model.values(np.zeros((1, 5)))

    def test_discrete_probabilities(self):
        model = ActorCritic(4, n_actions=5, seed=0)
        probs = model.action_probs(np.zeros((3, 4)))

        np.testing.assert_allclose(probs.sum(axis=1), 1.0)

    def test_sampled_log_prob_stays_finite_when_probabilities_underflow(self):
        class TopOfRange:
            def random(self):
                return 1.0

        model = ActorCritic(4, n_actions=3, seed=0)
        model.policy.weights[-1][:] = 0.0
        model.policy.biases[-1][:] = [0.0, 0.0, -1e4]

        action, logp = model.act(np.zeros(4), TopOfRange())
        assert action == 1
        assert logp == pytest.approx(np.log(0.5))

    def test_log_prob_of_unlikely_action_uses_logits(self):
        model = ActorCritic(4, n_actions=2, seed=0)
        model.policy.weights[-1][:] = 0.0
        model.policy.biases[-1][:] = [0.0, -800.0]

        assert model.action_probs(np.zeros(4))[0, 1] == 0.0
        assert model.log_prob(np.zeros((1, 4)), [1])[0] == pytest.approx(-800.0)

    def test_continuous_actions_respect_limit_when_greedy(self):
        model = ActorCritic(3, action_dim=2, action_limit=0.5, seed=0)
        action, logp = model.act(np.ones(3) * 10.0, np.random.default_rng(0), greedy=True)

        assert all(abs(a) <= 0.5 for a in action)
        assert np.isfinite(logp)

    def test_checkpoint_round_trip(self):
        env = ReacherEnv()
        model = ActorCritic.for_env(env, hidden_size=8, seed=2)
        tmpdir = tempfile.mkdtemp()
        try:
            loaded = load_checkpoint(save_checkpoint(model, os.path.join(tmpdir, "checkpoint.json")))
            obs = env.reset(seed=0)

            np.testing.assert_allclose(loaded.mean_action(obs), model.mean_action(obs))
            np.testing.assert_allclose(loaded.values(obs), model.values(obs))
        finally:
            shutil.rmtree(tmpdir, ignore_errors=True)


class TestRollouts:
    """Test collection and evaluation"""

    def test_collects_whole_episodes(self):
        env = HighwayEnv(HighwayConfig(vehicle_count=1, duration=5))
        model = ActorCritic.for_env(env, hidden_size=8)

        dataset = collect(env, model, 7, np.random.default_rng(0))

        assert len(dataset) == 10
        assert [episode[-1].terminal for episode in dataset.episodes()] == [True, True]
        assert all(np.isfinite(step.behavior_logprob) for step in dataset)

    def test_collection_is_reproducible(self):
        env = HighwayEnv(HighwayConfig(vehicle_count=10, duration=10))
        model = ActorCritic.for_env(env, hidden_size=8)

        first = collect(env, model, 30, np.random.default_rng([3, 1]), seed=3)
        second = collect(env, model, 30, np.random.default_rng([3, 1]), seed=3)

        assert first == second

    def test_shaper_applied_to_batch(self):
        env = HighwayEnv(HighwayConfig(vehicle_count=10, duration=10))
        model = ActorCritic.for_env(env, hidden_size=8)

        dataset = collect(env, model, 10, np.random.default_rng(0),
                          shaper=lambda ds: shape_dataset_hf_d(ds, Profile.IDEAL))

        assert all(isinstance(step, ShapedTransition) for step in dataset)

    def test_rollout_batch_uses_augmented_rewards(self, highway_dataset):
        shaped = shape_dataset_hf_d(highway_dataset, Profile.IDEAL)
        model = ActorCritic.for_env(HighwayEnv(), hidden_size=8)

        _, raw = rollout_batch(model, highway_dataset, 0.99, 0.95)
        _, augmented = rollout_batch(model, shaped, 0.99, 0.95)

        assert not np.allclose(raw.advantages, augmented.advantages)

    def test_greedy_evaluation(self):
        env = ReacherEnv(ReacherConfig(episode_length=5))
        model = ActorCritic.for_env(env, hidden_size=8)

        first = evaluate(env, model, 3, seed=1)
        second = evaluate(env, model, 3, seed=1)

        assert first == second
        assert first.episode_count() == 3
        assert len(first) == 15


class TestTraining:
    """Test the training loop"""

    def test_zero_budget_returns_initial_policy(self):
        env = BanditEnv()
        model, logs = train(env, PPOConfig(total_timesteps=0, hidden_size=8), seed=4)

        assert logs == []
        initial = ActorCritic.for_env(env, hidden_size=8, seed=4)
        np.testing.assert_array_equal(model.action_probs(np.ones(1)), initial.action_probs(np.ones(1)))

    def test_bandit_learns_the_paying_arm(self):
        config = PPOConfig(total_timesteps=3000, batch_timesteps=200, minibatch_size=50, epochs_per_batch=4,
                           learning_rate=1e-2, hidden_size=16, entropy_coef=0.0)
        model, logs = train(BanditEnv(), config, seed=0)

        assert len(logs) == 15
        assert model.action_probs(np.ones(1))[0, 0] > 0.8
        assert model.act(np.ones(1), np.random.default_rng(0), greedy=True)[0] == 0

    def test_training_is_deterministic(self):
        config = PPOConfig(total_timesteps=60, batch_timesteps=30, minibatch_size=16, epochs_per_batch=2, hidden_size=8)
        env = HighwayEnv(HighwayConfig(vehicle_count=10, duration=10))

        first, first_logs = train(env, config, seed=2)
        second, second_logs = train(env, config, seed=2)

        assert [log.to_dict() for log in first_logs] == [log.to_dict() for log in second_logs]
        np.testing.assert_array_equal(first.action_probs(np.zeros((1, 26))), second.action_probs(np.zeros((1, 26))))

    def test_single_batch_collects_once(self):
        config = PPOConfig(total_timesteps=40, batch_timesteps=10, minibatch_size=16, epochs_per_batch=2,
                           hidden_size=8, single_batch=True)

        _, logs = train(ReacherEnv(ReacherConfig(episode_length=10)), config)

        assert len(logs) == 1
        assert logs[0].timesteps == 40

    def test_training_log_csv(self):
        config = PPOConfig(total_timesteps=20, batch_timesteps=10, minibatch_size=8, epochs_per_batch=1, hidden_size=8)
        _, logs = train(ReacherEnv(ReacherConfig(episode_length=10)), config)
        tmpdir = tempfile.mkdtemp()
        try:
            frame = pd.read_csv(write_training_log(logs, os.path.join(tmpdir, "training_log.csv")))

            assert tuple(frame.columns) == TRAINING_LOG_COLUMNS
            assert list(frame['batch_index']) == [0, 1]
        finally:
            shutil.rmtree(tmpdir, ignore_errors=True)
