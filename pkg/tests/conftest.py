"""
Pytest configuration and fixtures for the shaping workbench tests
"""
import os
import sys

import numpy as np
import pytest

# Add parent directory to path so we can import app
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from app.envs.highway import (
    OBS_AHEAD_COUNT,
    OBS_EGO_LANE,
    OBS_EGO_SPEED,
    OBS_LEADER_CLOSING,
    OBS_LEADER_GAP,
    OBS_LEADER_PRESENT,
    HighwayEnv,
)
from app.envs.reacher import OBS_DISTANCE, OBS_OMEGA1, OBS_OMEGA2, ReacherEnv
from app.schemas.experiment import HighwayConfig, ReacherConfig
from app.schemas.trajectory import Transition
from app.services.mock_server import create_mock_llm_app
from app.services.ppo import ActorCritic, collect
from app.services.trajectory_store import TrajectoryDataset

FIXTURES_DIR = os.path.join(os.path.dirname(__file__), 'fixtures')


@pytest.fixture
def app():
    """Mock chat-completions app (pytest-flask builds `client` from it)"""
    flask_app = create_mock_llm_app()
    flask_app.config['TESTING'] = True
    return flask_app


def highway_state(speed=25.0, lane=1, ahead=0, leader_gap=None, closing=0.0):
    state = [0.0] * HighwayEnv.observation_dim
    state[OBS_EGO_SPEED] = speed
    state[OBS_EGO_LANE] = lane
    state[OBS_AHEAD_COUNT] = ahead
    if leader_gap is not None:
        state[OBS_LEADER_PRESENT] = 1.0
        state[OBS_LEADER_GAP] = leader_gap
        state[OBS_LEADER_CLOSING] = closing
    return state


@pytest.fixture
def highway_step():
    """Factory for hand-built highway transitions"""
    def build(episode_id=0, t=0, speed=25.0, next_speed=None, lane=1, next_lane=None, ahead=0,
              leader_gap=None, closing=0.0, reward=0.4, collision=0, terminal=False, action=1):
        next_speed = speed if next_speed is None else next_speed
        next_lane = lane if next_lane is None else next_lane
        return Transition(
            episode_id=episode_id,
            t=t,
            state=highway_state(speed, lane, ahead),
            action=action,
            reward=reward,
            next_state=highway_state(next_speed, next_lane, ahead, leader_gap, closing),
            collision_flag=collision,
            lane_index=next_lane,
            terminal=terminal,
            behavior_logprob=-1.6,
        )
    return build


@pytest.fixture
def reacher_step():
    """Factory for hand-built reacher transitions"""
    def build(episode_id=0, t=0, distance=0.1, next_distance=0.1, action=(0.1, 0.1),
              omega=(0.0, 0.0), reward=-0.1, terminal=False):
        state = [0.0] * ReacherEnv.observation_dim
        next_state = [0.0] * ReacherEnv.observation_dim
        state[OBS_DISTANCE] = distance
        next_state[OBS_DISTANCE] = next_distance
        next_state[OBS_OMEGA1], next_state[OBS_OMEGA2] = omega
        return Transition(
            episode_id=episode_id,
            t=t,
            state=state,
            action=tuple(action),
            reward=reward,
            next_state=next_state,
            collision_flag=0,
            lane_index=-1,
            terminal=terminal,
            behavior_logprob=-1.0,
        )
    return build


def collect_random(env, timesteps, seed=0):
    model = ActorCritic.for_env(env, hidden_size=16, seed=seed)
    return collect(env, model, timesteps, np.random.default_rng(seed), seed=seed)


@pytest.fixture(scope='session')
def highway_dataset() -> TrajectoryDataset:
    """About 300 steps of random-policy highway driving"""
    return collect_random(HighwayEnv(HighwayConfig(vehicle_count=20, duration=40)), 300)


@pytest.fixture(scope='session')
def reacher_dataset() -> TrajectoryDataset:
    """Four random-policy reacher episodes"""
    return collect_random(ReacherEnv(ReacherConfig(episode_length=25)), 100)


@pytest.fixture
def golden_dir():
    return os.path.join(FIXTURES_DIR, 'prompts')
