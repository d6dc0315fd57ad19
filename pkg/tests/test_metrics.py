"""
Unit tests for AER, ATT and feedback misalignment.
"""

import json
import math

import pytest

from app.errors import ConfigurationError, DatasetError, UnsupportedMetricError
from app.schemas.experiment import FMAConfig
from app.services.feedback_rules import shape_dataset_hf_d
from app.services.metrics import (
    aer,
    att,
    episode_totals,
    evaluate_metrics,
    fma,
    mean_distance_to_target,
    rank_agreement,
)
from app.services.trajectory_store import TrajectoryDataset


def episode(build, episode_id, rewards, **kwargs):
    n = len(rewards)
    return [build(episode_id=episode_id, t=t, reward=r, terminal=(t == n - 1), **kwargs)
            for t, r in enumerate(rewards)]


def lane_change_crash(build, episode_id):
    """Two steps: a lane change into a collision"""
    return [
        build(episode_id=episode_id, t=0, lane=1, next_lane=1),
        build(episode_id=episode_id, t=1, lane=1, next_lane=2, collision=1, terminal=True),
    ]


class TestAverageEpisodicReward:
    """Test AER"""

    def test_mean_of_episode_sums(self, highway_step):
        dataset = TrajectoryDataset("highway", episode(highway_step, 0, [1, 1]) + episode(highway_step, 1, [2]))

        assert aer(dataset) == pytest.approx(2.0)

    def test_constant_reward_episode(self, highway_step):
        dataset = TrajectoryDataset("highway", episode(highway_step, 0, [0.5] * 40))

        assert aer(dataset) == pytest.approx(20.0)

    def test_uses_intrinsic_reward(self, highway_step):
        raw = TrajectoryDataset("highway", episode(highway_step, 0, [0.4] * 5))

        assert aer(shape_dataset_hf_d(raw, "RAD")) == pytest.approx(aer(raw))

    def test_permutation_invariant(self, highway_step):
        first = episode(highway_step, 0, [1.0, 2.0])
        second = episode(highway_step, 1, [-3.0])

        assert aer(TrajectoryDataset("highway", first + second)) == \
            aer(TrajectoryDataset("highway", second + first))

    def test_empty_dataset(self):
        with pytest.raises(DatasetError):
            aer(TrajectoryDataset("highway"))


class TestAverageTerminateTime:
    """Test ATT"""

    @pytest.mark.parametrize('lengths,expected', [
        ((40, 40), 40.0),
        ((7, 3), 5.0),
        ((1,), 1.0),
    ])
    def test_mean_length(self, highway_step, lengths, expected):
        steps = []
        for episode_id, length in enumerate(lengths):
            steps += episode(highway_step, episode_id, [0.1] * length)

        assert att(TrajectoryDataset("highway", steps)) == expected

    def test_empty_dataset(self):
        with pytest.raises(DatasetError):
            att(TrajectoryDataset("reacher"))


class TestFeedbackMisalignment:
    """Test FMA"""

    def test_perfect_episode_is_zero(self, highway_step):
        dataset = TrajectoryDataset("highway", episode(highway_step, 0, [0.4] * 10))

        assert fma(dataset) == 0.0

    def test_lane_change_and_collision(self, highway_step):
        dataset = TrajectoryDataset("highway", lane_change_crash(highway_step, 0))

        assert fma(dataset) == pytest.approx(2.0)

    def test_mean_over_episodes(self, highway_step):
        steps = lane_change_crash(highway_step, 0) + lane_change_crash(highway_step, 1)
        steps += episode(highway_step, 2, [0.4, 0.4])

        assert fma(TrajectoryDataset("highway", steps)) == pytest.approx(4 / 3)

    def test_sub_threshold_rewards(self, highway_step):
        dataset = TrajectoryDataset("highway", episode(highway_step, 0, [-0.1, 0.2, -0.5]))

        assert fma(dataset) == pytest.approx(2.0)
        assert fma(dataset, FMAConfig(theta=0.3)) == pytest.approx(3.0)

    def test_speed_fluctuation(self, highway_step):
        steps = [
            highway_step(t=0, speed=25.0, next_speed=25.0),
            highway_step(t=1, speed=25.0, next_speed=20.0),
            highway_step(t=2, speed=20.0, next_speed=30.0, terminal=True),
        ]

        assert fma(TrajectoryDataset("highway", steps)) == pytest.approx(0.1 * (5.0 + 10.0))

    def test_first_step_has_no_predecessor(self, highway_step):
        dataset = TrajectoryDataset("highway", [highway_step(speed=20.0, next_speed=30.0, lane=0, next_lane=3)])

        assert fma(dataset) == 0.0

    def test_collision_increases_misalignment(self, highway_step):
        clean = episode(highway_step, 0, [0.4] * 4)
        crashed = clean[:3] + [highway_step(episode_id=0, t=3, collision=1, terminal=True)]

        assert fma(TrajectoryDataset("highway", crashed)) > fma(TrajectoryDataset("highway", clean))

    def test_zero_weights(self, highway_dataset):
        config = FMAConfig(lambda1=0.0, lambda2=0.0, lambda3=0.0, lambda4=0.0)

        assert fma(highway_dataset, config) == 0.0

    def test_negative_weight_rejected(self):
        with pytest.raises(ConfigurationError):
            FMAConfig(lambda2=-1.0)

    def test_reacher_unsupported(self, reacher_dataset):
        with pytest.raises(UnsupportedMetricError):
            fma(reacher_dataset)

    def test_empty_dataset(self):
        with pytest.raises(DatasetError):
            fma(TrajectoryDataset("highway"))


class TestEvaluateMetrics:
    """Test the combined report"""

    def test_highway_report(self, highway_step):
        steps = lane_change_crash(highway_step, 3) + episode(highway_step, 1, [1.0, 1.0, 1.0])
        report = evaluate_metrics(TrajectoryDataset("highway", steps))

        assert report.episode_count == 2
        assert [e.episode_id for e in report.per_episode] == [1, 3]
        assert report.aer == pytest.approx((3.0 + 0.8) / 2)
        assert report.att == pytest.approx(2.5)
        assert report.fma == pytest.approx(1.0)

    def test_reacher_report_has_no_fma(self, reacher_dataset):
        report = evaluate_metrics(reacher_dataset)

        assert math.isnan(report.fma)
        assert report.att == pytest.approx(25.0)
        data = json.loads(report.to_json())
        assert data['fma'] is None
        assert all(e['fma'] is None for e in data['per_episode'])

    def test_report_agrees_with_single_metrics(self, highway_dataset):
        report = evaluate_metrics(highway_dataset)

        assert report.aer == pytest.approx(aer(highway_dataset))
        assert report.att == pytest.approx(att(highway_dataset))
        assert report.fma == pytest.approx(fma(highway_dataset))
        assert set(report.to_row()) == {'fma', 'att', 'aer'}


class TestHelpers:
    """Test auxiliary measures"""

    def test_distance_to_target(self, reacher_step):
        steps = [reacher_step(t=0, next_distance=0.2), reacher_step(t=1, next_distance=0.1, terminal=True)]

        assert mean_distance_to_target(TrajectoryDataset("reacher", steps)) == pytest.approx(0.15)

    def test_distance_needs_reacher(self, highway_dataset):
        with pytest.raises(UnsupportedMetricError):
            mean_distance_to_target(highway_dataset)

    def test_rank_agreement(self):
        assert rank_agreement([1.0, 2.0, 3.0], [10.0, 20.0, 30.0]) == pytest.approx(1.0)
        assert rank_agreement([1.0, 2.0, 3.0], [3.0, 2.0, 1.0]) == pytest.approx(-1.0)

    @pytest.mark.parametrize('a,b', [([1.0], [1.0]), ([1.0, 2.0], [1.0])])
    def test_rank_agreement_needs_aligned_series(self, a, b):
        with pytest.raises(ValueError):
            rank_agreement(a, b)

    def test_episode_totals(self, highway_step):
        raw = TrajectoryDataset("highway", episode(highway_step, 0, [0.4] * 3) + episode(highway_step, 1, [0.4]))
        shaped = shape_dataset_hf_d(raw, "IDEAL")

        totals = episode_totals(shaped)
        assert len(totals) == 2
        assert totals[0] == pytest.approx(sum(s.shaped_reward for s in shaped if s.episode_id == 0))
