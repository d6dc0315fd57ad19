"""
Tests for the command-line interface.
"""

import json
import os
import shutil
import tempfile

import pytest

from app.cli import build_parser, main
from app.services.trajectory_store import load_dataset

SMALL = [
    "--set", "env.vehicle_count=5",
    "--set", "env.duration=8",
    "--set", "ppo.total_timesteps=32",
    "--set", "ppo.batch_timesteps=16",
    "--set", "ppo.epochs_per_batch=1",
    "--set", "ppo.minibatch_size=8",
    "--set", "ppo.hidden_size=8",
    "--set", "experiment.eval_episodes=1",
]


class TestParser:
    """Test argument parsing"""

    def test_subcommand_required(self):
        with pytest.raises(SystemExit) as exc:
            build_parser().parse_args([])
        assert exc.value.code == 2

    def test_strategy_names_are_case_insensitive(self):
        args = build_parser().parse_args(["shape", "data.jsonl", "--fis", "llm-hfbf", "--profile", "agg"])

        assert args.fis == "LLM-HFBF"
        assert args.profile == "AGG"

    def test_unknown_strategy(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["shape", "data.jsonl", "--fis", "HF-X"])

    def test_repeatable_overrides(self):
        args = build_parser().parse_args(["--set", "ppo.gamma=0.9", "--set", "fma.theta=0.1", "run"])

        assert args.overrides == ["ppo.gamma=0.9", "fma.theta=0.1"]


class TestCommands:
    """Test subcommands end to end on tiny budgets"""

    def setup_method(self):
        """Set up test fixtures."""
        self.tmpdir = tempfile.mkdtemp()

    def teardown_method(self):
        """Clean up test fixtures."""
        shutil.rmtree(self.tmpdir, ignore_errors=True)

    def path(self, name):
        return os.path.join(self.tmpdir, name)

    def invoke(self, capsys, *argv):
        code = main(["--output", self.tmpdir, "--seed", "0", "--log-level", "ERROR", *SMALL, *argv])
        captured = capsys.readouterr()
        return code, captured.out, captured.err

    def test_collect_then_shape(self, capsys):
        code, out, _ = self.invoke(capsys, "collect", "--timesteps", "20", "--out", self.path("raw.jsonl"))
        assert code == 0
        assert json.loads(out)['transitions'] >= 20

        code, out, _ = self.invoke(capsys, "shape", self.path("raw.jsonl"), "--fis", "HF-D", "--profile", "RAD")
        assert code == 0
        shaped_path = json.loads(out)['dataset']
        assert shaped_path == self.path("raw.hf-d_rad.jsonl")
        assert load_dataset(shaped_path).kind == "shaped"

    def test_shape_hfbf_with_saved_pca(self, capsys):
        self.invoke(capsys, "collect", "--timesteps", "40", "--out", self.path("raw.jsonl"))
        code, out, _ = self.invoke(capsys, "pca-fit", self.path("raw.jsonl"))
        assert code == 0
        pca_path = json.loads(out)['model']
        assert os.path.exists(pca_path)

        code, out, _ = self.invoke(capsys, "shape", self.path("raw.jsonl"), "--fis", "LLM-HFBF",
                                   "--profile", "AGG", "--pca", pca_path, "--out", self.path("hfbf.jsonl"))
        assert code == 0
        assert json.loads(out)['strategy'] == "LLM-HFBF/AGG"
        assert all(step.pc is not None for step in load_dataset(self.path("hfbf.jsonl")))

    def test_shape_rejects_missing_profile(self, capsys):
        self.invoke(capsys, "collect", "--timesteps", "10", "--out", self.path("raw.jsonl"))

        code, _, err = self.invoke(capsys, "shape", self.path("raw.jsonl"), "--fis", "HF-D")
        assert code == 1
        assert json.loads(err)['error'] == "CONFIGURATION_ERROR"

    def test_train_then_eval(self, capsys):
        code, out, _ = self.invoke(capsys, "train")
        assert code == 0
        summary = json.loads(out)
        assert set(summary) >= {'strategy', 'seed', 'files', 'aer', 'att', 'fma'}

        checkpoint = next(path for path in summary['files'] if path.endswith("checkpoint.json"))
        code, out, _ = self.invoke(capsys, "eval", checkpoint, "--episodes", "2")
        assert code == 0
        assert json.loads(out)['episode_count'] == 2

    def test_run_and_report(self, capsys):
        code, _, _ = self.invoke(capsys, "--set", "fis.profile=RAD", "run")
        assert code == 0
        assert os.path.exists(self.path("results.csv"))

        code, _, err = self.invoke(capsys, "report")
        assert code == 1
        assert "HF-D/IDEAL" in json.loads(err)['message']

        code, _, _ = self.invoke(capsys, "report", "--baseline", "HF-D/RAD")
        assert code == 0
        assert os.path.exists(self.path("degradation.json"))

    def test_missing_dataset(self, capsys):
        code, _, err = self.invoke(capsys, "pca-fit", self.path("missing.jsonl"))

        assert code == 1
        assert 'error' in json.loads(err)

    def test_bad_override(self, capsys):
        code, _, err = self.invoke(capsys, "--set", "ppo.gamma=5", "train")

        assert code == 1
        assert json.loads(err)['error'] == "CONFIGURATION_ERROR"
