"""
Unit tests for the experiment runner: matrix runs, result tables, manifest and degradation report.
"""

import hashlib
import json
import os
import shutil
import tempfile

import httpx
import pandas as pd
import pytest

from app.errors import ConfigurationError
from app.schemas.experiment import FIS, Cell, ExperimentConfig
from app.schemas.trajectory import Profile, ShapingSource
from app.services import runner
from app.services.providers import build_provider
from app.services.runner import (
    RESULTS_COLUMNS,
    StrategyShaper,
    build_shaper,
    cell_dir,
    degradation_report,
    run,
    run_cell,
    seed_means,
    summarize,
    write_manifest,
    write_report,
)
from app.services.trajectory_store import load_dataset


def small_config(output_dir, matrix, seeds=(0,), **sections):
    data = {
        'env': {'name': 'highway_default', 'vehicle_count': 5, 'duration': 8},
        'ppo': {'total_timesteps': 32, 'batch_timesteps': 16, 'epochs_per_batch': 1,
                'minibatch_size': 8, 'hidden_size': 8},
        'surrogate': {'epochs': 2, 'min_samples': 10, 'hidden_size': 4},
        'experiment': {'seeds': list(seeds), 'eval_episodes': 1, 'output_dir': output_dir, 'matrix': matrix},
    }
    for section, values in sections.items():
        data.setdefault(section, {}).update(values)
    return ExperimentConfig.from_dict(data)


def results_frame(rows):
    return pd.DataFrame([
        {'env': env, 'fis': fis, 'profile': profile, 'seed': seed, 'status': status,
         'fma': 0.0, 'att': 10.0, 'aer': aer}
        for env, fis, profile, seed, status, aer in rows
    ], columns=list(RESULTS_COLUMNS))


class TestDegradationReport:
    """Test AER degradation and its Min-Max scaling"""

    def test_normalized_per_environment(self):
        results = results_frame([
            ("highway_default", "HF-D", "IDEAL", 0, "ok", 20.0),
            ("highway_default", "HF-D", "RAD", 0, "ok", 2.0),
            ("highway_default", "LLM-D", "NA", 0, "ok", 20.0),
            ("reacher", "HF-D", "IDEAL", 0, "ok", -10.0),
            ("reacher", "HF-D", "AGG", 0, "ok", -15.0),
        ])

        report = degradation_report(results).set_index(['env', 'strategy'])
        assert report.loc[("highway_default", "HF-D/RAD"), 'degradation_pct'] == pytest.approx(90.0)
        assert report.loc[("highway_default", "HF-D/RAD"), 'normalized'] == pytest.approx(100.0)
        assert report.loc[("highway_default", "LLM-D"), 'normalized'] == pytest.approx(0.0)
        assert report.loc[("reacher", "HF-D/AGG"), 'degradation_pct'] == pytest.approx(50.0)
        assert report.loc[("reacher", "HF-D/IDEAL"), 'normalized'] == pytest.approx(0.0)

    def test_seed_means_are_compared(self):
        results = results_frame([
            ("highway_default", "HF-D", "IDEAL", 0, "ok", 10.0),
            ("highway_default", "HF-D", "IDEAL", 1, "ok", 30.0),
            ("highway_default", "HF-D", "AGG", 0, "ok", 15.0),
            ("highway_default", "HF-D", "AGG", 1, "ok", 5.0),
        ])

        report = degradation_report(results).set_index('strategy')
        assert report.loc["HF-D/AGG", 'aer'] == pytest.approx(10.0)
        assert report.loc["HF-D/AGG", 'degradation_pct'] == pytest.approx(50.0)

    def test_equal_strategies_all_zero(self):
        results = results_frame([
            ("highway_default", "HF-D", "IDEAL", 0, "ok", 5.0),
            ("highway_default", "LLM-D", "NA", 0, "ok", 5.0),
        ])

        assert list(degradation_report(results)['normalized']) == [0.0, 0.0]

    def test_zero_baseline_uses_raw_difference(self):
        results = results_frame([
            ("reacher", "HF-D", "IDEAL", 0, "ok", 0.0),
            ("reacher", "none", "NA", 0, "ok", -0.5),
        ])

        report = degradation_report(results).set_index('strategy')
        assert report.loc["none", 'degradation_pct'] == pytest.approx(50.0)

    def test_failed_rows_ignored(self):
        results = results_frame([
            ("highway_default", "HF-D", "IDEAL", 0, "ok", 20.0),
            ("highway_default", "HF-D", "RAD", 0, "failed", float('nan')),
        ])

        assert list(degradation_report(results)['strategy']) == ["HF-D/IDEAL"]

    def test_missing_baseline(self):
        results = results_frame([("highway_default", "LLM-D", "NA", 0, "ok", 20.0)])

        with pytest.raises(ConfigurationError):
            degradation_report(results)

    def test_custom_baseline(self):
        results = results_frame([
            ("highway_default", "LLM-D", "NA", 0, "ok", 20.0),
            ("highway_default", "none", "NA", 0, "ok", 10.0),
        ])

        report = degradation_report(results, baseline="LLM-D").set_index('strategy')
        assert report.loc["none", 'degradation_pct'] == pytest.approx(50.0)


class TestSummaries:
    """Test seed aggregation"""

    def test_summarize(self):
        results = results_frame([
            ("highway_default", "HF-D", "IDEAL", 0, "ok", 10.0),
            ("highway_default", "HF-D", "IDEAL", 1, "ok", 20.0),
            ("highway_default", "HF-D", "IDEAL", 2, "failed", float('nan')),
        ])

        summary = summarize(results)
        assert len(summary) == 1
        assert summary.iloc[0]['seeds'] == 2
        assert summary.iloc[0]['aer'] == pytest.approx(15.0)

    def test_summarize_without_successes(self):
        results = results_frame([("highway_default", "HF-D", "IDEAL", 0, "failed", float('nan'))])

        assert summarize(results).empty

    def test_seed_means(self):
        results = results_frame([
            ("highway_default", "HF-D", "RAD", 0, "ok", 1.0),
            ("highway_default", "HF-D", "RAD", 1, "ok", 3.0),
            ("highway_default", "LLM-D", "NA", 0, "ok", 4.0),
        ])

        assert seed_means(results) == {"HF-D/RAD": 2.0, "LLM-D": 4.0}


class TestShapers:
    """Test per-cell strategy selection"""

    def test_unshaped_baseline(self):
        config = ExperimentConfig.from_dict({})

        assert build_shaper(config, Cell(FIS.NONE, Profile.NA)) is None

    def test_llm_cells_get_a_provider(self):
        config = ExperimentConfig.from_dict({})

        shaper = build_shaper(config, Cell(FIS.LLM_D, Profile.NA))
        assert shaper.provider is not None
        assert build_shaper(config, Cell(FIS.HF_D, Profile.RAD)).provider is None

    def test_hfbf_keeps_pca(self, highway_dataset):
        config = ExperimentConfig.from_dict({})
        cell = Cell(FIS.LLM_HFBF, Profile.AGG)

        shaper = build_shaper(config, cell)
        shaped = shaper(highway_dataset)
        assert shaper.pca is not None
        assert all(step.shaping_source == ShapingSource.LLM_HFBF for step in shaped)

    def test_surrogate_fitted_once(self, highway_dataset):
        config = ExperimentConfig.from_dict({'surrogate': {'epochs': 2, 'min_samples': 10}})
        shaper = StrategyShaper(config, Cell(FIS.HF_RSM, Profile.IDEAL))

        shaper(highway_dataset)
        first = shaper.surrogate
        shaped = shaper(highway_dataset)
        assert shaper.surrogate is first
        assert all(step.shaping_source == ShapingSource.HF_RSM for step in shaped)


class TestRunMatrix:
    """Test running cells and the full matrix"""

    def setup_method(self):
        """Set up test fixtures."""
        self.tmpdir = tempfile.mkdtemp()

    def teardown_method(self):
        """Clean up test fixtures."""
        shutil.rmtree(self.tmpdir, ignore_errors=True)

    def test_run_cell_writes_artifacts(self):
        config = small_config(self.tmpdir, [{'fis': 'HF-RSM', 'profile': 'IDEAL'}])
        cell = config.matrix[0]

        result = run_cell(config, cell, 0)
        assert result.status == "ok"
        names = {os.path.basename(path) for path in result.files}
        assert names == {
            "checkpoint.json", "training_log.csv", "shaped.jsonl", "eval.jsonl", "metrics.json", "surrogate.json",
        }
        assert all(os.path.dirname(path) == cell_dir(config, cell, 0) for path in result.files)

        shaped = load_dataset(os.path.join(cell_dir(config, cell, 0), "shaped.jsonl"))
        assert shaped.kind == "shaped"
        assert len(shaped) >= config.ppo.total_timesteps
        assert {step.shaping_source for step in shaped} == {ShapingSource.HF_RSM}

    def test_run_cell_is_deterministic(self):
        config = small_config(self.tmpdir, [{'fis': 'LLM-D'}])
        other = small_config(os.path.join(self.tmpdir, "again"), [{'fis': 'LLM-D'}])

        first = run_cell(config, config.matrix[0], 3)
        second = run_cell(other, other.matrix[0], 3)
        assert first.report.to_dict() == second.report.to_dict()

    def test_feedback_failure_marks_cell_failed(self):
        config = small_config(self.tmpdir, [{'fis': 'HF-RSM', 'profile': 'AGG'}], surrogate={'min_samples': 10_000})

        result = run_cell(config, config.matrix[0], 0)
        assert result.status == "failed"
        assert result.error['error'] == "DEGENERATE_INPUT"
        assert result.row()['status'] == "failed"

    def test_run_writes_tables_and_manifest(self):
        matrix = [{'fis': 'HF-D', 'profile': 'IDEAL'}, {'fis': 'none'},
                  {'fis': 'HF-RSM', 'profile': 'RAD'}]
        config = small_config(self.tmpdir, matrix, seeds=(0, 1), surrogate={'min_samples': 10_000})

        results = run(config)
        assert list(results.columns) == list(RESULTS_COLUMNS)
        assert len(results) == 6
        assert list(results['status']) == ["ok", "ok", "ok", "ok", "failed", "failed"]
        for name in ("results.csv", "timings.csv", "summary.csv", "config.yaml", "failures.json", "manifest.json"):
            assert os.path.exists(os.path.join(self.tmpdir, name))

        with open(os.path.join(self.tmpdir, "manifest.json"), encoding='utf-8') as f:
            manifest = json.load(f)
        paths = {entry['path'] for entry in manifest['files']}
        assert "results.csv" in paths
        assert "highway_default/hf-d_ideal/seed_1/checkpoint.json" in paths
        assert "highway_default/hf-d_ideal/seed_1/shaped.jsonl" in paths
        assert "highway_default/none/seed_0/shaped.jsonl" not in paths
        assert "manifest.json" not in paths

        timings = pd.read_csv(os.path.join(self.tmpdir, "timings.csv"))
        assert 'wall_clock_s' in timings.columns
        assert 'wall_clock_s' not in pd.read_csv(os.path.join(self.tmpdir, "results.csv")).columns

    def test_identical_runs_give_identical_results(self):
        matrix = [{'fis': 'HF-D', 'profile': 'AGG'}, {'fis': 'LLM-D'}]
        run(small_config(os.path.join(self.tmpdir, "a"), matrix))
        run(small_config(os.path.join(self.tmpdir, "b"), matrix))

        with open(os.path.join(self.tmpdir, "a", "results.csv"), 'rb') as f:
            first = f.read()
        with open(os.path.join(self.tmpdir, "b", "results.csv"), 'rb') as f:
            assert f.read() == first

    def test_remote_without_credentials_fails_before_rollouts(self, monkeypatch):
        monkeypatch.delenv('LLM_API_KEY', raising=False)
        monkeypatch.delenv('LLM_API_BASE', raising=False)
        config = small_config(self.tmpdir, [{'fis': 'LLM-D'}], llm={'provider': 'remote'})

        with pytest.raises(ConfigurationError):
            run(config)
        assert not os.path.exists(os.path.join(self.tmpdir, "results.csv"))

    def test_remote_prompts_archived_in_manifest(self, app, monkeypatch):
        monkeypatch.setenv('LLM_API_BASE', "http://mock/v1")
        monkeypatch.setenv('LLM_API_KEY', "test-key")

        def local_provider(llm, weights, dt, v_thresh):
            return build_provider(llm, weights, dt, v_thresh, transport=httpx.WSGITransport(app=app))

        monkeypatch.setattr(runner, 'build_provider', local_provider)
        config = small_config(self.tmpdir, [{'fis': 'LLM-D'}], llm={'provider': 'remote', 'max_in_flight': 2})

        results = run(config)
        assert list(results['status']) == ["ok"]
        prompt_log = os.path.join(self.tmpdir, "prompts", "highway_default", "llm-d_seed_0.jsonl")
        with open(prompt_log, encoding='utf-8') as f:
            records = [json.loads(line) for line in f]
        shaped = load_dataset(os.path.join(cell_dir(config, config.matrix[0], 0), "shaped.jsonl"))
        assert len(records) == len(shaped)
        assert [(r['episode_id'], r['t']) for r in records] == [(s.episode_id, s.t) for s in shaped]
        assert all(r['kind'] == "llm_d" and "llm_score_1" in r['response'] for r in records)

        with open(os.path.join(self.tmpdir, "manifest.json"), encoding='utf-8') as f:
            paths = {entry['path'] for entry in json.load(f)['files']}
        assert "prompts/highway_default/llm-d_seed_0.jsonl" in paths
        assert "highway_default/llm-d/seed_0/shaped.jsonl" in paths

    def test_mock_provider_writes_no_prompt_log(self):
        run(small_config(self.tmpdir, [{'fis': 'LLM-D'}]))

        assert not os.path.exists(os.path.join(self.tmpdir, "prompts"))

    def test_report_from_results_dir(self):
        matrix = [{'fis': 'HF-D', 'profile': 'IDEAL'}, {'fis': 'HF-D', 'profile': 'RAD'}, {'fis': 'LLM-D'}]
        run(small_config(self.tmpdir, matrix))

        report, files = write_report(self.tmpdir)
        assert set(report['strategy']) == {"HF-D/IDEAL", "HF-D/RAD", "LLM-D"}
        with open(files[1], encoding='utf-8') as f:
            series = json.load(f)
        assert len(series) == 3
        assert set(series[0]) == {'env', 'strategy', 'degradation_pct', 'normalized'}

    def test_report_needs_results(self):
        with pytest.raises(ConfigurationError):
            write_report(self.tmpdir)


class TestManifest:
    """Test artifact hashing"""

    def setup_method(self):
        """Set up test fixtures."""
        self.tmpdir = tempfile.mkdtemp()

    def teardown_method(self):
        """Clean up test fixtures."""
        shutil.rmtree(self.tmpdir, ignore_errors=True)

    def test_hashes_and_relative_paths(self):
        os.makedirs(os.path.join(self.tmpdir, "sub"))
        path = os.path.join(self.tmpdir, "sub", "data.txt")
        with open(path, 'wb') as f:
            f.write(b"shaping")

        manifest_path = write_manifest(self.tmpdir, [path, path])
        with open(manifest_path, encoding='utf-8') as f:
            manifest = json.load(f)
        assert manifest['files'] == [{'path': "sub/data.txt", 'sha256': hashlib.sha256(b"shaping").hexdigest()}]
        assert manifest['results_schema_version'] == 1
