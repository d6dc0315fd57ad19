"""
Experiment Runner Service
Runs the strategy x profile x seed matrix and writes result tables with a manifest.
"""

import hashlib
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import pandas as pd
import yaml

from ..config import require_llm_credentials
from ..envs import make_env
from ..errors import ConfigurationError, WorkbenchError
from ..logging_config import kv
from ..schemas.experiment import FIS, Cell, ExperimentConfig
from ..schemas.trajectory import Profile
from .feedback_rules import rule_scores, shape_dataset_hf_d
from .llm_shaping import shape_dataset_hfbf, shape_dataset_llm_d
from .metrics import MetricsReport, evaluate_metrics
from .pca import PCAModel, fit_dataset
from .ppo import evaluate, save_checkpoint, train, write_training_log
from .providers import FeedbackProvider, RemoteLLM, build_provider
from .surrogate import SurrogateModel, fit_surrogate, shape_dataset_hf_rsm
from .trajectory_store import TrajectoryDataset, save_dataset

logger = logging.getLogger(__name__)

RESULTS_SCHEMA_VERSION = 1
RESULTS_COLUMNS = ('env', 'fis', 'profile', 'seed', 'status', 'fma', 'att', 'aer')
TIMING_COLUMNS = ('env', 'fis', 'profile', 'seed', 'wall_clock_s')
SUMMARY_COLUMNS = ('env', 'fis', 'profile', 'seeds', 'fma', 'att', 'aer')
DEGRADATION_COLUMNS = ('env', 'strategy', 'aer', 'degradation_pct', 'normalized')
BASELINE = "HF-D/IDEAL"


class StrategyShaper:
    """
    Feedback strategy of one matrix cell, applied to each collected batch.

    Keeps the artifacts the strategy produces (surrogate, last PCA model and
    every shaped batch) for the runner to persist.
    """

    def __init__(self, config: ExperimentConfig, cell: Cell, provider: Optional[FeedbackProvider] = None):
        self.config = config
        self.cell = cell
        self.provider = provider
        highway = config.highway_config()
        self.dt = highway.dt
        self.v_thresh = highway.speed_reward_band
        self.surrogate: Optional[SurrogateModel] = None
        self.pca: Optional[PCAModel] = None
        self.batches: List[TrajectoryDataset] = []

    def human_feedback(self, dataset: TrajectoryDataset) -> TrajectoryDataset:
        return shape_dataset_hf_d(dataset, self.config.coefficients(self.cell.profile),
                                  self.config.weights, self.dt, self.v_thresh)

    def __call__(self, dataset: TrajectoryDataset) -> TrajectoryDataset:
        shaped = self._shape(dataset)
        self.batches.append(shaped)
        return shaped

    def training_dataset(self) -> TrajectoryDataset:
        """Every shaped batch of the run, in collection order"""
        merged = TrajectoryDataset("highway" if self.config.env.is_highway else "reacher")
        for batch in self.batches:
            merged.extend(batch)
        return merged

    def _shape(self, dataset: TrajectoryDataset) -> TrajectoryDataset:
        fis = self.cell.fis
        if fis == FIS.HF_D:
            return self.human_feedback(dataset)
        if fis == FIS.HF_RSM:
            if self.surrogate is None:
                labels = rule_scores(dataset, self.config.coefficients(self.cell.profile),
                                     self.config.weights, self.dt, self.v_thresh)
                self.surrogate = fit_surrogate(dataset, labels, self.config.surrogate,
                                               self.cell.profile, self.dt, self.v_thresh)
            return shape_dataset_hf_rsm(dataset, self.surrogate, self.dt, self.v_thresh)
        if fis == FIS.LLM_D:
            return shape_dataset_llm_d(dataset, self.provider, self.config.llm)
        if fis == FIS.LLM_HFBF:
            human = self.human_feedback(dataset)
            self.pca = fit_dataset(human)
            return shape_dataset_hfbf(human, self.pca, self.provider, self.config.llm)
        return dataset


def build_shaper(config: ExperimentConfig, cell: Cell) -> Optional[StrategyShaper]:
    """Shaper for a cell; None for the unshaped baseline"""
    if cell.fis == FIS.NONE:
        return None
    provider = None
    if cell.fis in (FIS.LLM_D, FIS.LLM_HFBF):
        highway = config.highway_config()
        provider = build_provider(config.llm, config.weights, highway.dt, highway.speed_reward_band)
    return StrategyShaper(config, cell, provider)


@dataclass
class CellResult:
    """Outcome of one (cell, seed) run"""
    env: str
    cell: Cell
    seed: int
    status: str
    report: Optional[MetricsReport] = None
    wall_clock_s: float = 0.0
    error: Optional[Dict[str, Any]] = None
    files: List[str] = field(default_factory=list)

    def row(self) -> Dict[str, Any]:
        metrics = self.report.to_row() if self.report else {'fma': math.nan, 'att': math.nan, 'aer': math.nan}
        return {
            'env': self.env,
            'fis': self.cell.fis.value,
            'profile': self.cell.profile.value,
            'seed': self.seed,
            'status': self.status,
            **metrics,
        }

    def timing(self) -> Dict[str, Any]:
        return {
            'env': self.env,
            'fis': self.cell.fis.value,
            'profile': self.cell.profile.value,
            'seed': self.seed,
            'wall_clock_s': round(self.wall_clock_s, 3),
        }


def cell_dir(config: ExperimentConfig, cell: Cell, seed: int) -> str:
    return os.path.join(config.output_dir, config.env.value, cell.slug, f"seed_{seed}")


def prompt_log_path(config: ExperimentConfig, cell: Cell, seed: int) -> str:
    return os.path.join(config.output_dir, "prompts", config.env.value, f"{cell.slug}_seed_{seed}.jsonl")


def run_cell(config: ExperimentConfig, cell: Cell, seed: int) -> CellResult:
    """
    Train, evaluate and score one cell for one seed.

    Feedback failures mark the result failed instead of raising, so the
    matrix can continue. Artifacts go under cell_dir(): checkpoint, training
    log, shaped training data, evaluation rollouts, metrics and fitted models.
    Remote prompts and answers go to prompt_log_path(), failed cells included.
    """
    started = time.perf_counter()
    out_dir = cell_dir(config, cell, seed)
    os.makedirs(out_dir, exist_ok=True)
    result = CellResult(config.env.value, cell, seed, status="ok")
    logger.info(kv("cell started", env=config.env.value, cell=cell.label, seed=seed))

    shaper = build_shaper(config, cell)
    try:
        env = make_env(config)
        model, logs = train(env, config.ppo, shaper, seed)
        eval_dataset = evaluate(env, model, config.eval_episodes, seed)
        result.report = evaluate_metrics(eval_dataset, config.fma)

        result.files.append(save_checkpoint(model, os.path.join(out_dir, "checkpoint.json")))
        result.files.append(write_training_log(logs, os.path.join(out_dir, "training_log.csv")))
        result.files.append(save_dataset(eval_dataset, os.path.join(out_dir, "eval.jsonl")))
        metrics_path = os.path.join(out_dir, "metrics.json")
        with open(metrics_path, 'w', encoding='utf-8', newline='\n') as f:
            f.write(result.report.to_json())
        result.files.append(metrics_path)
        if shaper is not None and shaper.surrogate is not None:
            result.files.append(shaper.surrogate.save(os.path.join(out_dir, "surrogate.json")))
        if shaper is not None and shaper.batches:
            result.files.append(save_dataset(shaper.training_dataset(), os.path.join(out_dir, "shaped.jsonl")))
        if shaper is not None and shaper.pca is not None:
            result.files.append(shaper.pca.save(os.path.join(out_dir, "pca.json")))
    except WorkbenchError as e:
        result.status = "failed"
        result.error = e.to_dict()
        logger.error(kv("cell failed", env=config.env.value, cell=cell.label, seed=seed, error=e.code))
    finally:
        if shaper is not None and isinstance(shaper.provider, RemoteLLM) and shaper.provider.exchanges:
            result.files.append(shaper.provider.save_exchanges(prompt_log_path(config, cell, seed)))
        if shaper is not None and shaper.provider is not None:
            shaper.provider.close()

    result.wall_clock_s = time.perf_counter() - started
    if result.report is not None:
        logger.info(kv("cell finished", env=config.env.value, cell=cell.label, seed=seed,
                       aer=round(result.report.aer, 4), att=result.report.att))
    return result


def _run_job(job: Tuple[ExperimentConfig, Cell, int]) -> CellResult:
    return run_cell(*job)


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(output_dir: str, files: List[str]) -> str:
    """manifest.json listing every written file with its sha256, paths relative to output_dir"""
    entries = [
        {'path': os.path.relpath(path, output_dir).replace(os.sep, "/"), 'sha256': _sha256(path)}
        for path in sorted(set(files))
    ]
    path = os.path.join(output_dir, "manifest.json")
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        json.dump({'results_schema_version': RESULTS_SCHEMA_VERSION, 'files': entries}, f, indent=2)
    return path


def summarize(results: pd.DataFrame) -> pd.DataFrame:
    """Seed means of successful rows per (env, fis, profile)"""
    ok = results[results['status'] == "ok"]
    if ok.empty:
        return pd.DataFrame(columns=list(SUMMARY_COLUMNS))
    grouped = ok.groupby(['env', 'fis', 'profile'], sort=False)
    summary = grouped[['fma', 'att', 'aer']].mean().reset_index()
    summary.insert(3, 'seeds', grouped['seed'].count().values)
    return summary[list(SUMMARY_COLUMNS)]


def run(config: ExperimentConfig) -> pd.DataFrame:
    """
    Run every (cell, seed) pair of the matrix.

    Writes results.csv, timings.csv, summary.csv, the resolved config and
    manifest.json under config.output_dir.

    Returns:
        Results table, ordered by cell then seed

    Raises:
        ConfigurationError: remote provider without credentials (before any rollout)
    """
    require_llm_credentials(config)
    os.makedirs(config.output_dir, exist_ok=True)
    jobs = [(config.with_cell(cell), cell, seed) for cell in config.matrix for seed in config.seeds]
    logger.info(kv("matrix started", env=config.env.value, cells=len(config.matrix),
                   seeds=len(config.seeds), workers=config.workers))

    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            outcomes = list(pool.map(_run_job, jobs))
    else:
        outcomes = [_run_job(job) for job in jobs]

    results = pd.DataFrame([o.row() for o in outcomes], columns=list(RESULTS_COLUMNS))
    files: List[str] = [path for o in outcomes for path in o.files]
    files.append(_write_csv(results, os.path.join(config.output_dir, "results.csv")))
    files.append(_write_csv(pd.DataFrame([o.timing() for o in outcomes], columns=list(TIMING_COLUMNS)),
                            os.path.join(config.output_dir, "timings.csv")))
    files.append(_write_csv(summarize(results), os.path.join(config.output_dir, "summary.csv")))

    config_path = os.path.join(config.output_dir, "config.yaml")
    with open(config_path, 'w', encoding='utf-8', newline='\n') as f:
        yaml.safe_dump(config.to_dict(), f, sort_keys=False)
    files.append(config_path)
    failures = [o.error for o in outcomes if o.error]
    if failures:
        errors_path = os.path.join(config.output_dir, "failures.json")
        with open(errors_path, 'w', encoding='utf-8', newline='\n') as f:
            json.dump([
                {'fis': o.cell.fis.value, 'profile': o.cell.profile.value, 'seed': o.seed, **o.error}
                for o in outcomes if o.error
            ], f, indent=2)
        files.append(errors_path)
    write_manifest(config.output_dir, files)

    logger.info(kv("matrix finished", rows=len(results), failed=len(failures)))
    return results


def _write_csv(frame: pd.DataFrame, path: str) -> str:
    frame.to_csv(path, index=False, lineterminator='\n')
    return path


def strategy_label(fis: str, profile: str) -> str:
    return fis if profile == Profile.NA.value else f"{fis}/{profile}"


def degradation_report(results: pd.DataFrame, baseline: str = BASELINE) -> pd.DataFrame:
    """
    AER degradation of every strategy relative to a baseline, per environment.

    degradation_pct = 100 * (baseline AER - AER) / |baseline AER| on seed
    means (the raw difference times 100 when the baseline AER is 0), then
    Min-Max scaled to 0-100 across the environment's strategies (all 0 when
    they are equal).

    Raises:
        ConfigurationError: an environment has no successful baseline rows
    """
    ok = results[results['status'] == "ok"] if 'status' in results.columns else results
    rows = []
    for env in dict.fromkeys(ok['env']):
        env_rows = ok[ok['env'] == env]
        labels = [strategy_label(f, p) for f, p in zip(env_rows['fis'], env_rows['profile'])]
        means = env_rows.assign(strategy=labels).groupby('strategy', sort=False)['aer'].mean()
        if baseline not in means.index:
            raise ConfigurationError(f"no '{baseline}' baseline rows for env '{env}'")
        base = float(means[baseline])
        pct = {
            strategy: 100.0 * (base - aer) / abs(base) if base != 0 else 100.0 * (base - aer)
            for strategy, aer in means.items()
        }
        lo, hi = min(pct.values()), max(pct.values())
        for strategy, aer in means.items():
            normalized = 0.0 if hi == lo else 100.0 * (pct[strategy] - lo) / (hi - lo)
            rows.append({'env': env, 'strategy': strategy, 'aer': float(aer),
                         'degradation_pct': float(pct[strategy]), 'normalized': float(normalized)})
    if not rows:
        raise ConfigurationError("results hold no successful rows")
    return pd.DataFrame(rows, columns=list(DEGRADATION_COLUMNS))


def write_report(results_dir: str, baseline: str = BASELINE) -> Tuple[pd.DataFrame, List[str]]:
    """Degradation CSV + plot-ready JSON series next to a run's results.csv"""
    results_path = os.path.join(results_dir, "results.csv")
    if not os.path.exists(results_path):
        raise ConfigurationError(f"no results.csv in {results_dir}")
    results = pd.read_csv(results_path, keep_default_na=False, na_values=[""])
    report = degradation_report(results, baseline)
    csv_path = _write_csv(report, os.path.join(results_dir, "degradation.csv"))
    json_path = os.path.join(results_dir, "degradation.json")
    series = report[['env', 'strategy', 'degradation_pct', 'normalized']].to_dict(orient='records')
    with open(json_path, 'w', encoding='utf-8', newline='\n') as f:
        json.dump(series, f, indent=2)
    return report, [csv_path, json_path]


def seed_means(results: pd.DataFrame, metric: str = 'aer') -> Dict[str, float]:
    """Mean of a metric per strategy label over successful rows"""
    ok = results[results['status'] == "ok"]
    labels = [strategy_label(f, p) for f, p in zip(ok['fis'], ok['profile'])]
    return {k: float(v) for k, v in ok.assign(strategy=labels).groupby('strategy', sort=False)[metric].mean().items()}
