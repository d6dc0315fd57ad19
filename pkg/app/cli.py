"""
Command Line Interface
Subcommands for collecting, shaping, training, evaluating and reporting.
"""

import argparse
import json
import logging
import os
import sys
from typing import List, Optional

import numpy as np
import pandas as pd
from rich.console import Console
from rich.table import Table

from .config import load_config, require_llm_credentials
from .envs import make_env
from .errors import ConfigurationError, WorkbenchError
from .logging_config import configure_logging, kv
from .schemas.experiment import FIS, Cell, ExperimentConfig
from .schemas.validation import ConfigValidator
from .services.llm_shaping import shape_dataset_hfbf
from .services.metrics import evaluate_metrics
from .services.mock_server import create_mock_llm_app
from .services.pca import PCAModel, fit_dataset
from .services.ppo import ActorCritic, collect, evaluate, load_checkpoint
from .services.runner import BASELINE, build_shaper, run, run_cell, write_report
from .services.trajectory_store import load_dataset, save_dataset

logger = logging.getLogger(__name__)

console = Console()


def _emit(payload: dict) -> None:
    print(json.dumps(payload, indent=2))


def _table(frame: pd.DataFrame, title: str) -> Table:
    table = Table(title=title)
    for column in frame.columns:
        table.add_column(str(column))
    for row in frame.itertuples(index=False):
        table.add_row(*[f"{v:.4f}" if isinstance(v, float) else str(v) for v in row])
    return table


def _sibling(path: str, suffix: str) -> str:
    stem, _ = os.path.splitext(path)
    return f"{stem}{suffix}"


def cmd_collect(args, config: ExperimentConfig) -> int:
    env = make_env(config)
    seed = config.seeds[0]
    if args.checkpoint:
        model = load_checkpoint(args.checkpoint)
    else:
        model = ActorCritic.for_env(env, config.ppo.hidden_size, seed)
    timesteps = args.timesteps if args.timesteps is not None else config.ppo.batch_timesteps
    dataset = collect(env, model, timesteps, np.random.default_rng([seed, 1]), seed=seed)
    out = args.out or os.path.join(config.output_dir, f"{config.env.value}_seed{seed}.jsonl")
    save_dataset(dataset, out)
    _emit({'dataset': out, 'transitions': len(dataset), 'episodes': dataset.episode_count()})
    return 0


def cmd_shape(args, config: ExperimentConfig) -> int:
    cell = Cell.from_dict({'fis': args.fis, 'profile': args.profile or 'NA'})
    errors = ConfigValidator.validate_cell(cell)
    if errors:
        raise ConfigurationError("; ".join(errors))
    config = config.with_cell(cell)
    require_llm_credentials(config)
    dataset = load_dataset(args.dataset)

    shaper = build_shaper(config, cell)
    extras = {}
    if shaper is None:
        shaped = dataset
    elif cell.fis == FIS.LLM_HFBF and args.pca:
        human = shaper.human_feedback(dataset)
        shaped = shape_dataset_hfbf(human, PCAModel.load(args.pca), shaper.provider, config.llm)
    else:
        shaped = shaper(dataset)
    out = args.out or _sibling(args.dataset, f".{cell.slug}.jsonl")
    save_dataset(shaped, out)
    if shaper is not None and shaper.surrogate is not None:
        extras['surrogate'] = shaper.surrogate.save(_sibling(out, ".surrogate.json"))
    if shaper is not None and shaper.pca is not None:
        extras['pca'] = shaper.pca.save(_sibling(out, ".pca.json"))
    if shaper is not None and shaper.provider is not None:
        shaper.provider.close()
    _emit({'dataset': out, 'strategy': cell.label, 'transitions': len(shaped), **extras})
    return 0


def cmd_train(args, config: ExperimentConfig) -> int:
    require_llm_credentials(config)
    cell = config.matrix[0]
    result = run_cell(config.with_cell(cell), cell, config.seeds[0])
    if result.status != "ok":
        print(json.dumps(result.error), file=sys.stderr)
        return 1
    _emit({'strategy': cell.label, 'seed': result.seed, 'files': result.files, **result.report.to_row()})
    return 0


def cmd_eval(args, config: ExperimentConfig) -> int:
    env = make_env(config)
    model = load_checkpoint(args.checkpoint)
    episodes = args.episodes if args.episodes is not None else config.eval_episodes
    dataset = evaluate(env, model, episodes, config.seeds[0])
    if args.out:
        save_dataset(dataset, args.out)
    report = evaluate_metrics(dataset, config.fma)
    print(report.to_json())
    return 0


def cmd_pca_fit(args, config: ExperimentConfig) -> int:
    model = fit_dataset(load_dataset(args.dataset))
    out = args.out or _sibling(args.dataset, ".pca.json")
    model.save(out)
    _emit({
        'model': out,
        'explained_variance_ratio': [round(float(v), 6) for v in model.explained_variance_ratio],
    })
    return 0


def cmd_report(args, config: ExperimentConfig) -> int:
    results_dir = args.results_dir or config.output_dir
    report, files = write_report(results_dir, args.baseline)
    console.print(_table(report, "AER degradation"))
    logger.info(kv("report written", files=",".join(files)))
    return 0


def cmd_run(args, config: ExperimentConfig) -> int:
    results = run(config)
    console.print(_table(results, f"Results ({config.env.value})"))
    return 0 if (results['status'] == "ok").all() else 1


def cmd_serve_mock(args, config: ExperimentConfig) -> int:
    logger.info(kv("mock endpoint", host=args.host, port=args.port))
    create_mock_llm_app().run(host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shaping-workbench", description="Reward-shaping feedback workbench")
    parser.add_argument('--config', help="experiment YAML file (default: config/experiment.yaml)")
    parser.add_argument('--seed', type=int, help="run a single seed")
    parser.add_argument('--output', help="output directory")
    parser.add_argument('--set', dest='overrides', action='append', default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config value (repeatable)")
    parser.add_argument('--log-level', default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('collect', help="roll out a policy and save the dataset")
    p.add_argument('--timesteps', type=int)
    p.add_argument('--checkpoint', help="policy checkpoint (random init when omitted)")
    p.add_argument('--out')
    p.set_defaults(handler=cmd_collect)

    p = sub.add_parser('shape', help="apply a feedback strategy to a saved dataset")
    p.add_argument('dataset')
    p.add_argument('--fis', required=True, type=str.upper, choices=[f.value.upper() for f in FIS])
    p.add_argument('--profile', type=str.upper, choices=["IDEAL", "AGG", "RAD", "NA"])
    p.add_argument('--pca', help="fitted PCA model for LLM-HFBF (fitted on the dataset when omitted)")
    p.add_argument('--out')
    p.set_defaults(handler=cmd_shape)

    p = sub.add_parser('train', help="train and evaluate the first matrix cell")
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser('eval', help="evaluate a checkpoint")
    p.add_argument('checkpoint')
    p.add_argument('--episodes', type=int)
    p.add_argument('--out', help="save the evaluation dataset")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser('pca-fit', help="fit principal components on a dataset")
    p.add_argument('dataset')
    p.add_argument('--out')
    p.set_defaults(handler=cmd_pca_fit)

    p = sub.add_parser('report', help="degradation tables from a results directory")
    p.add_argument('results_dir', nargs='?')
    p.add_argument('--baseline', default=BASELINE)
    p.set_defaults(handler=cmd_report)

    p = sub.add_parser('run', help="run the full experiment matrix")
    p.set_defaults(handler=cmd_run)

    p = sub.add_parser('serve-mock', help="serve the mock chat-completions endpoint")
    p.add_argument('--host', default="127.0.0.1")
    p.add_argument('--port', type=int, default=8000)
    p.set_defaults(handler=cmd_serve_mock)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """
    Parse arguments and dispatch.

    Returns:
        0 on success, 1 on a workbench error (JSON on stderr); argparse exits 2 on usage errors
    """
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        config = load_config(args.config, args.overrides, args.seed, args.output)
        return args.handler(args, config)
    except WorkbenchError as e:
        print(json.dumps(e.to_dict()), file=sys.stderr)
        return 1
