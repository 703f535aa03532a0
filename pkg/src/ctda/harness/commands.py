"""
Experiment commands behind the CLI. Each one reads an ExperimentConfig, owns a fixed
part of the output tree and rewrites it completely, so reruns with the same config and
seed give the same bytes.
"""
import json
import logging
import shutil
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Sequence

import pandas as pd
from slugify import slugify

from ctda.errors import DatasetIOError, VerificationError
from ctda.harness.experiment import ExperimentConfig, OutputLayout
from ctda.harness.reports import (correlation_table, format_table, plot_correlations, plot_term_evolution,
                                  read_correlation_table, read_strategy_table, strategy_table)
from ctda.harness.sweep import run_tau_sweep
from ctda.harness.verify import run_checks
from ctda.synthgen import generate_dataset
from ctda.trainer.checkpoint import save_checkpoint
from ctda.trainer.loop import Strategy, splits_for, train
from ctda.trainer.metrics import read_log, write_log, write_table

logger = logging.getLogger(__name__)


def layout_for(experiment: ExperimentConfig) -> OutputLayout:
    return OutputLayout(experiment.output_root())


def cmd_generate(experiment: ExperimentConfig, jobs: int = 1) -> Path:
    layout = layout_for(experiment)
    if layout.dataset.exists():
        shutil.rmtree(layout.dataset)
    return generate_dataset(
        experiment.generator,
        experiment.dataset.n_patches,
        experiment.dataset.mode,
        experiment.dataset.split_seed,
        layout.dataset,
        jobs=jobs,
    )


def _require_dataset(layout: OutputLayout) -> Path:
    if not (layout.dataset / "manifest.json").exists():
        raise DatasetIOError(f"No dataset under {layout.dataset}; run 'ctda generate' first")
    return layout.dataset


def run_dir_for(layout: OutputLayout, strategy: Strategy) -> Path:
    return layout.runs / slugify(strategy.value)


def cmd_train(experiment: ExperimentConfig, strategies: Sequence[Strategy] | None = None) -> Dict[str, Path]:
    """Train each strategy and write log.csv, model.ckpt and evaluation.csv per run."""
    layout = layout_for(experiment)
    dataset_dir = _require_dataset(layout)
    config = experiment.train
    splits = splits_for(config, dataset_dir)

    run_dirs = {}
    for strategy in strategies or [config.strategy]:
        run_config = replace(config, strategy=strategy)
        logger.info(f"Training {strategy.value}")
        result = train(run_config, splits)

        run_dir = run_dir_for(layout, strategy)
        run_dir.mkdir(parents=True, exist_ok=True)
        write_log(result.log, run_dir / "log.csv")
        save_checkpoint(run_dir / "model.ckpt", result.feature_map, result.head)
        if result.test is not None:
            write_table(strategy_table({strategy.value: (result.best_epoch, result.test)}),
                        run_dir / "evaluation.csv")
        run_dirs[strategy.value] = run_dir

    collect_strategies(layout)
    return run_dirs


def collect_strategies(layout: OutputLayout) -> pd.DataFrame | None:
    """Merge every run's evaluation.csv into strategies.csv."""
    frames = [read_strategy_table(d / "evaluation.csv") for d in layout.run_dirs()
              if (d / "evaluation.csv").exists()]
    if not frames:
        return None
    frame = pd.concat(frames, ignore_index=True)
    write_table(frame, layout.root / "strategies.csv")
    return frame


def cmd_sweep_tau(experiment: ExperimentConfig, jobs: int = 1) -> Path:
    layout = layout_for(experiment)
    dataset_dir = _require_dataset(layout)
    rows = run_tau_sweep(experiment.train, experiment.sweep.tau_grid, dataset_dir, layout.sweep,
                         epochs=experiment.sweep.epochs, jobs=jobs)
    table = correlation_table(rows.to_dict(orient="records"))
    path = write_table(table, layout.sweep / "correlation.csv")
    plot_correlations(table, layout.sweep / "correlation.svg")
    return path


def cmd_verify(experiment: ExperimentConfig) -> Dict:
    """Run the property suite, write verify.json and raise if any check failed."""
    layout = layout_for(experiment)
    settings = experiment.verify
    report = run_checks(seed=settings.seed, trials=settings.trials, batch_per_cell=settings.batch_per_cell)

    layout.root.mkdir(parents=True, exist_ok=True)
    try:
        layout.verify_report.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    except OSError as e:
        raise DatasetIOError(f"Cannot write {layout.verify_report}: {e}")

    if not report["passed"]:
        failed = [c["name"] for c in report["checks"] if not c["passed"]]
        raise VerificationError(f"Verification failed: {', '.join(failed)}", report)
    return report


def cmd_report(experiment: ExperimentConfig) -> List[str]:
    """Rebuild plots and tables from the CSVs already under the output root."""
    layout = layout_for(experiment)
    sections = []

    for run_dir in layout.run_dirs():
        log = read_log(run_dir / "log.csv")
        plot_term_evolution(log.frame, layout.reports / f"{run_dir.name}-terms.svg", title=run_dir.name)

    strategies = collect_strategies(layout)
    if strategies is not None:
        sections.append("Strategies\n" + format_table(strategies))

    correlation_path = layout.sweep / "correlation.csv"
    if correlation_path.exists():
        correlations = read_correlation_table(correlation_path)
        plot_correlations(correlations, layout.reports / "correlation.svg")
        pivot = correlations.pivot(index="tau", columns="term", values="rho").reset_index()
        sections.append("Derivative correlation\n" + format_table(pivot))

    if not sections and not layout.run_dirs():
        raise DatasetIOError(f"Nothing to report under {layout.root}")
    return sections
