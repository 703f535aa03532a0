"""
Temperature sweep: one supervised-contrastive training run per temperature, followed by
the correlation of each decomposition term's changes with the loss changes.
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

import pandas as pd
from slugify import slugify

from ctda.errors import EstimatorUndefinedError
from ctda.theory import Term, derivative_correlation
from ctda.trainer.loop import Phase, Strategy, TrainConfig, splits_for, train
from ctda.trainer.metrics import write_log
from ctda.trainer.schedule import TemperatureSchedule

logger = logging.getLogger(__name__)


def sweep_run_dir(root: Path, tau: float) -> Path:
    return root / slugify(f"tau {tau:g}")


def sweep_config(base: TrainConfig, tau: float, epochs: int | None = None) -> TrainConfig:
    """The contrastive phase alone, at a constant temperature."""
    return replace(
        base,
        strategy=Strategy.SUP_CONTR_LCP,
        temperature=TemperatureSchedule.constant(tau),
        epochs=base.epochs if epochs is None else epochs,
        lcp_epochs=0,
        finetune_epochs=0,
    )


def term_correlations(log, tau: float) -> List[Dict[str, float]]:
    frame = log.phase(Phase.CONTRASTIVE.value)
    rows = []
    for term in Term:
        try:
            rho = derivative_correlation(frame, term)
        except EstimatorUndefinedError:
            logger.warning(f"tau={tau:g}: {term.value} did not change; correlation undefined")
            rho = float("nan")
        rows.append({"tau": tau, "term": term.value, "rho": rho})
    return rows


def _sweep_point(args: Tuple[TrainConfig, float, str, str]) -> List[Dict[str, float]]:
    config, tau, dataset_dir, out_dir = args
    splits = splits_for(config, dataset_dir)
    splits.pop("test")
    result = train(config, splits)
    run_dir = Path(out_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    write_log(result.log, run_dir / "log.csv")
    return term_correlations(result.log, tau)


def run_tau_sweep(base: TrainConfig, taus: Sequence[float], dataset_dir: str | Path, out_dir: str | Path,
                  epochs: int | None = None, jobs: int = 1) -> pd.DataFrame:
    """Run every temperature, in up to ``jobs`` worker processes, and return the correlation rows."""
    out_dir = Path(out_dir)
    tasks = [
        (sweep_config(base, float(tau), epochs), float(tau), str(dataset_dir), str(sweep_run_dir(out_dir, tau)))
        for tau in taus
    ]
    logger.info(f"Sweeping {len(tasks)} temperatures with {jobs} job(s)")

    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as executor:
            results = list(executor.map(_sweep_point, tasks))
    else:
        results = [_sweep_point(task) for task in tasks]

    rows = [row for point in results for row in point]
    return pd.DataFrame(rows, columns=["tau", "term", "rho"])
