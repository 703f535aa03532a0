"""
CSV tables, SVG plots and console tables. Plots are drawn only from data that is also
written as CSV.
"""
import logging
from pathlib import Path
from typing import Dict, Iterable, List, Tuple

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402
from tabulate import tabulate  # noqa: E402

from ctda.trainer.metrics import Evaluation, read_table, write_table  # noqa: E402

logger = logging.getLogger(__name__)

# Fixed ids and no date keep SVG output byte-identical across runs.
matplotlib.rcParams["svg.hashsalt"] = "ctda"
SVG_METADATA = {"Date": None}

TABLE_SCHEMA_VERSION = 1
STRATEGY_COLUMNS = ["schema_version", "strategy", "best_epoch", "accuracy", "ovo_auc", "ovr_auc",
                    "cmmd_sq", "dcmmd_sq"]
CORRELATION_COLUMNS = ["schema_version", "tau", "term", "rho"]

TERM_LABELS = {
    "scaled_loss": "tau * loss",
    "cmmd_sq": "CMMD^2",
    "term_a": "A",
    "term_b": "B",
    "term_c": "C",
}


def strategy_table(results: Dict[str, Tuple[int, Evaluation]]) -> pd.DataFrame:
    """Rows from {strategy: (best_epoch, Evaluation)}."""
    rows = []
    for strategy, (best_epoch, evaluation) in results.items():
        row = {"schema_version": TABLE_SCHEMA_VERSION, "strategy": strategy, "best_epoch": best_epoch}
        row.update(evaluation.to_dict())
        rows.append(row)
    return pd.DataFrame(rows, columns=STRATEGY_COLUMNS)


def read_strategy_table(path: str | Path) -> pd.DataFrame:
    return read_table(path, STRATEGY_COLUMNS, TABLE_SCHEMA_VERSION)


def correlation_table(rows: Iterable[Dict[str, float]]) -> pd.DataFrame:
    frame = pd.DataFrame(list(rows), columns=["tau", "term", "rho"])
    frame.insert(0, "schema_version", TABLE_SCHEMA_VERSION)
    return frame.sort_values(["tau", "term"], kind="stable").reset_index(drop=True)


def read_correlation_table(path: str | Path) -> pd.DataFrame:
    return read_table(path, CORRELATION_COLUMNS, TABLE_SCHEMA_VERSION)


def _save(fig, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", metadata=SVG_METADATA)
    plt.close(fig)
    logger.info(f"Wrote {path}")
    return path


def plot_term_evolution(log_frame: pd.DataFrame, path: str | Path, title: str = "") -> Path:
    """Decomposition terms and the tau-scaled loss against the epoch."""
    fig, ax = plt.subplots(figsize=(7, 4))
    for column, label in TERM_LABELS.items():
        ax.plot(log_frame["epoch"], log_frame[column], label=label)
    ax.set_xlabel("epoch")
    ax.set_ylabel("value")
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    return _save(fig, Path(path))


def plot_correlations(frame: pd.DataFrame, path: str | Path) -> Path:
    """Pearson correlation of first differences against temperature, one line per term."""
    fig, ax = plt.subplots(figsize=(7, 4))
    for term, group in frame.groupby("term", sort=True):
        ax.plot(group["tau"], group["rho"], marker="o", label=TERM_LABELS.get(term, term))
    ax.set_xscale("log")
    ax.set_xlabel("tau")
    ax.set_ylabel("rho")
    ax.axhline(0.0, color="black", linewidth=0.5)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    return _save(fig, Path(path))


def format_table(frame: pd.DataFrame, drop: List[str] | None = None) -> str:
    drop = ["schema_version"] + (drop or [])
    shown = frame.drop(columns=[c for c in drop if c in frame.columns])
    return tabulate(shown, headers="keys", tablefmt="github", showindex=False, floatfmt=".4f")
