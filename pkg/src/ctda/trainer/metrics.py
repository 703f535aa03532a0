"""
Classification metrics, embedding discrepancies on evaluation sets, and the
per-epoch experiment log.
"""
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, List, Sequence

import numpy as np
import pandas as pd
from scipy.special import softmax
from sklearn.metrics import roc_auc_score

from ctda.discrepancy import cmmd_sq, dcmmd_sq
from ctda.errors import DatasetIOError, EstimatorUndefinedError
from ctda.kernels import EmbeddingBatch

logger = logging.getLogger(__name__)

LOG_SCHEMA_VERSION = 1
LOG_COLUMNS = [
    "schema_version",
    "epoch",
    "phase",
    "lr",
    "tau",
    "train_loss",
    "val_accuracy",
    "val_ovo_auc",
    "scaled_loss",
    "cmmd_sq",
    "dcmmd_sq",
    "term_a",
    "term_b",
    "term_c",
    "residual",
]


@dataclass
class Evaluation:
    accuracy: float
    ovo_auc: float
    ovr_auc: float
    cmmd_sq: float
    dcmmd_sq: float

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


def multiclass_auc(labels: np.ndarray, probabilities: np.ndarray, multi_class: str) -> float:
    """Macro-averaged OvO or OvR AUC; the two coincide for two classes."""
    n_classes = probabilities.shape[1]
    if n_classes == 2:
        return float(roc_auc_score(labels, probabilities[:, 1]))
    return float(roc_auc_score(labels, probabilities, multi_class=multi_class, average="macro",
                               labels=list(range(n_classes))))


def classification_scores(labels, logits) -> Dict[str, float]:
    labels = np.asarray(labels)
    logits = np.asarray(logits, dtype=np.float64)
    n_classes = logits.shape[1]
    missing = sorted(set(range(n_classes)) - set(np.unique(labels).tolist()))
    if missing:
        raise EstimatorUndefinedError(f"classes {missing} absent from the evaluation set")

    probabilities = softmax(logits, axis=1)
    return {
        "accuracy": float(np.mean(np.argmax(logits, axis=1) == labels)),
        "ovo_auc": multiclass_auc(labels, probabilities, "ovo"),
        "ovr_auc": multiclass_auc(labels, probabilities, "ovr"),
    }


def evaluate(feature_map, head, dataset) -> Evaluation:
    """Accuracy, OvO/OvR AUC and domain discrepancies of a model on a labeled set."""
    z = feature_map.forward(dataset.features).z
    scores = classification_scores(dataset.class_labels, head.logits(z))
    batch = EmbeddingBatch(z, dataset.class_labels, dataset.domain_labels, head.n_classes)
    return Evaluation(
        accuracy=scores["accuracy"],
        ovo_auc=scores["ovo_auc"],
        ovr_auc=scores["ovr_auc"],
        cmmd_sq=cmmd_sq(batch),
        dcmmd_sq=dcmmd_sq(batch),
    )


class ExperimentLog:
    """Per-epoch rows with a fixed, versioned column set."""

    def __init__(self, rows: List[Dict[str, Any]] | None = None):
        self.rows: List[Dict[str, Any]] = []
        for row in rows or []:
            self.append(row)

    def append(self, row: Dict[str, Any]) -> None:
        row = dict(row, schema_version=LOG_SCHEMA_VERSION)
        missing = [c for c in LOG_COLUMNS if c not in row]
        extra = [c for c in row if c not in LOG_COLUMNS]
        if missing or extra:
            raise ValueError(f"log row mismatch: missing {missing}, unexpected {extra}")
        if self.rows and row["epoch"] <= self.rows[-1]["epoch"]:
            raise ValueError(f"epoch {row['epoch']} does not follow epoch {self.rows[-1]['epoch']}")
        self.rows.append({c: row[c] for c in LOG_COLUMNS})

    def __len__(self) -> int:
        return len(self.rows)

    @property
    def frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=LOG_COLUMNS)

    def phase(self, name: str) -> pd.DataFrame:
        frame = self.frame
        return frame[frame["phase"] == name]

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> "ExperimentLog":
        return cls(frame.to_dict(orient="records"))


def write_table(frame: pd.DataFrame, path: str | Path) -> Path:
    """RFC-4180 CSV (header row, CRLF line endings), full float precision."""
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, lineterminator="\r\n", float_format="%.17g")
    except OSError as e:
        raise DatasetIOError(f"Cannot write {path}: {e}")
    return path


def read_table(path: str | Path, columns: Sequence[str], schema_version: int) -> pd.DataFrame:
    path = Path(path)
    try:
        frame = pd.read_csv(path)
    except (OSError, pd.errors.ParserError) as e:
        raise DatasetIOError(f"Cannot read {path}: {e}")
    if list(frame.columns) != list(columns):
        raise DatasetIOError(f"{path} has columns {list(frame.columns)}, expected {list(columns)}")
    if len(frame) and (frame["schema_version"] != schema_version).any():
        raise DatasetIOError(f"{path} is not schema version {schema_version}")
    return frame


def write_log(log: ExperimentLog, path: str | Path) -> Path:
    return write_table(log.frame, path)


def read_log(path: str | Path) -> ExperimentLog:
    return ExperimentLog.from_frame(read_table(path, LOG_COLUMNS, LOG_SCHEMA_VERSION))
