"""
Training strategies.

CE trains the feature map and head end to end with cross-entropy. SupContrLCP trains the
feature map with the supervised contrastive loss, freezes it and fits the linear head
(linear classification protocol). SupContrCE continues from SupContrLCP with every
parameter unfrozen under cross-entropy.
"""
import logging
import math
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from pathlib import Path
from typing import Any, Callable, Dict, Tuple

import numpy as np

from ctda.discrepancy import cmmd_sq, dcmmd_sq
from ctda.errors import BatchError, ConfigError, TrainingDivergedError
from ctda.kernels import EmbeddingBatch
from ctda.losses import augment, cross_entropy, sup_contrastive
from ctda.theory import decompose
from ctda.trainer.data import LabeledSet, load_splits
from ctda.trainer.metrics import Evaluation, ExperimentLog, classification_scores, evaluate
from ctda.trainer.model import FeatureMap, LinearHead
from ctda.trainer.sampling import BalancedBatchSampler
from ctda.trainer.schedule import TemperatureSchedule, cosine_lr, sgd_step

logger = logging.getLogger(__name__)


class Strategy(str, Enum):
    CE = "CE"
    SUP_CONTR_LCP = "SupContrLCP"
    SUP_CONTR_CE = "SupContrCE"


class Phase(str, Enum):
    CE = "ce"
    CONTRASTIVE = "contrastive"
    LCP = "lcp"
    FINETUNE = "finetune"


@dataclass(frozen=True)
class TrainConfig:
    strategy: Strategy = Strategy.SUP_CONTR_LCP
    epochs: int = 100
    lcp_epochs: int = 20
    finetune_epochs: int = 20
    base_lr: float = 1e-3
    weight_decay: float = 1e-4
    cosine_period: int = 4
    batch_size: int = 30
    temperature: TemperatureSchedule = field(default_factory=TemperatureSchedule)
    hidden_dim: int = 128
    embedding_dim: int = 32
    target_side: int = 16
    histogram_bins: int = 32
    split_fractions: Tuple[float, float, float] = (0.7, 0.15, 0.15)
    augment: bool = True
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "strategy", Strategy(self.strategy))
        for name in ("epochs", "lcp_epochs", "finetune_epochs"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")
        if self.base_lr < 0 or self.weight_decay < 0:
            raise ConfigError("base_lr and weight_decay must be non-negative")
        if self.cosine_period <= 0 or self.batch_size <= 0:
            raise ConfigError("cosine_period and batch_size must be positive")
        if min(self.hidden_dim, self.embedding_dim, self.target_side) <= 0:
            raise ConfigError("model dimensions must be positive")
        if self.histogram_bins < 0:
            raise ConfigError(f"histogram_bins must be non-negative, got {self.histogram_bins}")

    def with_seed(self, seed: int) -> "TrainConfig":
        return replace(self, seed=seed)

    def to_dict(self) -> Dict[str, Any]:
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data["strategy"] = self.strategy.value
        data["temperature"] = self.temperature.to_dict()
        data["split_fractions"] = list(self.split_fractions)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"Unknown train keys: {sorted(unknown)}")
        kwargs = dict(data)
        if "temperature" in kwargs:
            temperature = kwargs["temperature"]
            if isinstance(temperature, (int, float)):
                kwargs["temperature"] = TemperatureSchedule.constant(float(temperature))
            else:
                bad = set(temperature) - {"start", "end", "hold_epochs", "decay_epochs"}
                if bad:
                    raise ConfigError(f"Unknown temperature keys: {sorted(bad)}")
                kwargs["temperature"] = TemperatureSchedule(**temperature)
        if "split_fractions" in kwargs:
            kwargs["split_fractions"] = tuple(kwargs["split_fractions"])
        if "strategy" in kwargs:
            try:
                kwargs["strategy"] = Strategy(kwargs["strategy"])
            except ValueError:
                raise ConfigError(f"Unknown strategy '{kwargs['strategy']}', expected one of "
                                  f"{[s.value for s in Strategy]}")
        return cls(**kwargs)


@dataclass
class TrainResult:
    """
    Trained model and log. Every phase restores its own best-validation parameters, so
    ``best_epoch`` and ``best_val_auc`` describe the last phase that ran: the returned
    model is the one logged at ``best_epoch``. Both are (last epoch, NaN) when that
    phase never produced a defined AUC.
    """

    feature_map: FeatureMap
    head: LinearHead
    log: ExperimentLog
    best_epoch: int
    best_val_auc: float
    test: Evaluation | None = None


class Trainer:
    """Runs one strategy on featurized train/val/test splits."""

    def __init__(self, config: TrainConfig, splits: Dict[str, LabeledSet]):
        self.config = config
        self.train_set = splits["train"]
        self.val_set = splits["val"]
        self.test_set = splits.get("test")

        empty = self.train_set.empty_cells()
        if empty:
            raise BatchError(f"training set has empty (class, domain) cells: {empty}")
        if not len(self.val_set):
            raise BatchError("validation set is empty")

        self.n_classes = self.train_set.n_classes
        n_cells = 2 * self.n_classes
        self.batch_size = math.ceil(config.batch_size / n_cells) * n_cells
        if self.batch_size != config.batch_size:
            logger.info(f"Batch size padded from {config.batch_size} to {self.batch_size} for balance")

        init_seq, sampler_seq, augment_seq, monitor_seq = np.random.SeedSequence(config.seed).spawn(4)
        init_rng = np.random.default_rng(init_seq)
        self.feature_map = FeatureMap.init(self.train_set.features.shape[1], config.hidden_dim,
                                           config.embedding_dim, init_rng)
        self.head = LinearHead.init(config.embedding_dim, self.n_classes, init_rng)

        self.sampler = BalancedBatchSampler(self.train_set.class_labels, self.train_set.domain_labels,
                                            self.batch_size, np.random.default_rng(sampler_seq),
                                            self.n_classes)
        self.augment_rng = np.random.default_rng(augment_seq)
        self.monitor = self._monitor_indices(np.random.default_rng(monitor_seq))

        self.log = ExperimentLog()
        self.epoch = 0

    def _monitor_indices(self, rng: np.random.Generator) -> np.ndarray:
        """A fixed balanced batch from the training set for the per-epoch decomposition."""
        per_cell = max(self.batch_size // (2 * self.n_classes), 2)
        parts = []
        for (c, d), indices in self.sampler.cells.items():
            parts.append(rng.choice(indices, size=per_cell, replace=len(indices) < per_cell))
        return np.concatenate(parts)

    def _inputs(self, indices: np.ndarray) -> np.ndarray:
        features = self.train_set.features[indices]
        if not self.config.augment:
            return features
        side = self.train_set.side
        pooled = np.vstack([
            augment(row[: side * side].reshape(side, side), self.augment_rng).ravel() for row in features
        ])
        # the histogram columns are invariant under flips and rotations
        return np.hstack([pooled, features[:, side * side:]])

    # -- steps -----------------------------------------------------------------

    def _contrastive_step(self, indices: np.ndarray, lr: float, tau: float) -> float:
        cache = self.feature_map.forward(self._inputs(indices))
        result = sup_contrastive(cache.z, tau, labels=self.train_set.class_labels[indices])
        grads = self.feature_map.backward(cache, result.grad_z)
        sgd_step(self.feature_map.parameters, grads, lr, self.config.weight_decay)
        return result.value

    def _head_step(self, indices: np.ndarray, lr: float, tau: float) -> float:
        z = self.feature_map.forward(self._inputs(indices)).z
        result = cross_entropy(self.head.logits(z), self.train_set.class_labels[indices])
        head_grads, _ = self.head.backward(z, result.grad_z)
        sgd_step(self.head.parameters, head_grads, lr, self.config.weight_decay)
        return result.value

    def _end_to_end_step(self, indices: np.ndarray, lr: float, tau: float) -> float:
        cache = self.feature_map.forward(self._inputs(indices))
        result = cross_entropy(self.head.logits(cache.z), self.train_set.class_labels[indices])
        head_grads, grad_z = self.head.backward(cache.z, result.grad_z)
        grads = self.feature_map.backward(cache, grad_z)
        sgd_step(self.head.parameters, head_grads, lr, self.config.weight_decay)
        sgd_step(self.feature_map.parameters, grads, lr, self.config.weight_decay)
        return result.value

    # -- validation and logging --------------------------------------------------

    def _centroid_logits(self, z: np.ndarray, tau: float) -> np.ndarray:
        """Cosine similarity to the training-class centroids, for phases without a head."""
        train_z = self.feature_map.forward(self.train_set.features).z
        centroids = np.vstack([
            train_z[self.train_set.class_labels == c].mean(axis=0) for c in range(self.n_classes)
        ])
        centroids /= np.maximum(np.linalg.norm(centroids, axis=1, keepdims=True), 1e-12)
        return z @ centroids.T / tau

    def _validate(self, phase: Phase, tau: float) -> Dict[str, float]:
        z = self.feature_map.forward(self.val_set.features).z
        if phase is Phase.CONTRASTIVE:
            logits = self._centroid_logits(z, tau)
        else:
            logits = self.head.logits(z)
        return classification_scores(self.val_set.class_labels, logits)

    def _monitor_terms(self, tau: float) -> Dict[str, float]:
        z = self.feature_map.forward(self.train_set.features[self.monitor]).z
        batch = EmbeddingBatch(z, self.train_set.class_labels[self.monitor],
                               self.train_set.domain_labels[self.monitor], self.n_classes)
        record = decompose(batch, tau)
        return {
            "scaled_loss": record.loss,
            "cmmd_sq": cmmd_sq(batch),
            "dcmmd_sq": dcmmd_sq(batch),
            "term_a": record.term_a,
            "term_b": record.term_b,
            "term_c": record.term_c,
            "residual": record.residual,
        }

    def _run_phase(self, phase: Phase, epochs: int, step: Callable[[np.ndarray, float, float], float],
                   tau_at: Callable[[int], float]) -> float:
        """
        Train for ``epochs`` epochs, keeping the parameters with the best validation OvO AUC.
        Epochs with an undefined (NaN) AUC never become the best.
        """
        best_auc = -np.inf
        best_state = None
        for local_epoch in range(epochs):
            lr = cosine_lr(local_epoch, self.config.base_lr, self.config.cosine_period)
            tau = tau_at(local_epoch)

            losses = []
            for indices in self.sampler:
                loss = step(indices, lr, tau)
                if not np.isfinite(loss):
                    raise TrainingDivergedError(
                        f"{phase.value} loss became {loss} at epoch {self.epoch} (lr={lr:g}, tau={tau:g})"
                    )
                losses.append(loss)

            scores = self._validate(phase, tau)
            row = {
                "epoch": self.epoch,
                "phase": phase.value,
                "lr": lr,
                "tau": tau,
                "train_loss": float(np.mean(losses)),
                "val_accuracy": scores["accuracy"],
                "val_ovo_auc": scores["ovo_auc"],
            }
            row.update(self._monitor_terms(tau))
            self.log.append(row)
            logger.debug(f"epoch {self.epoch} {phase.value}: loss={row['train_loss']:.4f} "
                         f"val_auc={scores['ovo_auc']:.4f} cmmd={row['cmmd_sq']:.4f}")

            if scores["ovo_auc"] > best_auc:
                best_auc = scores["ovo_auc"]
                best_state = (self.feature_map.copy(), self.head.copy(), self.epoch)
            self.epoch += 1

        if best_state is not None:
            self.feature_map, self.head, best_epoch = best_state
            logger.info(f"{phase.value}: best validation OvO AUC {best_auc:.4f} at epoch {best_epoch}")
            self._best = (best_epoch, float(best_auc))
        elif epochs:
            logger.warning(f"{phase.value}: validation OvO AUC undefined in every epoch; "
                           f"keeping the final parameters")
            self._best = (self.epoch - 1, float("nan"))
        return best_auc

    def run(self) -> TrainResult:
        config = self.config
        schedule = config.temperature
        self._best = (-1, float("nan"))

        if config.strategy is Strategy.CE:
            self._run_phase(Phase.CE, config.epochs, self._end_to_end_step, schedule)
        else:
            self._run_phase(Phase.CONTRASTIVE, config.epochs, self._contrastive_step, schedule)
            frozen_tau = schedule(max(config.epochs - 1, 0))
            self._run_phase(Phase.LCP, config.lcp_epochs, self._head_step, lambda _: frozen_tau)
            if config.strategy is Strategy.SUP_CONTR_CE:
                self._run_phase(Phase.FINETUNE, config.finetune_epochs, self._end_to_end_step,
                                lambda _: frozen_tau)

        test = None
        if self.test_set is not None and len(self.test_set):
            test = evaluate(self.feature_map, self.head, self.test_set)
            logger.info(f"{config.strategy.value} test: accuracy={test.accuracy:.3f} "
                        f"ovo_auc={test.ovo_auc:.3f} cmmd_sq={test.cmmd_sq:.4f} dcmmd_sq={test.dcmmd_sq:.4f}")

        best_epoch, best_auc = self._best
        return TrainResult(self.feature_map, self.head, self.log, best_epoch, best_auc, test)


def splits_for(config: TrainConfig, dataset_dir: str | Path) -> Dict[str, LabeledSet]:
    """Featurize a dataset directory the way ``config`` expects its inputs."""
    return load_splits(dataset_dir, config.target_side, config.split_fractions, config.seed,
                       config.histogram_bins)


def train(config: TrainConfig, dataset: Dict[str, LabeledSet] | str | Path) -> TrainResult:
    """Train one strategy on pre-split data or on a generated dataset directory."""
    if isinstance(dataset, (str, Path)):
        dataset = splits_for(config, dataset)
    return Trainer(config, dataset).run()
