"""
Experiment configuration: one JSON document describing the generator, the dataset,
training, the temperature sweep, verification and where outputs go.
"""
import json
import logging
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Tuple

from ctda.config import Config
from ctda.errors import ConfigError
from ctda.synthgen import DatasetMode, GeneratorConfig
from ctda.theory import tau_grid
from ctda.trainer.loop import TrainConfig

logger = logging.getLogger(__name__)


def _strict_kwargs(cls, data: Dict[str, Any], section: str) -> Dict[str, Any]:
    if not isinstance(data, dict):
        raise ConfigError(f"'{section}' must be a JSON object")
    unknown = set(data) - {f.name for f in fields(cls)}
    if unknown:
        raise ConfigError(f"Unknown {section} keys: {sorted(unknown)}")
    return dict(data)


@dataclass(frozen=True)
class DatasetConfig:
    n_patches: int = 999
    mode: DatasetMode = DatasetMode.MIXED
    split_seed: int = 0

    def __post_init__(self):
        try:
            object.__setattr__(self, "mode", DatasetMode(self.mode))
        except ValueError:
            raise ConfigError(f"Invalid dataset mode '{self.mode}'")
        if self.n_patches <= 0 or self.n_patches % 3:
            raise ConfigError(f"n_patches must be a positive multiple of 3, got {self.n_patches}")


@dataclass(frozen=True)
class SweepConfig:
    tau_grid: Tuple[float, ...] = tuple(float(t) for t in tau_grid())
    epochs: int | None = None

    def __post_init__(self):
        grid = tuple(float(t) for t in self.tau_grid)
        if not grid:
            raise ConfigError("sweep.tau_grid must not be empty")
        if any(t <= 0 for t in grid):
            raise ConfigError(f"sweep temperatures must be positive, got {grid}")
        object.__setattr__(self, "tau_grid", grid)


@dataclass(frozen=True)
class VerifyConfig:
    trials: int = 100
    batch_per_cell: int = 8
    seed: int = 1234

    def __post_init__(self):
        if self.trials <= 0 or self.batch_per_cell < 2:
            raise ConfigError("verify needs trials > 0 and at least 2 samples per cell")


@dataclass(frozen=True)
class ExperimentConfig:
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    verify: VerifyConfig = field(default_factory=VerifyConfig)
    outputs: str | None = None

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ExperimentConfig":
        data = _strict_kwargs(cls, data, "experiment")
        kwargs: Dict[str, Any] = {}
        if "generator" in data:
            kwargs["generator"] = GeneratorConfig.from_dict(data["generator"])
        if "dataset" in data:
            kwargs["dataset"] = DatasetConfig(**_strict_kwargs(DatasetConfig, data["dataset"], "dataset"))
        if "train" in data:
            kwargs["train"] = TrainConfig.from_dict(data["train"])
        if "sweep" in data:
            sweep = _strict_kwargs(SweepConfig, data["sweep"], "sweep")
            if "tau_grid" in sweep:
                sweep["tau_grid"] = tuple(sweep["tau_grid"])
            kwargs["sweep"] = SweepConfig(**sweep)
        if "verify" in data:
            kwargs["verify"] = VerifyConfig(**_strict_kwargs(VerifyConfig, data["verify"], "verify"))
        if data.get("outputs") is not None:
            kwargs["outputs"] = str(data["outputs"])
        try:
            return cls(**kwargs)
        except TypeError as e:
            raise ConfigError(f"Invalid experiment configuration: {e}")

    @classmethod
    def load(cls, path: str | Path | None) -> "ExperimentConfig":
        if path is None:
            return cls()
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except FileNotFoundError:
            raise ConfigError(f"Experiment config {path} not found")
        except json.JSONDecodeError as e:
            raise ConfigError(f"Experiment config {path} is not valid JSON: {e}")
        logger.debug(f"Loaded experiment config {path}")
        return cls.from_dict(data)

    def with_seed(self, seed: int | None) -> "ExperimentConfig":
        if seed is None:
            return self
        return replace(self, generator=replace(self.generator, seed=seed), train=self.train.with_seed(seed),
                       verify=replace(self.verify, seed=seed))

    def with_mode(self, mode: str | None) -> "ExperimentConfig":
        if mode is None:
            return self
        return replace(self, dataset=replace(self.dataset, mode=mode))

    def output_root(self, env: Config | None = None) -> Path:
        """CTDA_OUT from the process environment, else ``outputs``, else the dotenv CTDA_OUT."""
        if os.getenv("CTDA_OUT"):
            return Path(os.environ["CTDA_OUT"])
        if self.outputs:
            return Path(self.outputs)
        return (env or Config.load()).out_root

    def to_dict(self) -> Dict[str, Any]:
        return {
            "generator": self.generator.to_dict(),
            "dataset": {"n_patches": self.dataset.n_patches, "mode": self.dataset.mode.value,
                        "split_seed": self.dataset.split_seed},
            "train": self.train.to_dict(),
            "sweep": {"tau_grid": list(self.sweep.tau_grid), "epochs": self.sweep.epochs},
            "verify": {"trials": self.verify.trials, "batch_per_cell": self.verify.batch_per_cell,
                       "seed": self.verify.seed},
            "outputs": self.outputs,
        }


@dataclass(frozen=True)
class OutputLayout:
    root: Path

    @property
    def dataset(self) -> Path:
        return self.root / "dataset"

    @property
    def runs(self) -> Path:
        return self.root / "runs"

    @property
    def sweep(self) -> Path:
        return self.root / "sweep"

    @property
    def reports(self) -> Path:
        return self.root / "reports"

    @property
    def verify_report(self) -> Path:
        return self.root / "verify.json"

    def run_dirs(self) -> List[Path]:
        if not self.runs.is_dir():
            return []
        return sorted(p for p in self.runs.iterdir() if (p / "log.csv").exists())
