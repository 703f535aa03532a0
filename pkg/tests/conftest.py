import json

import numpy as np
import pytest

from ctda.harness.verify import sample_balanced_batch
from ctda.synthgen import DatasetMode, GeneratorConfig, generate_dataset
from ctda.trainer.loop import Strategy, TrainConfig
from ctda.trainer.schedule import TemperatureSchedule

TINY_PATCHES = 48


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def balanced_batch(rng):
    """Two classes, four samples per (class, domain) cell, clustered by class."""
    return sample_balanced_batch(rng, n_classes=2, per_cell=4, dim=8, class_spread=0.5, domain_shift=0.3)


@pytest.fixture
def tiny_generator():
    return GeneratorConfig(
        patch_size=32,
        mass_radius_range=(2.0, 6.0),
        calc_count_range=(3, 6),
        calc_area_side_range=(4, 12),
        seed=7,
    )


@pytest.fixture
def tiny_dataset(tmp_path, tiny_generator):
    """Augmented mode, so every (class, domain) cell of every split is populated."""
    return generate_dataset(tiny_generator, TINY_PATCHES, DatasetMode.AUGMENTED, split_seed=3,
                            out_dir=tmp_path / "dataset")


@pytest.fixture
def tiny_train_config():
    return TrainConfig(
        strategy=Strategy.SUP_CONTR_LCP,
        epochs=3,
        lcp_epochs=2,
        finetune_epochs=2,
        base_lr=0.05,
        batch_size=12,
        temperature=TemperatureSchedule.constant(0.5),
        hidden_dim=16,
        embedding_dim=8,
        target_side=8,
        seed=11,
    )


@pytest.fixture
def experiment_file(tmp_path, tiny_generator, tiny_train_config):
    """A small experiment JSON whose outputs stay inside tmp_path."""
    data = {
        "generator": tiny_generator.to_dict(),
        "dataset": {"n_patches": TINY_PATCHES, "mode": "augmented", "split_seed": 3},
        "train": tiny_train_config.to_dict(),
        "sweep": {"tau_grid": [0.1, 0.5], "epochs": 4},
        "verify": {"trials": 20, "batch_per_cell": 8, "seed": 99},
        "outputs": str(tmp_path / "out"),
    }
    path = tmp_path / "experiment.json"
    path.write_text(json.dumps(data, indent=2))
    return path


@pytest.fixture(autouse=True)
def _no_output_override(monkeypatch):
    monkeypatch.delenv("CTDA_OUT", raising=False)
    monkeypatch.delenv("CTDA_CONFIG_DIR", raising=False)
    monkeypatch.delenv("CTDA_DEPLOY", raising=False)
