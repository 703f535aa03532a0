import struct

import numpy as np
import pytest

from ctda.errors import DatasetIOError
from ctda.trainer.checkpoint import HEADER_BYTES, MAGIC, checkpoint_bytes, load_checkpoint, save_checkpoint
from ctda.trainer.model import FeatureMap, LinearHead


@pytest.fixture
def model(rng):
    feature_map = FeatureMap.init(6, 5, 4, rng)
    feature_map.b1[:] = rng.standard_normal(5)
    head = LinearHead.init(4, 3, rng)
    return feature_map, head


def test_header_layout(model):
    feature_map, head = model
    data = checkpoint_bytes(feature_map, head)
    assert data[:4] == MAGIC
    assert struct.unpack("<5I", data[4:HEADER_BYTES]) == (1, 6, 5, 4, 3)
    n_params = feature_map.n_parameters + head.weight.size + head.bias.size
    assert len(data) == HEADER_BYTES + 8 * n_params
    assert struct.unpack("<d", data[HEADER_BYTES:HEADER_BYTES + 8])[0] == feature_map.W1[0, 0]


def test_save_and_load(tmp_path, model):
    feature_map, head = model
    path = save_checkpoint(tmp_path / "model.ckpt", feature_map, head)
    loaded_map, loaded_head = load_checkpoint(path)
    for name, param in feature_map.parameters.items():
        assert np.array_equal(loaded_map.parameters[name], param)
    assert np.array_equal(loaded_head.weight, head.weight)
    assert np.array_equal(loaded_head.bias, head.bias)


def test_corrupt_checkpoints(tmp_path, model):
    data = checkpoint_bytes(*model)

    bad_magic = tmp_path / "magic.ckpt"
    bad_magic.write_bytes(b"XXXX" + data[4:])
    with pytest.raises(DatasetIOError):
        load_checkpoint(bad_magic)

    truncated = tmp_path / "short.ckpt"
    truncated.write_bytes(data[:-8])
    with pytest.raises(DatasetIOError):
        load_checkpoint(truncated)

    with pytest.raises(DatasetIOError):
        load_checkpoint(tmp_path / "missing.ckpt")
