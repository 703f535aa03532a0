"""
Binary model checkpoints.

Layout, all little-endian:

    magic      4 bytes   b"CTDA"
    version    uint32
    dims       4 x uint32   input, hidden, embedding, classes
    W1, b1, W2, b2, Wh, bh   float64 blocks, row-major
"""
from pathlib import Path
from typing import Tuple

import numpy as np

from ctda.errors import DatasetIOError
from ctda.trainer.model import FeatureMap, LinearHead

MAGIC = b"CTDA"
CHECKPOINT_VERSION = 1
HEADER_BYTES = 4 + 4 + 4 * 4


def checkpoint_bytes(feature_map: FeatureMap, head: LinearHead) -> bytes:
    dims = (feature_map.input_dim, feature_map.hidden_dim, feature_map.embedding_dim, head.n_classes)
    blocks = [feature_map.W1, feature_map.b1, feature_map.W2, feature_map.b2, head.weight, head.bias]
    header = MAGIC + np.array([CHECKPOINT_VERSION, *dims], dtype="<u4").tobytes()
    return header + b"".join(np.ascontiguousarray(b, dtype="<f8").tobytes() for b in blocks)


def save_checkpoint(path: str | Path, feature_map: FeatureMap, head: LinearHead) -> Path:
    path = Path(path)
    try:
        path.write_bytes(checkpoint_bytes(feature_map, head))
    except OSError as e:
        raise DatasetIOError(f"Cannot write checkpoint {path}: {e}")
    return path


def load_checkpoint(path: str | Path) -> Tuple[FeatureMap, LinearHead]:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise DatasetIOError(f"Cannot read checkpoint {path}: {e}")

    if len(data) < HEADER_BYTES or data[:4] != MAGIC:
        raise DatasetIOError(f"{path} is not a checkpoint")
    version, d_in, d_hidden, d_embed, n_classes = np.frombuffer(data[4:HEADER_BYTES], dtype="<u4").tolist()
    if version != CHECKPOINT_VERSION:
        raise DatasetIOError(f"Unsupported checkpoint version {version}")

    shapes = [(d_in, d_hidden), (d_hidden,), (d_hidden, d_embed), (d_embed,), (d_embed, n_classes), (n_classes,)]
    expected = HEADER_BYTES + 8 * sum(int(np.prod(s)) for s in shapes)
    if len(data) != expected:
        raise DatasetIOError(f"{path} has {len(data)} bytes, expected {expected}")

    blocks = []
    offset = HEADER_BYTES
    for shape in shapes:
        count = int(np.prod(shape))
        blocks.append(np.frombuffer(data, dtype="<f8", count=count, offset=offset).reshape(shape).astype(np.float64))
        offset += 8 * count

    W1, b1, W2, b2, Wh, bh = blocks
    return FeatureMap(W1, b1, W2, b2), LinearHead(Wh, bh)
