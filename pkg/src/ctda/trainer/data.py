"""
Input pipeline: pooled, standardized patch features and case-level dataset splits.

A feature row is the flattened pooled image, optionally followed by a log-count
intensity histogram of the full-resolution patch. Block pooling averages a
calcification dot into its surroundings; the histogram keeps the count of bright
pixels whatever their position.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np

from ctda.errors import ConfigError, DatasetIOError
from ctda.synthgen import (CLASSES, Domain, PatchClass, dequantize, load_dataset, quantize,
                           read_png, regenerate)

logger = logging.getLogger(__name__)

SPLITS = ("train", "val", "test")
VARIANCE_FLOOR = 1e-8


def block_pool(pixels: np.ndarray, target_side: int) -> np.ndarray:
    """Average non-overlapping blocks down to target_side x target_side."""
    height, width = pixels.shape
    if target_side <= 0 or height % target_side or width % target_side:
        raise ValueError(f"target side {target_side} does not divide patch shape {pixels.shape}")
    bh, bw = height // target_side, width // target_side
    return pixels.reshape(target_side, bh, target_side, bw).mean(axis=(1, 3))


def standardize(values: np.ndarray) -> np.ndarray:
    """Zero mean, unit variance; near-constant inputs map to zeros."""
    centered = values - values.mean()
    var = centered.var()
    if var < VARIANCE_FLOOR:
        return np.zeros_like(centered)
    return centered / np.sqrt(var)


def featurize(pixels, target_side: int = 16) -> np.ndarray:
    """Block-mean pool a patch, flatten it and standardize per image."""
    pixels = getattr(pixels, "pixels", pixels)
    return standardize(block_pool(np.asarray(pixels, dtype=np.float64), target_side)).ravel()


def intensity_histogram(pixels, bins: int) -> np.ndarray:
    """log(1 + count) of the pixels in ``bins`` equal-width intensity bins over [0, 1]."""
    if bins <= 0:
        raise ValueError(f"histogram needs a positive number of bins, got {bins}")
    pixels = np.asarray(getattr(pixels, "pixels", pixels), dtype=np.float64)
    counts, _ = np.histogram(np.clip(pixels, 0.0, 1.0), bins=bins, range=(0.0, 1.0))
    return np.log1p(counts.astype(np.float64))


def patch_features(pixels, target_side: int = 16, histogram_bins: int = 0) -> np.ndarray:
    """``featurize`` output, followed by the intensity histogram when ``histogram_bins`` > 0."""
    pooled = featurize(pixels, target_side)
    if not histogram_bins:
        return pooled
    return np.concatenate([pooled, intensity_histogram(pixels, histogram_bins)])


@dataclass
class LabeledSet:
    """
    Featurized patches with labels; ``cases`` holds the base-patch index of each row.

    The first ``side ** 2`` feature columns are the pooled image, the remaining
    ``histogram_bins`` columns the intensity histogram.
    """

    features: np.ndarray
    class_labels: np.ndarray
    domain_labels: np.ndarray
    cases: np.ndarray
    n_classes: int = len(CLASSES)
    histogram_bins: int = 0

    def __len__(self) -> int:
        return len(self.class_labels)

    @property
    def side(self) -> int:
        return int(round(np.sqrt(max(self.features.shape[1] - self.histogram_bins, 0))))

    def subset(self, indices) -> "LabeledSet":
        indices = np.asarray(indices, dtype=np.int64)
        return LabeledSet(self.features[indices], self.class_labels[indices],
                          self.domain_labels[indices], self.cases[indices], self.n_classes,
                          self.histogram_bins)

    def cell_counts(self) -> Dict[Tuple[int, int], int]:
        return {
            (c, d): int(np.sum((self.class_labels == c) & (self.domain_labels == d)))
            for c in range(self.n_classes)
            for d in (0, 1)
        }

    def empty_cells(self) -> List[Tuple[int, int]]:
        return [cell for cell, count in self.cell_counts().items() if count == 0]


def split_cases(records: Sequence[Dict[str, Any]],
                fractions: Tuple[float, float, float] = (0.7, 0.15, 0.15),
                seed: int = 0) -> Dict[str, np.ndarray]:
    """
    Assign base patches (cases) to train/val/test, stratified by class, so both domain
    versions of a case always land in the same split.
    """
    if len(fractions) != 3 or any(f < 0 for f in fractions) or not np.isclose(sum(fractions), 1.0):
        raise ConfigError(f"split fractions must be three non-negative numbers summing to 1, got {fractions}")

    case_class: Dict[int, str] = {}
    for record in records:
        case_class[int(record["index"])] = record["class"]

    rng = np.random.default_rng(seed)
    out: Dict[str, List[int]] = {name: [] for name in SPLITS}
    for patch_class in CLASSES:
        cases = np.array(sorted(i for i, c in case_class.items() if c == patch_class.value), dtype=np.int64)
        rng.shuffle(cases)
        n_train = int(round(fractions[0] * len(cases)))
        n_val = int(round(fractions[1] * len(cases)))
        out["train"].extend(cases[:n_train].tolist())
        out["val"].extend(cases[n_train:n_train + n_val].tolist())
        out["test"].extend(cases[n_train + n_val:].tolist())

    return {name: np.array(sorted(ids), dtype=np.int64) for name, ids in out.items()}


def _build_set(rows: List[Tuple[np.ndarray, int, int, int]], histogram_bins: int = 0) -> LabeledSet:
    if not rows:
        return LabeledSet(np.zeros((0, 0)), np.zeros(0, dtype=np.int64),
                          np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64),
                          histogram_bins=histogram_bins)
    features, classes, domains, cases = zip(*rows)
    return LabeledSet(
        features=np.vstack(features),
        class_labels=np.array(classes, dtype=np.int64),
        domain_labels=np.array(domains, dtype=np.int64),
        cases=np.array(cases, dtype=np.int64),
        histogram_bins=histogram_bins,
    )


def load_splits(dataset_dir: str | Path, target_side: int = 16,
                fractions: Tuple[float, float, float] = (0.7, 0.15, 0.15),
                seed: int = 0, histogram_bins: int = 0) -> Dict[str, LabeledSet]:
    """
    Featurize a generated dataset into train/val/test sets.

    Train and validation use the records as written. The test set holds both domain
    versions of every test case; versions missing from a mixed dataset are regenerated
    from their seed.
    """
    dataset_dir = Path(dataset_dir)
    generator, records = load_dataset(dataset_dir)
    case_splits = split_cases(records, fractions, seed)
    membership = {int(case): name for name, cases in case_splits.items() for case in cases}

    rows: Dict[str, List[Tuple[np.ndarray, int, int, int]]] = {name: [] for name in SPLITS}
    test_seen: Dict[int, Dict[str, Any]] = {}
    test_domains: Dict[int, set] = {}

    for record in records:
        case = int(record["index"])
        split = membership[case]
        path = dataset_dir / record["file"]
        if not path.exists():
            raise DatasetIOError(f"Missing patch image {path}")
        pixels = read_png(path)
        features = patch_features(pixels, target_side, histogram_bins)
        rows[split].append((features, PatchClass(record["class"]).index, Domain(record["domain"]).bit, case))
        if split == "test":
            test_seen[case] = record
            test_domains.setdefault(case, set()).add(record["domain"])

    regenerated = 0
    for case, record in sorted(test_seen.items()):
        for domain in Domain:
            if domain.value in test_domains[case]:
                continue
            patch = regenerate(dict(record, domain=domain.value), generator)
            pixels = dequantize(quantize(patch.pixels))
            features = patch_features(pixels, target_side, histogram_bins)
            rows["test"].append((features, PatchClass(record["class"]).index, domain.bit, case))
            regenerated += 1

    splits = {name: _build_set(rows[name], histogram_bins) for name in SPLITS}
    logger.info(f"Loaded {dataset_dir}: " + ", ".join(f"{name}={len(s)}" for name, s in splits.items())
                + f" ({regenerated} test versions regenerated)")
    return splits
