"""
Embedding batches, the linear kernel and the two-valued label kernel.
"""
from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from ctda.errors import BatchError, EstimatorUndefinedError

NORM_TOLERANCE = 1e-6


@dataclass(frozen=True)
class EmbeddingBatch:
    """
    Unit-norm embeddings with class and domain labels.

    Attributes:
        z: n x m matrix, one embedding per row.
        class_labels: length-n integer labels in [0, n_classes).
        domain_labels: length-n domain bits (0 or 1).
        n_classes: number of classes K; defaults to max label + 1.
    """

    z: np.ndarray
    class_labels: np.ndarray
    domain_labels: np.ndarray
    n_classes: int = 0

    def __post_init__(self):
        z = np.asarray(self.z, dtype=np.float64)
        classes = np.asarray(self.class_labels, dtype=np.int64)
        domains = np.asarray(self.domain_labels, dtype=np.int64)

        if z.ndim != 2:
            raise BatchError(f"embeddings must be a 2-D matrix, got shape {z.shape}")
        n = z.shape[0]
        if n < 2:
            raise BatchError(f"a batch needs at least 2 samples, got {n}")
        if classes.shape != (n,) or domains.shape != (n,):
            raise BatchError("label arrays must have one entry per embedding")
        if classes.min() < 0:
            raise BatchError("class labels must be non-negative")
        if not np.isin(domains, (0, 1)).all():
            raise BatchError("domain labels must be 0 or 1")

        norms = np.linalg.norm(z, axis=1)
        worst = np.abs(norms - 1.0).max()
        if worst > NORM_TOLERANCE:
            raise BatchError(f"embedding rows must have unit norm (max deviation {worst:.3g})")

        n_classes = self.n_classes or int(classes.max()) + 1
        if classes.max() >= n_classes:
            raise BatchError(f"class label {classes.max()} out of range for {n_classes} classes")

        object.__setattr__(self, "z", z)
        object.__setattr__(self, "class_labels", classes)
        object.__setattr__(self, "domain_labels", domains)
        object.__setattr__(self, "n_classes", n_classes)

    @classmethod
    def from_arrays(cls, z, class_labels, domain_labels=None, n_classes: int = 0,
                    normalize: bool = False) -> "EmbeddingBatch":
        """Build a batch, optionally projecting rows onto the unit sphere first."""
        z = np.asarray(z, dtype=np.float64)
        if normalize:
            z = z / np.maximum(np.linalg.norm(z, axis=1, keepdims=True), 1e-12)
        if domain_labels is None:
            domain_labels = np.zeros(len(z), dtype=np.int64)
        return cls(z, class_labels, domain_labels, n_classes)

    @property
    def size(self) -> int:
        return self.z.shape[0]

    @property
    def dim(self) -> int:
        return self.z.shape[1]

    def subset(self, indices) -> "EmbeddingBatch":
        indices = np.asarray(indices)
        return EmbeddingBatch(self.z[indices], self.class_labels[indices],
                              self.domain_labels[indices], self.n_classes)

    def swap_domains(self) -> "EmbeddingBatch":
        return EmbeddingBatch(self.z, self.class_labels, 1 - self.domain_labels, self.n_classes)

    def present_classes(self) -> np.ndarray:
        return np.unique(self.class_labels)

    def cell_indices(self, class_label: int, domain: int | None = None) -> np.ndarray:
        mask = self.class_labels == class_label
        if domain is not None:
            mask &= self.domain_labels == domain
        return np.flatnonzero(mask)

    def cell_counts(self) -> Dict[Tuple[int, int], int]:
        return {
            (c, d): int(np.sum((self.class_labels == c) & (self.domain_labels == d)))
            for c in range(self.n_classes)
            for d in (0, 1)
        }

    def cell_mean(self, class_label: int, domain: int | None = None) -> np.ndarray:
        indices = self.cell_indices(class_label, domain)
        if not len(indices):
            where = f"class {class_label}" + ("" if domain is None else f", domain {domain}")
            raise EstimatorUndefinedError(f"empty cell ({where})")
        return self.z[indices].mean(axis=0)

    def class_priors(self, uniform: bool = False) -> np.ndarray:
        """Empirical class priors n_c / n over the present classes, or uniform ones."""
        counts = np.bincount(self.class_labels, minlength=self.n_classes).astype(np.float64)
        if uniform:
            present = counts > 0
            return present / present.sum()
        return counts / counts.sum()

    def domain_fraction(self) -> float:
        """Fraction p of samples in domain 1."""
        return float(self.domain_labels.mean())

    def is_balanced(self) -> bool:
        """True when every (class, domain) cell of the present classes has the same count."""
        counts = [
            int(np.sum((self.class_labels == c) & (self.domain_labels == d)))
            for c in self.present_classes()
            for d in (0, 1)
        ]
        return counts[0] > 0 and len(set(counts)) == 1


@dataclass(frozen=True)
class GramMatrix:
    k: np.ndarray

    @property
    def size(self) -> int:
        return self.k.shape[0]

    def off_diagonal(self) -> np.ndarray:
        mask = ~np.eye(self.size, dtype=bool)
        return self.k[mask]


@dataclass(frozen=True)
class LabelKernel:
    """l(y, y') = delta_l * 1{y = y'} + l0."""

    delta_l: float
    l0: float = 0.0


def gram(batch: EmbeddingBatch) -> GramMatrix:
    """Linear-kernel Gram matrix, symmetric by construction."""
    k = batch.z @ batch.z.T
    upper = np.triu(k)
    k = upper + np.triu(k, 1).T
    return GramMatrix(k)


def one_hot(labels, n_classes: int | None = None) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.int64)
    n_classes = n_classes or int(labels.max()) + 1
    out = np.zeros((len(labels), n_classes))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def label_gram(labels, kernel: LabelKernel) -> np.ndarray:
    labels = np.asarray(labels)
    same = labels[:, None] == labels[None, :]
    return kernel.delta_l * same.astype(np.float64) + kernel.l0
