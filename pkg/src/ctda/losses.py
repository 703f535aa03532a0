"""
Contrastive and cross-entropy losses with analytic gradients.

Losses take the raw embedding matrix (or an EmbeddingBatch) and return the gradient
with respect to that matrix, treating rows as free vectors. The trainer composes it
with the Jacobian of the unit-norm head.
"""
from dataclasses import dataclass
from enum import Enum
from typing import Dict

import numpy as np
from scipy.special import logsumexp

from ctda.errors import BatchError
from ctda.kernels import EmbeddingBatch


class PositivePairing(str, Enum):
    AUGMENTATION_PAIRS = "augmentation_pairs"
    SAME_LABEL = "same_label"


class LossKind(str, Enum):
    SUP_CONTRASTIVE = "sup_contrastive"
    NT_XENT = "nt_xent"


@dataclass(frozen=True)
class ContrastiveConfig:
    temperature: float = 0.5
    positive_pairing: PositivePairing = PositivePairing.SAME_LABEL

    def __post_init__(self):
        _check_tau(self.temperature)


@dataclass
class LossResult:
    """Loss value and its gradient with respect to the loss input (embeddings or logits)."""

    value: float
    grad_z: np.ndarray


def _check_tau(tau: float) -> None:
    if not tau > 0:
        raise ValueError(f"temperature must be positive, got {tau}")


def _matrix(batch) -> np.ndarray:
    if isinstance(batch, EmbeddingBatch):
        return batch.z
    return np.asarray(batch, dtype=np.float64)


def _labels(batch, labels) -> np.ndarray:
    if labels is not None:
        return np.asarray(labels)
    if isinstance(batch, EmbeddingBatch):
        return batch.class_labels
    raise BatchError("class labels are required for a raw embedding matrix")


def _scaled_similarities(z: np.ndarray, tau: float) -> np.ndarray:
    s = (z @ z.T) / tau
    np.fill_diagonal(s, -np.inf)
    return s


def _contrastive(z: np.ndarray, targets: np.ndarray, tau: float) -> LossResult:
    """
    Shared core of both contrastive losses.

    ``targets`` is row-stochastic with a zero diagonal: row i spreads weight 1 over the
    positives of sample i. The loss is -mean_i sum_a targets[i, a] * log softmax_{a != i}(s_i).
    """
    n = z.shape[0]
    s = _scaled_similarities(z, tau)
    lse = logsumexp(s, axis=1)

    positive = targets > 0
    log_prob = np.where(positive, s - lse[:, None], 0.0)
    value = -float(np.sum(targets * log_prob)) / n

    softmax = np.exp(s - lse[:, None])
    g = (softmax - targets) / n
    grad = (g + g.T) @ z / tau
    return LossResult(value, grad)


def validate_pairing(pairing, n: int) -> np.ndarray:
    pairing = np.asarray(pairing, dtype=np.int64)
    if n % 2:
        raise BatchError(f"NT-Xent needs an even batch size, got {n}")
    if pairing.shape != (n,) or pairing.min() < 0 or pairing.max() >= n:
        raise BatchError("pairing must map every index into the batch")
    if np.any(pairing == np.arange(n)):
        raise BatchError("pairing has a fixed point")
    if np.any(pairing[pairing] != np.arange(n)):
        raise BatchError("pairing must be an involution")
    return pairing


def nt_xent(batch, pairing, tau: float) -> LossResult:
    """NT-Xent: each sample has exactly one positive, ``pairing[i]``."""
    _check_tau(tau)
    z = _matrix(batch)
    n = z.shape[0]
    pairing = validate_pairing(pairing, n)

    targets = np.zeros((n, n))
    targets[np.arange(n), pairing] = 1.0
    return _contrastive(z, targets, tau)


def positive_mask(labels) -> np.ndarray:
    labels = np.asarray(labels)
    mask = labels[:, None] == labels[None, :]
    np.fill_diagonal(mask, False)
    return mask


def sup_contrastive(batch, tau: float, labels=None) -> LossResult:
    """Supervised contrastive loss: the positives of i are all other samples with its label."""
    _check_tau(tau)
    z = _matrix(batch)
    mask = positive_mask(_labels(batch, labels))

    counts = mask.sum(axis=1)
    if np.any(counts == 0):
        lonely = np.flatnonzero(counts == 0).tolist()
        raise BatchError(f"samples {lonely} have no positive; every class needs two samples")

    return _contrastive(z, mask / counts[:, None], tau)


def cross_entropy(logits, labels) -> LossResult:
    """Mean softmax cross-entropy; the gradient is with respect to the logits."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n = logits.shape[0]

    lse = logsumexp(logits, axis=1)
    value = float(np.mean(lse - logits[np.arange(n), labels]))

    grad = np.exp(logits - lse[:, None])
    grad[np.arange(n), labels] -= 1.0
    return LossResult(value, grad / n)


def augmentation_pairing(batch: EmbeddingBatch) -> np.ndarray:
    """
    Pair the i-th sample of cell (c, domain 0) with the i-th sample of (c, domain 1).

    In an augmented batch those are the two intensity versions of the same patch.
    """
    pairing = np.full(batch.size, -1, dtype=np.int64)
    for c in batch.present_classes():
        raw = batch.cell_indices(c, 0)
        lut = batch.cell_indices(c, 1)
        if len(raw) != len(lut):
            raise BatchError(f"class {c} has {len(raw)} raw and {len(lut)} LUT samples; cannot pair")
        pairing[raw] = lut
        pairing[lut] = raw
    return pairing


def contrastive_loss(kind: LossKind | str, batch: EmbeddingBatch, tau: float) -> LossResult:
    kind = LossKind(kind)
    if kind is LossKind.NT_XENT:
        return nt_xent(batch, augmentation_pairing(batch), tau)
    return sup_contrastive(batch, tau)


def _positive_targets(kind: LossKind, batch: EmbeddingBatch) -> np.ndarray:
    if kind is LossKind.NT_XENT:
        mask = np.zeros((batch.size, batch.size), dtype=bool)
        mask[np.arange(batch.size), augmentation_pairing(batch)] = True
        return mask
    return positive_mask(batch.class_labels)


def empirical_expectation_form(batch: EmbeddingBatch, tau: float,
                               pairing: PositivePairing | str = PositivePairing.SAME_LABEL
                               ) -> Dict[str, float]:
    """
    Evaluate the loss next to its expectation rewriting

        E_X[log E_X'[exp(k/tau)]] - (1/tau) E_pos[k] + log(|B| - 1)

    with empirical means over distinct pairs. E_pos is the pooled mean over all positive
    pairs, so the two sides coincide when every sample has the same number of positives
    and drift apart on class-imbalanced batches.
    """
    _check_tau(tau)
    pairing = PositivePairing(pairing)
    kind = LossKind.NT_XENT if pairing is PositivePairing.AUGMENTATION_PAIRS else LossKind.SUP_CONTRASTIVE
    lhs = contrastive_loss(kind, batch, tau).value

    n = batch.size
    s = _scaled_similarities(batch.z, tau)
    log_mean_exp = logsumexp(s, axis=1) - np.log(n - 1)
    k = batch.z @ batch.z.T
    positives = _positive_targets(kind, batch)
    e_pos = float(k[positives].mean())

    rhs = float(log_mean_exp.mean()) - e_pos / tau + float(np.log(n - 1))
    return {"lhs": lhs, "rhs": rhs}


def augment(pixels: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Random flips and quarter-turn rotations of a square patch."""
    out = np.rot90(pixels, k=int(rng.integers(0, 4)))
    if rng.random() < 0.5:
        out = out[:, ::-1]
    if rng.random() < 0.5:
        out = out[::-1, :]
    return np.ascontiguousarray(out)
