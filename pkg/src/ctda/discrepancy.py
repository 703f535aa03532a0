"""
Empirical CMMD, DCMMD, IMMD and HSIC estimators on labeled, domain-tagged embeddings.

The mean-embedding estimators are plug-in (V-statistic) forms. Kernel-mean forms with
self-pairs excluded are available where they are needed to line up with the
contrastive losses, which never compare a sample with itself.
"""
from dataclasses import dataclass, field
from typing import Callable, Dict

import numpy as np

from ctda.errors import EstimatorUndefinedError
from ctda.kernels import EmbeddingBatch, GramMatrix, LabelKernel, gram, label_gram


PairStatistic = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass
class DiscrepancyReport:
    cmmd_sq: float
    dcmmd_sq: float
    immd_sq: float
    hsic_xy: float
    hsic_xx: float
    class_priors: np.ndarray = field(repr=False)
    mixture_p: float = 0.5

    def to_dict(self) -> Dict[str, float]:
        return {
            "cmmd_sq": self.cmmd_sq,
            "dcmmd_sq": self.dcmmd_sq,
            "immd_sq": self.immd_sq,
            "hsic_xy": self.hsic_xy,
            "hsic_xx": self.hsic_xx,
        }


def _priors(batch: EmbeddingBatch, uniform: bool) -> Dict[int, float]:
    priors = batch.class_priors(uniform=uniform)
    return {int(c): float(priors[c]) for c in batch.present_classes()}


def cmmd_sq(batch: EmbeddingBatch, uniform_priors: bool = False) -> float:
    """Class-weighted squared distance between the per-domain class means."""
    total = 0.0
    for c, prior in _priors(batch, uniform_priors).items():
        diff = batch.cell_mean(c, 0) - batch.cell_mean(c, 1)
        total += prior * float(diff @ diff)
    return total


def _within_mean(k: np.ndarray, exclude_self_pairs: bool) -> float:
    n = k.shape[0]
    if not exclude_self_pairs:
        return float(k.mean())
    if n < 2:
        raise EstimatorUndefinedError("a cell needs two samples once self-pairs are excluded")
    return float((k.sum() - np.trace(k)) / (n * (n - 1)))


def _mixture_mean(k: np.ndarray, domains: np.ndarray, exclude_self_pairs: bool) -> float:
    """Kernel mean under the equal-weight mixture of the two domain cells of a class."""
    counts = np.bincount(domains, minlength=2).astype(np.float64)
    w = 1.0 / (2.0 * counts[domains])
    pair_w = np.outer(w, w)
    if exclude_self_pairs:
        np.fill_diagonal(pair_w, 0.0)
    return float(np.sum(pair_w * k) / pair_w.sum())


def cmmd_sq_expectation_form(batch: EmbeddingBatch, exclude_self_pairs: bool = False,
                             uniform_priors: bool = False) -> float:
    """
    CMMD^2 written with kernel means: per class, 2 (E_0[k] + E_1[k]) - 4 E_mix[k], where
    E_d averages over pairs inside domain cell d and E_mix over pairs drawn from the
    p = 1/2 mixture of both cells.

    With self-pairs included this equals ``cmmd_sq`` exactly. With self-pairs excluded it
    is the form that appears when a contrastive loss is expanded over a balanced batch.
    """
    k = gram(batch).k
    total = 0.0
    for c, prior in _priors(batch, uniform_priors).items():
        idx = batch.cell_indices(c)
        raw, lut = batch.cell_indices(c, 0), batch.cell_indices(c, 1)
        if not len(raw) or not len(lut):
            raise EstimatorUndefinedError(f"class {c} is missing a domain")

        within = _within_mean(k[np.ix_(raw, raw)], exclude_self_pairs) + _within_mean(
            k[np.ix_(lut, lut)], exclude_self_pairs
        )
        mixture = _mixture_mean(k[np.ix_(idx, idx)], batch.domain_labels[idx], exclude_self_pairs)
        total += prior * (2.0 * within - 4.0 * mixture)
    return total


def dcmmd_sq(batch: EmbeddingBatch, uniform_priors: bool = False) -> float:
    """
    Different-class discrepancy: ordered class pairs c1 != c2 weighted by
    pi(c1) pi(c2) / (1 - sum_c pi(c)^2), averaged uniformly over the four domain
    combinations of ||mean(D2, c1) - mean(D1, c2)||^2.
    """
    priors = _priors(batch, uniform_priors)
    if len(priors) < 2:
        raise EstimatorUndefinedError("DCMMD needs at least two classes")

    means = {(c, d): batch.cell_mean(c, d) for c in priors for d in (0, 1)}
    norm = 1.0 - sum(p * p for p in priors.values())

    total = 0.0
    for c1, p1 in priors.items():
        for c2, p2 in priors.items():
            if c1 == c2:
                continue
            pair = 0.0
            for d1 in (0, 1):
                for d2 in (0, 1):
                    diff = means[(c1, d2)] - means[(c2, d1)]
                    pair += float(diff @ diff)
            total += p1 * p2 / norm * pair / 4.0
    return total


def immd_sq(batch: EmbeddingBatch, uniform_priors: bool = False) -> float:
    """Inter-class discrepancy between class means pooled over both domains."""
    priors = _priors(batch, uniform_priors)
    means = {c: batch.cell_mean(c) for c in priors}

    total = 0.0
    for c1, p1 in priors.items():
        for c2, p2 in priors.items():
            if c1 != c2:
                diff = means[c1] - means[c2]
                total += p1 * p2 * float(diff @ diff)
    return total


def _as_matrix(value) -> np.ndarray:
    if isinstance(value, GramMatrix):
        return value.k
    return np.asarray(value, dtype=np.float64)


def hsic(K, L) -> float:
    """Biased HSIC estimate trace(K H L H) / (n - 1)^2 with centering H = I - 1/n."""
    K = _as_matrix(K)
    L = _as_matrix(L)
    if K.ndim != 2 or K.shape[0] != K.shape[1] or K.shape != L.shape:
        raise ValueError(f"HSIC needs two square matrices of equal size, got {K.shape} and {L.shape}")
    n = K.shape[0]
    if n < 2:
        raise ValueError("HSIC needs at least 2 samples")
    if not (np.allclose(K, K.T) and np.allclose(L, L.T)):
        raise ValueError("HSIC kernel matrices must be symmetric")

    H = np.eye(n) - np.full((n, n), 1.0 / n)
    return float(np.trace(K @ H @ L @ H) / (n - 1) ** 2)


def supervised_label_kernel(batch: EmbeddingBatch, delta_l: float | None = None) -> LabelKernel:
    return LabelKernel(delta_l=float(batch.n_classes if delta_l is None else delta_l), l0=0.0)


def hsic_closed_form(batch: EmbeddingBatch, delta_l: float | None = None) -> float:
    """
    (delta_l / K) (E_pos[k] - E[k]) with V-statistic means over same-label pairs and all
    pairs. On class-balanced batches HSIC equals this times n^2 / (n - 1)^2.
    """
    kernel = supervised_label_kernel(batch, delta_l)
    k = gram(batch).k
    same = batch.class_labels[:, None] == batch.class_labels[None, :]
    return kernel.delta_l / batch.n_classes * (float(k[same].mean()) - float(k.mean()))


def alpha_ratio(batch: EmbeddingBatch) -> float:
    """Empirical IMMD^2 / HSIC(X, Y) proportionality constant, with delta_l = K."""
    labels = label_gram(batch.class_labels, supervised_label_kernel(batch))
    dependence = hsic(gram(batch), labels)
    if abs(dependence) < 1e-15:
        raise EstimatorUndefinedError("HSIC(X, Y) vanishes; the IMMD/HSIC ratio is undefined")
    return immd_sq(batch) / dependence


def mixture_expectation_check(batch: EmbeddingBatch, g: PairStatistic) -> Dict[str, float]:
    """
    Compare E[g(X, X')] over pooled pairs with its domain decomposition
    p^2 E_11 + 2 p (1 - p) E_01 + (1 - p)^2 E_00 at p = n_1 / n.

    Both sides use all ordered pairs, self-pairs included, so they agree exactly.
    """
    z = batch.z
    values = np.asarray(g(z, z), dtype=np.float64)
    lhs = float(values.mean())

    p = batch.domain_fraction()
    raw = np.flatnonzero(batch.domain_labels == 0)
    lut = np.flatnonzero(batch.domain_labels == 1)

    rhs = 0.0
    if len(lut):
        rhs += p * p * float(values[np.ix_(lut, lut)].mean())
    if len(raw) and len(lut):
        rhs += 2.0 * p * (1.0 - p) * float(values[np.ix_(lut, raw)].mean())
    if len(raw):
        rhs += (1.0 - p) ** 2 * float(values[np.ix_(raw, raw)].mean())
    return {"lhs": lhs, "rhs": rhs, "p": p}


def discrepancy_report(batch: EmbeddingBatch, delta_l: float | None = None,
                       uniform_priors: bool = False) -> DiscrepancyReport:
    K = gram(batch)
    L = label_gram(batch.class_labels, supervised_label_kernel(batch, delta_l))
    return DiscrepancyReport(
        cmmd_sq=cmmd_sq(batch, uniform_priors),
        dcmmd_sq=dcmmd_sq(batch, uniform_priors),
        immd_sq=immd_sq(batch, uniform_priors),
        hsic_xy=hsic(K, L),
        hsic_xx=hsic(K, K),
        class_priors=batch.class_priors(uniform=uniform_priors),
    )
