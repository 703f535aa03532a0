"""
Term-by-term evaluation of the contrastive-loss / CMMD decomposition, the IMMD-HSIC
bound and the derivative correlations used to compare training curves.
"""
import logging
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Dict, Iterable, Sequence

import numpy as np
from scipy.optimize import bisect
from scipy.stats import pearsonr

from ctda.discrepancy import alpha_ratio, cmmd_sq_expectation_form, hsic, immd_sq
from ctda.errors import BatchError, EstimatorUndefinedError
from ctda.kernels import EmbeddingBatch, gram
from ctda.losses import LossKind, contrastive_loss

logger = logging.getLogger(__name__)


class Term(str, Enum):
    CMMD = "cmmd_sq"
    A = "term_a"
    B = "term_b"
    C = "term_c"


@dataclass
class DecompositionRecord:
    """
    One evaluation of

        tau * loss = CMMD^2 / 4 + A - B / 2 + C / (2 tau) + tau * log(|B| - 1) + residual

    ``loss`` holds the tau-scaled loss and ``log_const`` the tau-scaled constant.
    """

    tau: float
    loss: float
    cmmd_quarter: float
    term_a: float
    term_b: float
    term_c: float
    log_const: float
    residual: float

    @property
    def rhs(self) -> float:
        return self.cmmd_quarter + self.term_a - self.term_b / 2.0 + self.term_c / (2.0 * self.tau) + self.log_const

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)


@dataclass(frozen=True)
class GammaConstant:
    k_max: float
    gamma: float

    @property
    def target(self) -> float:
        return max(2.0, 2.0 * self.k_max)

    @property
    def residual(self) -> float:
        return _gamma_equation(self.gamma, self.target)


@dataclass
class BoundCheck:
    lhs: float
    rhs: float
    slack: float
    var_allowance: float
    satisfied_with_slack: bool


def _off_diagonal_rows(k: np.ndarray) -> np.ndarray:
    """Row i holds k(i, l) for every l != i."""
    n = k.shape[0]
    mask = ~np.eye(n, dtype=bool)
    return k[mask].reshape(n, n - 1)


def _within_cell_mean(k: np.ndarray, indices: np.ndarray) -> float:
    block = k[np.ix_(indices, indices)]
    n = len(indices)
    return float((block.sum() - np.trace(block)) / (n * (n - 1)))


def decompose(batch: EmbeddingBatch, tau: float,
              loss_kind: LossKind | str = LossKind.SUP_CONTRASTIVE) -> DecompositionRecord:
    """
    Split the tau-scaled contrastive loss on a balanced batch into its CMMD, A, B, C and
    constant terms. All kernel means exclude self-pairs; the residual is whatever the
    second-order expansion in 1/tau leaves over.
    """
    if not batch.is_balanced():
        raise BatchError(f"decomposition needs a batch balanced over (class, domain) cells, "
                         f"got {batch.cell_counts()}")
    counts = batch.cell_counts()
    if min(v for v in counts.values() if v) < 2:
        raise BatchError("decomposition needs at least two samples per (class, domain) cell")

    n = batch.size
    k = gram(batch).k
    rows = _off_diagonal_rows(k)

    term_a = float(rows.mean())
    term_c = float(rows.var(axis=1).mean())

    priors = batch.class_priors()
    term_b = 0.0
    for c in batch.present_classes():
        term_b += priors[c] * (
            _within_cell_mean(k, batch.cell_indices(c, 0)) + _within_cell_mean(k, batch.cell_indices(c, 1))
        )

    cmmd_quarter = cmmd_sq_expectation_form(batch, exclude_self_pairs=True) / 4.0
    log_const = tau * float(np.log(n - 1))
    loss = tau * contrastive_loss(loss_kind, batch, tau).value

    record = DecompositionRecord(
        tau=float(tau),
        loss=loss,
        cmmd_quarter=cmmd_quarter,
        term_a=term_a,
        term_b=float(term_b),
        term_c=term_c,
        log_const=log_const,
        residual=0.0,
    )
    record.residual = loss - record.rhs
    return record


def _gamma_equation(gamma: float, target: float) -> float:
    return (1.0 + np.sqrt(1.0 - 4.0 * gamma)) / (2.0 * gamma) - target


def solve_gamma(k_max: float) -> GammaConstant:
    """Solve (1 + sqrt(1 - 4 gamma)) / (2 gamma) = max(2, 2 k_max) for gamma in (0, 1/4]."""
    if not k_max > 0:
        raise ValueError(f"k_max must be positive, got {k_max}")
    target = max(2.0, 2.0 * k_max)

    upper = 0.25
    if _gamma_equation(upper, target) == 0.0:
        return GammaConstant(k_max=float(k_max), gamma=upper)

    lower = 1e-12
    if _gamma_equation(lower, target) * _gamma_equation(upper, target) > 0:
        raise EstimatorUndefinedError(f"no gamma in (0, 1/4] for k_max={k_max}")

    gamma = bisect(_gamma_equation, lower, upper, args=(target,), xtol=1e-15, maxiter=200)
    return GammaConstant(k_max=float(k_max), gamma=float(gamma))


def lemma2_bound_check(batch: EmbeddingBatch, tau: float,
                       loss_kind: LossKind | str = LossKind.SUP_CONTRASTIVE,
                       alpha_hat: float | None = None,
                       gamma: float | None = None) -> BoundCheck:
    """
    Check -IMMD^2 / alpha + gamma * HSIC(X, X) <= loss. The variance of the off-diagonal
    kernel values is reported as the allowance for the neglected variance term.
    """
    if alpha_hat is None:
        alpha_hat = alpha_ratio(batch)
    if not alpha_hat > 0:
        raise ValueError(f"alpha_hat must be positive, got {alpha_hat}")
    if gamma is None:
        gamma = solve_gamma(1.0).gamma

    K = gram(batch)
    lhs = -immd_sq(batch) / alpha_hat + gamma * hsic(K, K)
    rhs = contrastive_loss(loss_kind, batch, tau).value
    slack = rhs - lhs
    allowance = float(K.off_diagonal().var())
    return BoundCheck(
        lhs=float(lhs),
        rhs=float(rhs),
        slack=float(slack),
        var_allowance=allowance,
        satisfied_with_slack=bool(slack + allowance >= 0.0),
    )


def pearson_of_differences(series, reference) -> float:
    """Pearson correlation between the first differences of two equally long series."""
    a = np.diff(np.asarray(series, dtype=np.float64))
    b = np.diff(np.asarray(reference, dtype=np.float64))
    if len(a) != len(b):
        raise ValueError("series must have the same length")
    if len(a) < 2:
        raise ValueError("need at least 3 steps to correlate first differences")
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        raise EstimatorUndefinedError("zero-variance difference series")
    return float(pearsonr(a, b)[0])


def derivative_correlation(log, term: Term | str, tau: float | None = None) -> float:
    """
    Correlation between step-to-step changes of a decomposition term and of the
    tau-scaled loss in an experiment log. With ``tau`` given, only rows logged at that
    temperature are used.
    """
    frame = getattr(log, "frame", log)
    if tau is not None:
        frame = frame[np.isclose(frame["tau"], tau)]
    term = Term(term)
    return pearson_of_differences(frame[term.value].to_numpy(), frame["scaled_loss"].to_numpy())


def tau_grid(low: float = 0.01, high: float = 5.0, n: int = 10) -> np.ndarray:
    if not 0 < low <= high or n < 1:
        raise ValueError(f"invalid temperature grid ({low}, {high}, {n})")
    return np.geomspace(low, high, n)


def residual_sweep(batches: Iterable[EmbeddingBatch], taus: Sequence[float],
                   loss_kind: LossKind | str = LossKind.SUP_CONTRASTIVE) -> Dict[float, float]:
    """Mean absolute decomposition residual per temperature over a fixed set of batches."""
    batches = list(batches)
    out = {}
    for tau in taus:
        residuals = [abs(decompose(batch, tau, loss_kind).residual) for batch in batches]
        out[float(tau)] = float(np.mean(residuals))
        logger.debug(f"tau={tau:g} mean |residual|={out[float(tau)]:.3e}")
    return out
