import math

import numpy as np
import pandas as pd
import pytest

from ctda.errors import BatchError, EstimatorUndefinedError
from ctda.harness.verify import brute_decomposition_terms, sample_balanced_batch
from ctda.kernels import EmbeddingBatch
from ctda.losses import LossKind, sup_contrastive
from ctda.theory import (Term, decompose, derivative_correlation, lemma2_bound_check, pearson_of_differences,
                         residual_sweep, solve_gamma, tau_grid)


def collapsed_batch(per_cell=3):
    n = 4 * per_cell
    z = np.zeros((n, 4))
    z[:, 2] = 1.0
    classes = np.repeat([0, 1], 2 * per_cell)
    domains = np.tile(np.repeat([0, 1], per_cell), 2)
    return EmbeddingBatch(z, classes, domains)


@pytest.mark.parametrize("tau", [0.1, 1.0, 4.0])
def test_identical_embeddings_decompose_exactly(tau):
    batch = collapsed_batch()
    record = decompose(batch, tau)
    assert record.term_a == pytest.approx(1.0)
    assert record.term_b == pytest.approx(2.0)
    assert record.term_c == pytest.approx(0.0, abs=1e-15)
    assert record.cmmd_quarter == pytest.approx(0.0, abs=1e-15)
    assert record.loss == pytest.approx(tau * math.log(batch.size - 1))
    assert record.residual == pytest.approx(0.0, abs=1e-12)


def test_residual_is_loss_minus_rhs(balanced_batch):
    record = decompose(balanced_batch, 0.7)
    assert record.residual == record.loss - record.rhs
    assert record.loss == pytest.approx(0.7 * sup_contrastive(balanced_batch, 0.7).value)
    assert record.log_const == pytest.approx(0.7 * math.log(balanced_batch.size - 1))

    terms = brute_decomposition_terms(balanced_batch)
    assert record.term_a == pytest.approx(terms["term_a"], abs=1e-12)
    assert record.term_b == pytest.approx(terms["term_b"], abs=1e-12)
    assert record.term_c == pytest.approx(terms["term_c"], abs=1e-12)


def test_residual_shrinks_with_temperature(rng):
    batches = [sample_balanced_batch(rng, 2, 12, 16) for _ in range(30)]
    taus = [0.2, 0.5, 1.0, 2.0, 5.0]
    means = residual_sweep(batches, taus)
    values = [means[tau] for tau in taus]
    assert all(later <= earlier for earlier, later in zip(values, values[1:]))
    assert values[-1] < 0.01 * values[0]


def test_nt_xent_decomposition_runs(balanced_batch):
    record = decompose(balanced_batch, 0.5, LossKind.NT_XENT)
    assert record.residual == record.loss - record.rhs


def test_decompose_requires_balanced_batch(rng):
    z = np.eye(6)
    with pytest.raises(BatchError):
        decompose(EmbeddingBatch(z, [0, 0, 0, 1, 1, 1], [0, 0, 1, 0, 1, 1]), 0.5)
    with pytest.raises(BatchError):
        decompose(EmbeddingBatch(np.eye(4), [0, 0, 1, 1], [0, 1, 0, 1]), 0.5)


def test_solve_gamma():
    assert solve_gamma(1.0).gamma == 0.25
    assert solve_gamma(0.5).gamma == 0.25

    g = solve_gamma(2.0)
    assert abs(g.residual) < 1e-10
    # (t - 1) / t^2 solves the equation for target t
    assert g.gamma == pytest.approx(3.0 / 16.0, abs=1e-12)
    with pytest.raises(ValueError):
        solve_gamma(0.0)


def test_gamma_decreases_with_kernel_bound():
    bounds = [1.0, 1.5, 2.0, 4.0, 8.0]
    gammas = [solve_gamma(k).gamma for k in bounds]
    assert all(later < earlier for earlier, later in zip(gammas, gammas[1:]))
    for k, gamma in zip(bounds, gammas):
        t = max(2.0, 2.0 * k)
        assert gamma == pytest.approx((t - 1.0) / t ** 2, abs=1e-12)


def test_lemma2_bound_holds_with_allowance(rng):
    satisfied = 0
    for _ in range(40):
        batch = sample_balanced_batch(rng, 2, 16, 16, class_spread=0.7, domain_shift=0.3)
        check = lemma2_bound_check(batch, 0.5)
        assert check.slack == pytest.approx(check.rhs - check.lhs)
        satisfied += check.satisfied_with_slack
    assert satisfied >= 38


def test_lemma2_rejects_non_positive_alpha(balanced_batch):
    with pytest.raises(ValueError):
        lemma2_bound_check(balanced_batch, 0.5, alpha_hat=-1.0)


def test_pearson_of_differences_signs():
    loss = np.array([3.0, 2.5, 2.4, 1.9, 1.7, 1.0])
    assert pearson_of_differences(loss, loss) == pytest.approx(1.0)
    assert pearson_of_differences(-loss, loss) == pytest.approx(-1.0)
    with pytest.raises(EstimatorUndefinedError):
        pearson_of_differences(np.arange(6.0), loss)
    with pytest.raises(ValueError):
        pearson_of_differences(loss[:2], loss[:2])


def test_derivative_correlation_reads_log_columns():
    loss = np.array([3.0, 2.5, 2.4, 1.9, 1.7])
    frame = pd.DataFrame({
        "tau": [0.5] * 5,
        "scaled_loss": loss,
        "cmmd_sq": 2 * loss,
        "term_a": loss ** 2,
        "term_b": -loss,
        "term_c": np.array([0.1, 0.3, 0.2, 0.5, 0.1]),
    })
    assert derivative_correlation(frame, Term.CMMD) == pytest.approx(1.0)
    assert derivative_correlation(frame, "term_b") == pytest.approx(-1.0)
    assert derivative_correlation(frame, Term.A, tau=0.5) > 0.7


def test_tau_grid():
    grid = tau_grid()
    assert len(grid) == 10
    assert grid[0] == pytest.approx(0.01)
    assert grid[-1] == pytest.approx(5.0)
    assert np.allclose(np.diff(np.log(grid)), np.log(500) / 9)
    with pytest.raises(ValueError):
        tau_grid(0.0, 1.0)


def antipodal_batch(per_cell=3):
    batch = collapsed_batch(per_cell)
    z = batch.z.copy()
    z[batch.class_labels == 1] *= -1.0
    return EmbeddingBatch(z, batch.class_labels, batch.domain_labels)


def test_bound_slack_on_collapsed_and_separated_batches():
    tau = 0.1
    collapsed = lemma2_bound_check(collapsed_batch(), tau, alpha_hat=1.0)
    separated = lemma2_bound_check(antipodal_batch(), tau, alpha_hat=1.0)

    # collapsed: no IMMD and no centered kernel mass, the loss is log(n - 1)
    assert collapsed.lhs == pytest.approx(0.0, abs=1e-12)
    assert collapsed.slack == pytest.approx(math.log(11))
    assert collapsed.var_allowance == pytest.approx(0.0, abs=1e-12)

    # antipodal classes: IMMD^2 = 2, HSIC(X, X) = n^2 / (n - 1)^2, loss = log(5 + 6 e^(-2 / tau))
    assert separated.lhs == pytest.approx(-2.0 + 0.25 * 144 / 121)
    assert separated.rhs == pytest.approx(math.log(5 + 6 * math.exp(-2 / tau)))
    assert separated.slack == pytest.approx(3.3119, abs=1e-4)

    # separating the classes does not tighten the bound
    assert separated.slack > collapsed.slack
    assert separated.satisfied_with_slack and collapsed.satisfied_with_slack
