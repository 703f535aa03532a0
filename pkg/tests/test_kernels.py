import numpy as np
import pytest

from ctda.errors import BatchError, EstimatorUndefinedError
from ctda.kernels import EmbeddingBatch, LabelKernel, gram, label_gram, one_hot


def test_rejects_non_unit_rows():
    with pytest.raises(BatchError):
        EmbeddingBatch(np.array([[1.0, 0.0], [0.5, 0.5]]), [0, 0], [0, 1])


def test_rejects_single_sample_and_bad_labels():
    with pytest.raises(BatchError):
        EmbeddingBatch(np.array([[1.0, 0.0]]), [0], [0])
    with pytest.raises(BatchError):
        EmbeddingBatch(np.eye(2), [0, 1], [0, 2])
    with pytest.raises(BatchError):
        EmbeddingBatch(np.eye(2), [0, 3], [0, 1], n_classes=2)


def test_from_arrays_normalizes():
    batch = EmbeddingBatch.from_arrays([[3.0, 4.0], [0.0, 2.0]], [0, 1], normalize=True)
    assert np.allclose(np.linalg.norm(batch.z, axis=1), 1.0)
    assert batch.n_classes == 2
    assert batch.domain_fraction() == 0.0


def test_gram_identical_and_orthonormal_rows():
    same = EmbeddingBatch(np.array([[1.0, 0.0], [1.0, 0.0]]), [0, 0], [0, 1])
    assert np.array_equal(gram(same).k, np.ones((2, 2)))

    ortho = EmbeddingBatch(np.eye(2), [0, 1], [0, 1])
    assert np.array_equal(gram(ortho).off_diagonal(), np.zeros(2))


def test_gram_is_exactly_symmetric(balanced_batch):
    k = gram(balanced_batch).k
    assert np.array_equal(k, k.T)


def test_label_gram_patterns():
    assert np.array_equal(label_gram([1, 1, 1], LabelKernel(delta_l=3)), np.full((3, 3), 3.0))
    distinct = label_gram([0, 1, 2], LabelKernel(delta_l=2, l0=1))
    assert np.array_equal(np.diag(distinct), np.full(3, 3.0))
    assert np.array_equal(distinct[~np.eye(3, dtype=bool)], np.ones(6))


def test_one_hot_matches_unit_label_kernel():
    labels = np.array([0, 2, 1, 2, 0])
    encoded = one_hot(labels, 3)
    assert np.array_equal(encoded @ encoded.T, label_gram(labels, LabelKernel(delta_l=1.0)))


def test_cells_and_priors(balanced_batch):
    assert balanced_batch.is_balanced()
    assert balanced_batch.cell_counts() == {(0, 0): 4, (0, 1): 4, (1, 0): 4, (1, 1): 4}
    assert balanced_batch.class_priors() == pytest.approx([0.5, 0.5])
    assert balanced_batch.domain_fraction() == 0.5

    rows = balanced_batch.cell_indices(1, 0)
    assert np.allclose(balanced_batch.cell_mean(1, 0), balanced_batch.z[rows].mean(axis=0))


def test_empty_cell_mean_is_undefined():
    batch = EmbeddingBatch(np.eye(3), [0, 0, 1], [0, 1, 0])
    assert not batch.is_balanced()
    with pytest.raises(EstimatorUndefinedError):
        batch.cell_mean(1, 1)


def test_uniform_priors_ignore_absent_classes():
    batch = EmbeddingBatch(np.eye(4), [0, 0, 0, 2], [0, 1, 0, 1], n_classes=3)
    assert batch.class_priors() == pytest.approx([0.75, 0.0, 0.25])
    assert batch.class_priors(uniform=True) == pytest.approx([0.5, 0.0, 0.5])


def test_subset_and_swap_domains(balanced_batch):
    swapped = balanced_batch.swap_domains()
    assert np.array_equal(swapped.domain_labels, 1 - balanced_batch.domain_labels)
    part = balanced_batch.subset([0, 1, 5])
    assert part.size == 3
    assert part.n_classes == balanced_batch.n_classes
