import itertools

import numpy as np
import pandas as pd
import pytest

from ctda.errors import DatasetIOError, EstimatorUndefinedError
from ctda.trainer.metrics import (LOG_COLUMNS, ExperimentLog, classification_scores, evaluate, multiclass_auc,
                                  read_log, read_table, write_log)
from ctda.trainer.model import FeatureMap, LinearHead


def pair_count_auc(positive_scores, negative_scores):
    wins = 0.0
    for p, n in itertools.product(positive_scores, negative_scores):
        wins += 1.0 if p > n else 0.5 if p == n else 0.0
    return wins / (len(positive_scores) * len(negative_scores))


def brute_ovo(labels, probabilities):
    classes = range(probabilities.shape[1])
    scores = []
    for a, b in itertools.combinations(classes, 2):
        ab = pair_count_auc(probabilities[labels == a, a], probabilities[labels == b, a])
        ba = pair_count_auc(probabilities[labels == b, b], probabilities[labels == a, b])
        scores.append((ab + ba) / 2)
    return float(np.mean(scores))


def brute_ovr(labels, probabilities):
    return float(np.mean([
        pair_count_auc(probabilities[labels == c, c], probabilities[labels != c, c])
        for c in range(probabilities.shape[1])
    ]))


def log_row(epoch, **overrides):
    row = {c: 0.0 for c in LOG_COLUMNS if c != "schema_version"}
    row.update(epoch=epoch, phase="contrastive")
    row.update(overrides)
    return row


def test_binary_auc_matches_pair_count(rng):
    labels = rng.integers(0, 2, 50)
    # coarse scores so ties occur
    scores = np.round(rng.random(50), 1)
    probabilities = np.column_stack([1 - scores, scores])
    expected = pair_count_auc(scores[labels == 1], scores[labels == 0])
    assert multiclass_auc(labels, probabilities, "ovo") == pytest.approx(expected, abs=1e-12)


def test_multiclass_auc_matches_pair_count(rng):
    labels = np.arange(60) % 3
    logits = rng.standard_normal((60, 3)) + np.eye(3)[labels]
    probabilities = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
    assert multiclass_auc(labels, probabilities, "ovo") == pytest.approx(brute_ovo(labels, probabilities), abs=1e-12)
    assert multiclass_auc(labels, probabilities, "ovr") == pytest.approx(brute_ovr(labels, probabilities), abs=1e-12)


def test_perfect_classifier():
    labels = np.array([0, 1, 2, 0, 1, 2])
    scores = classification_scores(labels, 10.0 * np.eye(3)[labels])
    assert scores == {"accuracy": 1.0, "ovo_auc": 1.0, "ovr_auc": 1.0}


def test_random_scores_give_chance_auc(rng):
    labels = np.repeat([0, 1], 200)
    aucs = [classification_scores(labels, rng.standard_normal((400, 2)))["ovo_auc"] for _ in range(10)]
    assert np.mean(aucs) == pytest.approx(0.5, abs=0.05)


def test_absent_class_is_an_error():
    with pytest.raises(EstimatorUndefinedError):
        classification_scores([0, 0, 1], np.zeros((3, 3)))


def test_evaluate_reports_discrepancies(tiny_dataset, rng):
    from ctda.trainer.data import load_splits

    test = load_splits(tiny_dataset, target_side=8)["test"]
    feature_map = FeatureMap.init(64, 16, 8, rng)
    head = LinearHead.init(8, 3, rng)
    result = evaluate(feature_map, head, test)
    assert 0.0 <= result.accuracy <= 1.0
    assert result.cmmd_sq >= 0.0
    assert result.dcmmd_sq >= 0.0
    assert set(result.to_dict()) == {"accuracy", "ovo_auc", "ovr_auc", "cmmd_sq", "dcmmd_sq"}


def test_log_rejects_incomplete_rows_and_epoch_regressions():
    log = ExperimentLog()
    log.append(log_row(0))
    with pytest.raises(ValueError):
        log.append({"epoch": 1})
    with pytest.raises(ValueError):
        log.append(log_row(0))
    with pytest.raises(ValueError):
        log.append(dict(log_row(1), extra=1.0))


def test_log_csv_is_rfc4180_and_reads_back(tmp_path):
    log = ExperimentLog([log_row(0, tau=0.5, cmmd_sq=0.1), log_row(1, tau=0.5, cmmd_sq=1 / 3)])
    path = write_log(log, tmp_path / "log.csv")

    raw = path.read_bytes()
    assert raw.startswith(b"schema_version,epoch,phase,")
    assert raw.count(b"\r\n") == 3

    back = read_log(path)
    assert len(back) == 2
    assert back.frame["cmmd_sq"].tolist() == [0.1, 1 / 3]
    assert back.phase("contrastive")["epoch"].tolist() == [0, 1]


def test_read_table_rejects_schema_mismatch(tmp_path):
    path = tmp_path / "bad.csv"
    pd.DataFrame({"schema_version": [1], "epoch": [0]}).to_csv(path, index=False)
    with pytest.raises(DatasetIOError):
        read_table(path, LOG_COLUMNS, 1)

    path = tmp_path / "version.csv"
    pd.DataFrame({"schema_version": [2], "x": [0]}).to_csv(path, index=False)
    with pytest.raises(DatasetIOError):
        read_table(path, ["schema_version", "x"], 1)
