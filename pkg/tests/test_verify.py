import json

import pytest

import ctda.theory
from ctda.harness.verify import CHECKS, REPORT_SCHEMA_VERSION, run_checks


def test_suite_passes():
    report = run_checks(seed=2024, trials=20)
    failed = [c for c in report["checks"] if not c["passed"]]
    assert not failed, failed
    assert report["passed"]
    assert [c["name"] for c in report["checks"]] == list(CHECKS)


def test_report_is_json_ready():
    report = run_checks(seed=1, trials=10, names=["loss_oracle_nt_xent", "gamma_constant"])
    assert report["schema_version"] == REPORT_SCHEMA_VERSION
    decoded = json.loads(json.dumps(report))
    assert set(decoded["checks"][0]) == {"name", "passed", "tolerance", "measured", "detail"}
    assert decoded == report


def test_checks_are_seeded():
    names = ["decomposition_identity", "hsic_closed_form"]
    assert run_checks(seed=3, trials=10, names=names) == run_checks(seed=3, trials=10, names=names)


def test_broken_within_cell_term_is_caught(monkeypatch):
    original = ctda.theory._within_cell_mean
    monkeypatch.setattr(ctda.theory, "_within_cell_mean", lambda k, indices: -original(k, indices))

    report = run_checks(seed=7, trials=20, names=["decomposition_identity"])
    assert not report["passed"]
    assert report["checks"][0]["measured"] > 1e-6


def test_crashing_check_is_reported(monkeypatch):
    def explode(rng, settings):
        raise RuntimeError("boom")

    monkeypatch.setitem(CHECKS, "explode", explode)
    report = run_checks(names=["explode"])
    assert not report["passed"]
    assert "RuntimeError" in report["checks"][0]["detail"]


@pytest.mark.parametrize("name", ["loss_oracle_sup_contrastive", "estimator_oracles", "mixture_expectation"])
def test_exact_checks_are_tight(name):
    result = run_checks(seed=11, trials=10, names=[name])["checks"][0]
    assert result["passed"]
    assert result["measured"] <= result["tolerance"]
