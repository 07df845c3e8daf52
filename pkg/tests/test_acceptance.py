"""Every acceptance criterion at its stated tolerance, one line per criterion.

Run ``pytest tests/test_acceptance.py -v -s`` (or ``mirroropt verify all``)
to see the measured values next to the bounds.
"""

import pytest

from mirroropt.acceptance import CRITERIA, SUITES, criterion_4, run_suite

RUNTIME_LIMITS = {1: 60.0, 2: 120.0}


@pytest.mark.parametrize("number", sorted(CRITERIA), ids=lambda k: f"C{k}")
def test_criterion(number, capsys, tmp_path):
    result = CRITERIA[number](None, tmp_path)
    with capsys.disabled():
        print("\n" + result.line())
    assert result.passed, result.line()
    if number in RUNTIME_LIMITS:
        assert result.seconds < RUNTIME_LIMITS[number]


def test_figure_csvs_are_written(tmp_path):
    run_suite("figures", out_dir=tmp_path)
    assert (tmp_path / "linear_decay.csv").exists()
    assert (tmp_path / "dimension_scaling.csv").exists()


def test_tampered_stepsize_fails_the_logistic_criterion(capsys):
    result = criterion_4({"convex_c": 0.1}, None)
    with capsys.disabled():
        print("\n(negative control) " + result.line())
    assert not result.passed
    assert "precondition failed: c >= 1" in result.detail


def test_suites_cover_every_criterion():
    covered = set(SUITES["properties"]) | set(SUITES["theorems"]) | set(SUITES["figures"])
    assert covered == set(CRITERIA) == set(SUITES["all"])
