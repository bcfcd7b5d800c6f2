# tests/test_oracle_check.py

from dpconsider.services.oracle_check import (
    check_exclusion_acceptance,
    check_mixture_pmf,
    check_slice_assignment,
    run_oracle_checks,
)


def test_mixture_pmf_sums_to_one():
    result = check_mixture_pmf(seed=1)
    assert result.passed, result.detail


def test_exclusions_are_always_accepted():
    result = check_exclusion_acceptance(seed=2)
    assert result.passed
    assert result.observed == 0.0


def test_slice_assignment_matches_direct_normalisation():
    result = check_slice_assignment(seed=3)
    assert result.passed, result.observed


def test_all_checks_pass():
    report = run_oracle_checks(seed=0)
    assert report.passed, [c for c in report.checks if not c.passed]
    assert [c.name for c in report.checks] == [
        "cs_stationary", "slice_assignment", "mixture_pmf_sum", "exclusion_accept",
    ]
