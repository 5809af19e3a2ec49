"""Test the validation suite."""

from __future__ import annotations

import pytest

from noise_gate_sim.validation import CheckResult, ValidationReport, run_validation

DETERMINISTIC_CHECKS = (
    "cnot_bitflip_asymptote",
    "moments_trace_bit_flip",
    "moments_trace_depolarizing",
    "moments_trace_generalized_amplitude_damping",
    "moments_depolarizing_from_closed_form",
    "moments_gad_from_rk4",
    "moments_gad_printed_table_rejected",
    "weak_convergence_bitflip",
    "surface_depolarizing_initial_fidelity",
    "surface_depolarizing_monotone",
    "surface_generalized_amplitude_damping_monotone",
    "surface_generalized_amplitude_damping_asymptote",
    "independence_cross_qubit",
    "independence_disjoint_intervals",
)


@pytest.fixture(scope="module")
def small_report() -> ValidationReport:
    """Validation run with a small ensemble."""
    return run_validation(master_seed=3, n_trajectories=256)


def _by_name(report: ValidationReport) -> dict[str, CheckResult]:
    return {check.name: check for check in report.checks}


@pytest.mark.slow
def test_report_covers_every_group(small_report: ValidationReport) -> None:
    names = set(_by_name(small_report))
    for prefix in (
        "cnot_", "chain_", "unraveling_", "moments_", "sampled_moments_", "independence_", "effective_gate_",
        "bulk_norm_", "weak_convergence_", "surface_", "mean_trace_",
    ):
        assert any(name.startswith(prefix) for name in names), prefix
    assert sum(name.startswith("unraveling_") for name in names) == 18


@pytest.mark.slow
def test_deterministic_checks_pass(small_report: ValidationReport) -> None:
    checks = _by_name(small_report)
    for name in DETERMINISTIC_CHECKS:
        assert checks[name].passed, f"{name}: {checks[name].measured} vs {checks[name].tolerance}"


@pytest.mark.slow
def test_printed_moments_fail_trace_check() -> None:
    """Swapping in the uncorrected generalized amplitude damping table fails the release gate."""
    report = run_validation(master_seed=3, n_trajectories=64, inject_printed_moments=True)
    checks = _by_name(report)
    assert not report.passed
    assert not checks["moments_trace_generalized_amplitude_damping"].passed
    assert checks["moments_trace_generalized_amplitude_damping"].measured > 0.1
    assert not checks["moments_gad_from_rk4"].passed


def test_report_properties() -> None:
    report = ValidationReport((CheckResult("a", 0.0, 1.0, True), CheckResult("b", 2.0, 1.0, False)))
    assert not report.passed
    assert [check.name for check in report.failures] == ["b"]
