"""Test the trajectory ensemble engine."""

from __future__ import annotations

import math

import numpy as np
import pytest

from noise_gate_sim import montecarlo
from noise_gate_sim.analytic import EntangledPairCoeffs, fidelity_cnot_bitflip_equal, flip_probability
from noise_gate_sim.channels import ChannelKind, ChannelSpec, sampler_moments
from noise_gate_sim.circuit import CircuitIR, NoiseSegment, build_cnot_scenario, build_spinchain_scenario
from noise_gate_sim.lindblad import LindbladSpec, rk4_evolve
from noise_gate_sim.montecarlo import (
    CHUNK_SIZE,
    EnsembleConfig,
    Estimate,
    TrajectoryError,
    bounded_step,
    estimate_bulk_norm,
    estimate_density_matrix,
    estimate_fidelity,
    estimate_pair_via_chain_gate,
    run_ensemble,
    run_scenario_ensemble,
    standard_error,
)
from noise_gate_sim.qstate import DensityMatrix, StateVector, fidelity_pure, trace_distance


def test_cnot_bitflip_within_three_standard_errors(ensemble: EnsembleConfig) -> None:
    scenario = build_cnot_scenario(0.1, 0.1, ChannelKind.BIT_FLIP, 0.0, 1.0, 2.0)
    result = run_scenario_ensemble(scenario, ensemble)
    assert result.fidelity is not None
    assert result.fidelity.within(fidelity_cnot_bitflip_equal(flip_probability(0.1, 1.0)))
    assert result.fidelity.n == ensemble.n_trajectories
    # unitary noise gates: every trajectory keeps unit norm
    assert result.norm.value == pytest.approx(1.0, abs=1e-12)


def test_fidelity_estimator_consistent_with_density(ensemble: EnsembleConfig) -> None:
    scenario = build_cnot_scenario(0.3, 0.2, ChannelKind.AMPLITUDE_DAMPING, 0.0, 1.0, 2.0)
    state = StateVector.from_amplitudes(np.array([0.6, 0.0, 0.8j, 0.0]))
    target = scenario.target
    density, _ = estimate_density_matrix(scenario.circuit, state, (0, 1), ensemble)
    fidelity = estimate_fidelity(scenario.circuit, state, target, (0, 1), ensemble)
    assert fidelity.value == pytest.approx(fidelity_pure(density, target), abs=1e-12)
    assert density.hermitian_residual() < 1e-10
    assert density.min_eigenvalue() > -1e-8


@pytest.mark.parametrize(
    "spec",
    [
        ChannelSpec.of(ChannelKind.AMPLITUDE_DAMPING, 0.5),
        ChannelSpec(ChannelKind.DEPOLARIZING, (0.5, 0.3, 0.2)),
        ChannelSpec(ChannelKind.GENERALIZED_AMPLITUDE_DAMPING, (0.375, 0.125)),
    ],
    ids=lambda s: s.kind.value,
)
@pytest.mark.slow
def test_unraveling_matches_master_equation(spec: ChannelSpec, ensemble: EnsembleConfig) -> None:
    psi = StateVector.from_amplitudes([math.cos(0.4), math.sin(0.4) * np.exp(0.7j)])
    circuit = CircuitIR(1, (), (NoiseSegment(0, spec, 0.0, 1.0),), 0.0, 1.0)
    result = run_ensemble(circuit, psi, (0,), ensemble)
    rho0 = DensityMatrix.pure(psi)
    reference = rk4_evolve(LindbladSpec.from_channel(spec), rho0, 1.0)
    scheme = DensityMatrix(1, sampler_moments(spec, 1.0).apply(rho0.entries))
    bias = trace_distance(scheme, reference)
    assert bias < 0.01
    assert trace_distance(result.density, reference) <= 3 * result.density_se_norm() + bias + 1e-6
    assert result.norm.within(1.0, atol=abs(scheme.trace().real - 1.0) + 1e-9)


def test_worker_count_does_not_change_result() -> None:
    scenario = build_cnot_scenario(0.4, 0.2, ChannelKind.DEPOLARIZING, 0.0, 0.5, 1.0)
    serial = run_scenario_ensemble(scenario, EnsembleConfig(3 * CHUNK_SIZE + 17, 2, None, 1))
    parallel = run_scenario_ensemble(scenario, EnsembleConfig(3 * CHUNK_SIZE + 17, 2, None, 3))
    np.testing.assert_array_equal(serial.density.entries, parallel.density.entries)
    np.testing.assert_array_equal(serial.density_se, parallel.density_se)
    assert serial.fidelity == parallel.fidelity


def test_pool_failure_falls_back_to_serial(monkeypatch: pytest.MonkeyPatch) -> None:
    def broken_pool(*args: object, **kwargs: object) -> None:
        raise OSError("no processes")

    scenario = build_cnot_scenario(0.4, 0.2, ChannelKind.BIT_FLIP, 0.0, 0.5, 1.0)
    expected = run_scenario_ensemble(scenario, EnsembleConfig(600, 4))
    monkeypatch.setattr(montecarlo, "ProcessPoolExecutor", broken_pool)
    result = run_scenario_ensemble(scenario, EnsembleConfig(600, 4, None, 4))
    np.testing.assert_array_equal(result.density.entries, expected.density.entries)


def test_seed_changes_estimate() -> None:
    scenario = build_cnot_scenario(0.4, 0.2, ChannelKind.BIT_FLIP, 0.0, 0.5, 1.0)
    a = run_scenario_ensemble(scenario, EnsembleConfig(300, 0)).fidelity
    b = run_scenario_ensemble(scenario, EnsembleConfig(300, 1)).fidelity
    assert a is not None and b is not None
    assert a.value != b.value


class TestChainEnsembles:
    def test_effective_gate_matches_full_circuit(self, bell: EntangledPairCoeffs) -> None:
        n = 5
        scenario = build_spinchain_scenario(
            n, [(0.15, 0.05)] * (n + 1), range(n + 1), ChannelKind.GENERALIZED_AMPLITUDE_DAMPING, bell
        )
        cfg = EnsembleConfig(1500, 3)
        full = run_scenario_ensemble(scenario, cfg)
        reduced = estimate_pair_via_chain_gate(scenario, cfg)
        tolerance = 3 * np.sqrt(full.density_se**2 + reduced.density_se**2) + 1e-12
        assert np.all(np.abs(full.density.entries - reduced.density.entries) <= tolerance)

    def test_bulk_norm_is_one_on_average(self, bell: EntangledPairCoeffs) -> None:
        n = 4
        bulk = StateVector.from_amplitudes(np.ones(2 ** (n - 1)) / math.sqrt(2 ** (n - 1)))
        scenario = build_spinchain_scenario(n, [0.3] * (n + 1), range(n + 1), ChannelKind.AMPLITUDE_DAMPING, bell, bulk)
        norm = estimate_bulk_norm(scenario, EnsembleConfig(3000, 8))
        assert norm.within(1.0, atol=1e-12)

    def test_bulk_norm_requires_chain(self) -> None:
        scenario = build_cnot_scenario(0.1, 0.1, ChannelKind.BIT_FLIP, 0.0, 1.0, 2.0)
        with pytest.raises(ValueError, match="bulk state"):
            estimate_bulk_norm(scenario, EnsembleConfig(10))


class TestErrors:
    def test_trajectory_failure_is_reported(self, monkeypatch: pytest.MonkeyPatch) -> None:
        def failing(*args: object, **kwargs: object) -> StateVector:
            raise ValueError("State vector contains non-finite amplitudes")

        monkeypatch.setattr(montecarlo, "run_trajectory", failing)
        scenario = build_cnot_scenario(0.1, 0.1, ChannelKind.BIT_FLIP, 0.0, 1.0, 2.0)
        with pytest.raises(TrajectoryError, match="Trajectory 0 failed") as info:
            run_scenario_ensemble(scenario, EnsembleConfig(5))
        assert info.value.trajectory == 0

    def test_invalid_inputs(self) -> None:
        scenario = build_cnot_scenario(0.1, 0.1, ChannelKind.BIT_FLIP, 0.0, 1.0, 2.0)
        with pytest.raises(ValueError, match="at least one"):
            run_ensemble(scenario.circuit, scenario.input_state, (), EnsembleConfig(5))
        with pytest.raises(ValueError, match="Dimension mismatch"):
            run_ensemble(scenario.circuit, StateVector.basis(1, 0), (0,), EnsembleConfig(5))
        with pytest.raises(ValueError, match="normalized"):
            estimate_fidelity(
                scenario.circuit, scenario.input_state, StateVector(2, np.ones(4)), (0, 1), EnsembleConfig(5)
            )
        with pytest.raises(ValueError, match="kept"):
            estimate_fidelity(scenario.circuit, scenario.input_state, StateVector.basis(2, 0), (0,), EnsembleConfig(5))

    def test_config_validation(self) -> None:
        with pytest.raises(ValueError, match="n_trajectories"):
            EnsembleConfig(0)
        with pytest.raises(ValueError, match="dt"):
            EnsembleConfig(10, dt=-0.1)
        with pytest.raises(ValueError, match="master_seed"):
            EnsembleConfig(10, master_seed=-1)
        with pytest.raises(ValueError, match="master_seed"):
            EnsembleConfig(10, master_seed=2**64)


def test_estimate_within() -> None:
    estimate = Estimate(0.5, 0.01, 100)
    assert estimate.within(0.52)
    assert not estimate.within(0.54)
    assert estimate.within(0.54, atol=0.02)


def test_standard_error() -> None:
    assert standard_error([1.0, 1.0, 1.0]) == 0.0
    assert standard_error([0.0, 2.0]) == pytest.approx(1.0)
    assert standard_error([3.0]) == 0.0


class TestStepBound:
    def test_coarse_step_is_lowered_with_warning(self, capsys: pytest.CaptureFixture[str]) -> None:
        spec = ChannelSpec(ChannelKind.DEPOLARIZING, (0.5, 0.3, 0.2))
        circuit = CircuitIR(1, (), (NoiseSegment(0, spec, 0.0, 1.0),), 0.0, 1.0)
        assert bounded_step(circuit, 1.0) == pytest.approx(0.01)
        assert "Warning" in capsys.readouterr().err

    def test_fine_or_default_step_is_kept(self, capsys: pytest.CaptureFixture[str]) -> None:
        spec = ChannelSpec(ChannelKind.GENERALIZED_AMPLITUDE_DAMPING, (1.5, 0.5))
        circuit = CircuitIR(1, (), (NoiseSegment(0, spec, 0.0, 1.0),), 0.0, 1.0)
        assert bounded_step(circuit, 0.005) == 0.005
        assert bounded_step(circuit, None) is None
        assert capsys.readouterr().err == ""

    def test_closed_form_segments_ignore_the_bound(self) -> None:
        scenario = build_cnot_scenario(5.0, 5.0, ChannelKind.BIT_FLIP, 0.0, 1.0, 2.0)
        assert bounded_step(scenario.circuit, 1.0) == 1.0
