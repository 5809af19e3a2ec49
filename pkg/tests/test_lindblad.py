"""Test the master-equation reference solvers."""

from __future__ import annotations

import math
from collections.abc import Callable

import numpy as np
import pytest

from noise_gate_sim.channels import ChannelKind, ChannelSpec, second_moments
from noise_gate_sim.lindblad import LindbladSpec, closed_form_rho, default_rk4_step, rk4_evolve
from noise_gate_sim.qstate import X, Z, DensityMatrix, StateVector

DensityFactory = Callable[[int], DensityMatrix]

PLUS = DensityMatrix.pure(StateVector.from_amplitudes(np.array([1, 1]) / math.sqrt(2)))


def test_plus_state_is_bit_flip_fixed_point() -> None:
    spec = LindbladSpec.noise_only([(X, 0.7)])
    np.testing.assert_allclose(rk4_evolve(spec, PLUS, 2.0).entries, PLUS.entries, atol=1e-9)


def test_phase_flip_coherence_decay() -> None:
    """Off-diagonals decay as exp(-2 gamma t)."""
    rho = rk4_evolve(LindbladSpec.noise_only([(Z, 0.1)]), PLUS, 1.0)
    assert rho.entries[0, 1] == pytest.approx(0.5 * math.exp(-0.2), abs=1e-8)


def test_trace_and_hermiticity_preserved(random_density: DensityFactory) -> None:
    rho0 = random_density(1)
    spec = LindbladSpec.from_channel(ChannelSpec(ChannelKind.DEPOLARIZING, (0.3, 0.2, 0.5)))
    rho = rk4_evolve(spec, rho0, 3.0)
    assert rho.trace() == pytest.approx(rho0.trace(), abs=1e-9)
    assert rho.hermitian_residual() <= 1e-9


def test_hamiltonian_rotation() -> None:
    """H = Z/2 rotates the plus state's phase."""
    spec = LindbladSpec(2, 0.5 * Z, ())
    rho = rk4_evolve(spec, PLUS, 1.0, dt=1e-3)
    assert rho.entries[0, 1] == pytest.approx(0.5 * np.exp(-1j), abs=1e-9)


def test_zero_time_returns_input() -> None:
    spec = LindbladSpec.noise_only([(X, 0.7)])
    assert rk4_evolve(spec, PLUS, 0.0) is PLUS


def test_errors() -> None:
    spec = LindbladSpec.noise_only([(X, 0.7)])
    with pytest.raises(ValueError, match="non-negative"):
        rk4_evolve(spec, PLUS, -1.0)
    with pytest.raises(ValueError, match="Dimension mismatch"):
        rk4_evolve(spec, DensityMatrix.zeros(2), 1.0)
    with pytest.raises(ValueError, match="Closed forms"):
        closed_form_rho(ChannelSpec.of(ChannelKind.DEPOLARIZING, 0.1), DensityMatrix.zeros(2), 1.0)
    with pytest.raises(ValueError, match="No closed-form"):
        closed_form_rho(ChannelSpec.of(ChannelKind.BIT_FLIP, 0.1), PLUS, 1.0)


def test_default_step() -> None:
    spec = LindbladSpec.noise_only([(X, 2.0)])
    assert default_rk4_step(spec, 10.0) == pytest.approx(0.005)
    assert default_rk4_step(spec, 0.1) == pytest.approx(0.001)


@pytest.mark.parametrize(
    "spec",
    [
        ChannelSpec(ChannelKind.DEPOLARIZING, (0.4, 0.1, 0.25)),
        ChannelSpec(ChannelKind.GENERALIZED_AMPLITUDE_DAMPING, (0.6, 0.2)),
        ChannelSpec(ChannelKind.GENERALIZED_AMPLITUDE_DAMPING, (0.0, 0.0)),
    ],
    ids=["depolarizing", "gad", "gad-noiseless"],
)
def test_closed_form_matches_rk4(spec: ChannelSpec, random_density: DensityFactory) -> None:
    lindblad = LindbladSpec.from_channel(spec)
    for _ in range(25):
        rho0 = random_density(1)
        np.testing.assert_allclose(
            closed_form_rho(spec, rho0, 1.7).entries, rk4_evolve(lindblad, rho0, 1.7).entries, atol=1e-7
        )


@pytest.mark.parametrize(
    "spec",
    [
        ChannelSpec.of(ChannelKind.BIT_FLIP, 0.5),
        ChannelSpec.of(ChannelKind.PHASE_FLIP, 0.5),
        ChannelSpec.of(ChannelKind.BIT_PHASE_FLIP, 0.5),
        ChannelSpec.of(ChannelKind.AMPLITUDE_DAMPING, 0.5),
        ChannelSpec(ChannelKind.DEPOLARIZING, (0.5, 0.3, 0.2)),
        ChannelSpec(ChannelKind.GENERALIZED_AMPLITUDE_DAMPING, (0.5, 0.2)),
    ],
    ids=lambda s: s.kind.value,
)
def test_moment_tables_reproduce_master_equation(spec: ChannelSpec, random_density: DensityFactory) -> None:
    """Applying the table equals integrating the master equation."""
    rho0 = random_density(1)
    for T in (0.5, 2.0):
        expected = rk4_evolve(LindbladSpec.from_channel(spec), rho0, T).entries
        np.testing.assert_allclose(second_moments(spec, T).apply(rho0.entries), expected, atol=1e-7)
