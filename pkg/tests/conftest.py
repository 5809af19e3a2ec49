"""Shared fixtures for the test suite."""

from __future__ import annotations

from collections.abc import Callable

import numpy as np
import pytest

from noise_gate_sim.analytic import EntangledPairCoeffs
from noise_gate_sim.montecarlo import EnsembleConfig
from noise_gate_sim.qstate import DensityMatrix, StateVector


@pytest.fixture
def rng() -> np.random.Generator:
    """Seeded generator for random test inputs."""
    return np.random.default_rng(20240611)


@pytest.fixture
def random_state(rng: np.random.Generator) -> Callable[[int], StateVector]:
    """Factory for normalized random states."""

    def make(n_qubits: int) -> StateVector:
        amps = rng.normal(size=2**n_qubits) + 1j * rng.normal(size=2**n_qubits)
        return StateVector.from_amplitudes(amps / np.linalg.norm(amps))

    return make


@pytest.fixture
def random_density(rng: np.random.Generator) -> Callable[[int], DensityMatrix]:
    """Factory for random full-rank density matrices."""

    def make(n_qubits: int) -> DensityMatrix:
        dim = 2**n_qubits
        g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
        rho = g @ g.conj().T
        return DensityMatrix.from_matrix(rho / np.trace(rho).real)

    return make


@pytest.fixture
def bell() -> EntangledPairCoeffs:
    """(|00> + |11>) / sqrt(2)."""
    return EntangledPairCoeffs.bell()


@pytest.fixture
def generic_pair() -> EntangledPairCoeffs:
    """A pair with non-zero A and complex B."""
    amps = np.array([0.8, 0.3 + 0.4j, -0.2j, 0.5])
    return EntangledPairCoeffs.from_amplitudes(amps / np.linalg.norm(amps))


@pytest.fixture
def ensemble() -> EnsembleConfig:
    """Moderate ensemble for statistical checks."""
    return EnsembleConfig(n_trajectories=4000, master_seed=11)
