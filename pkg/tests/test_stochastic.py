"""Test keyed random streams and the linear SDE integrator."""

from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.linalg import expm

from noise_gate_sim.analytic import flip_probability
from noise_gate_sim.channels import ChannelKind, ChannelSpec, second_moments
from noise_gate_sim.qstate import X, Z, StateVector
from noise_gate_sim.stochastic import (
    SDESpec,
    StreamKey,
    TimeGrid,
    default_time_step,
    integrate_sde,
    ordered_product,
    sample_ito_exponential_integral,
    sample_wiener_increment,
    scheme_moments,
    sde_propagator,
    sde_step_matrices,
    standard_normals,
    wiener_increments,
)


class TestStreams:
    def test_same_key_reproduces(self) -> None:
        key = StreamKey(5, 17, 2, 1)
        np.testing.assert_array_equal(standard_normals(key, 3, 50), standard_normals(key, 3, 50))
        assert sample_wiener_increment(key, 9, 0.1) == sample_wiener_increment(key, 9, 0.1)

    def test_block_addressing_is_random_access(self) -> None:
        """Block k of a long draw equals a draw started at k."""
        key = StreamKey(0, 1, 0)
        long = standard_normals(key, 0, 40)
        np.testing.assert_array_equal(long[25:30], standard_normals(key, 25, 5))

    def test_increments_match_single_draws(self) -> None:
        key = StreamKey(3, 0, 4)
        grid = TimeGrid(0.0, 1.0, 8)
        increments = wiener_increments(key, grid)
        assert increments[5] == pytest.approx(sample_wiener_increment(key, 5, grid.dt), rel=1e-15)

    def test_normal_moments(self) -> None:
        draws = standard_normals(StreamKey(1, 2, 3), 0, 100_000)
        assert abs(draws.mean()) < 0.015
        assert draws.var() == pytest.approx(1.0, abs=0.02)

    def test_distinct_keys_are_uncorrelated(self) -> None:
        a = standard_normals(StreamKey(0, 0, 0), 0, 100_000)
        b = standard_normals(StreamKey(0, 0, 1), 0, 100_000)
        c = standard_normals(StreamKey(0, 1, 0), 0, 100_000)
        assert abs(np.corrcoef(a, b)[0, 1]) < 0.01
        assert abs(np.corrcoef(a, c)[0, 1]) < 0.01

    def test_disjoint_ranges_are_uncorrelated(self) -> None:
        key = StreamKey(9, 0, 0)
        assert abs(np.corrcoef(standard_normals(key, 0, 100_000), standard_normals(key, 100_000, 100_000))[0, 1]) < 0.01

    def test_seed_changes_stream(self) -> None:
        assert standard_normals(StreamKey(0, 0, 0), 0, 1)[0] != standard_normals(StreamKey(1, 0, 0), 0, 1)[0]

    def test_key_bounds(self) -> None:
        with pytest.raises(ValueError, match="trajectory"):
            StreamKey(0, 2**32, 0)
        with pytest.raises(ValueError, match="qubit"):
            StreamKey(0, 0, -1)

    def test_seed_range_is_unsigned(self) -> None:
        with pytest.raises(ValueError, match="master_seed"):
            StreamKey(-1, 0, 0)
        with pytest.raises(ValueError, match="master_seed"):
            StreamKey(2**64, 0, 0)
        assert StreamKey(2**64 - 1, 0, 0).philox_key() == 2**64 - 1

    def test_zero_step_is_zero(self) -> None:
        assert sample_wiener_increment(StreamKey(0, 0, 0), 0, 0.0) == 0.0
        with pytest.raises(ValueError, match="non-negative"):
            sample_wiener_increment(StreamKey(0, 0, 0), 0, -1.0)


def test_ito_integral_variance() -> None:
    """Variance 1 - exp(-gamma T)."""
    gamma, T = 0.7, 1.3
    draws = np.array([sample_ito_exponential_integral(StreamKey(2, t, 0), gamma, 0.0, T) for t in range(20_000)])
    assert draws.var() == pytest.approx(-math.expm1(-gamma * T), rel=0.04)
    assert sample_ito_exponential_integral(StreamKey(2, 0, 0), gamma, 1.0, 1.0) == 0.0


class TestGrid:
    def test_covering_step(self) -> None:
        grid = TimeGrid.covering(0.0, 1.0, 0.3)
        assert grid.n_steps == 4
        assert grid.dt == pytest.approx(0.25)

    def test_exact_multiple(self) -> None:
        assert TimeGrid.covering(0.0, 1.0, 0.01).n_steps == 100

    def test_default_step(self) -> None:
        assert default_time_step(2.0, 5.0) == pytest.approx(0.005)
        assert default_time_step(0.0, 5.0) == 5.0

    def test_reversed_grid_rejected(self) -> None:
        with pytest.raises(ValueError, match="precede"):
            TimeGrid(1.0, 0.0, 3)


class TestSDESpec:
    def test_rejects_non_hermitian(self) -> None:
        with pytest.raises(ValueError, match="Hermitian"):
            SDESpec(2, np.array([[0, 1], [0, 0]]), ())

    def test_rejects_negative_gamma(self) -> None:
        with pytest.raises(ValueError, match="non-negative"):
            SDESpec.noise_only([(X, -0.1)])

    def test_total_rate(self) -> None:
        spec = SDESpec.noise_only([(X, 0.2), (Z, 0.3)])
        assert spec.total_rate() == pytest.approx(0.5)


class TestIntegrator:
    def test_zero_coupling_is_identity(self) -> None:
        spec = SDESpec.noise_only([(X, 0.0)])
        psi = StateVector.from_amplitudes([0.6, 0.8j])
        out = integrate_sde(spec, psi, TimeGrid(0.0, 1.0, 50), [StreamKey(0, 0, 0)])
        np.testing.assert_allclose(out.amps, psi.amps, atol=1e-14)

    def test_hamiltonian_only_is_unitary(self) -> None:
        """With the balanced drift and no noise a step is exp(-iH dt)."""
        spec = SDESpec(2, 0.5 * Z, ())
        out = integrate_sde(spec, StateVector.from_amplitudes([1, 1]), TimeGrid(0.0, 2.0, 10), [], "balanced")
        np.testing.assert_allclose(out.amps, [np.exp(-0.5j * 2.0), np.exp(0.5j * 2.0)], atol=1e-12)

    def test_euler_hamiltonian_converges_to_matrix_exponential(self) -> None:
        """H = sigma_z to t = pi: global error shrinks linearly in dt."""
        spec = SDESpec(2, Z, ())
        psi = StateVector.from_amplitudes([0.6, 0.8j])
        exact = expm(-1j * math.pi * Z) @ psi.amps

        def error(n_steps: int) -> float:
            out = integrate_sde(spec, psi, TimeGrid(0.0, math.pi, n_steps), [], "euler")
            return float(np.max(np.abs(out.amps - exact)))

        assert error(1000) < math.pi * (math.pi / 1000)
        assert 1.5 <= error(1000) / error(2000) <= 2.5

    def test_euler_bit_flip_population(self) -> None:
        """E|<0|psi>|^2 after bit-flip noise from |0> approaches p(T)."""
        gamma, T, n_steps = 0.5, 1.0, 100
        spec = ChannelSpec.of(ChannelKind.BIT_FLIP, gamma).sde_spec()
        grid = TimeGrid(0.0, T, n_steps)
        psi = StateVector.basis(1, 0)
        population = np.array(
            [abs(integrate_sde(spec, psi, grid, [StreamKey(6, t, 0)], "euler").amps[0]) ** 2 for t in range(4000)]
        )
        scheme = scheme_moments(spec, grid, "euler")[0, 0, 0, 0].real
        se = population.std(ddof=1) / math.sqrt(len(population))
        assert abs(population.mean() - scheme) <= 3 * se
        assert scheme == pytest.approx(flip_probability(gamma, T), abs=2e-3)

    def test_ordered_product_matches_loop(self, rng: np.random.Generator) -> None:
        steps = rng.normal(size=(7, 2, 2)) + 1j * rng.normal(size=(7, 2, 2))
        expected = np.eye(2)
        for step in steps:
            expected = step @ expected
        np.testing.assert_allclose(ordered_product(steps), expected, atol=1e-12)

    def test_propagator_is_reproducible(self) -> None:
        spec = SDESpec.noise_only([(X, 0.3)])
        grid = TimeGrid(0.0, 1.0, 30)
        a = sde_propagator(spec, grid, [StreamKey(1, 4, 0)])
        b = sde_propagator(spec, grid, [StreamKey(1, 4, 0)])
        np.testing.assert_array_equal(a, b)

    def test_step_matrices_shape(self) -> None:
        spec = SDESpec.noise_only([(X, 0.3), (Z, 0.1)])
        steps = sde_step_matrices(spec, TimeGrid(0.0, 1.0, 12), [StreamKey(0, 0, 0, 0), StreamKey(0, 0, 0, 1)])
        assert steps.shape == (12, 2, 2)

    def test_key_count_checked(self) -> None:
        with pytest.raises(ValueError, match="stream keys"):
            sde_propagator(SDESpec.noise_only([(X, 0.3)]), TimeGrid(0.0, 1.0, 2), [])

    def test_balanced_drift_preserves_mean_trace(self) -> None:
        """E[N^dag N] = I exactly for the balanced drift."""
        spec = ChannelSpec(ChannelKind.DEPOLARIZING, (0.4, 0.2, 0.1)).sde_spec()
        m = scheme_moments(spec, TimeGrid(0.0, 1.0, 25), "balanced")
        np.testing.assert_allclose(np.einsum("ijil->jl", m), np.eye(2), atol=1e-12)


class TestWeakConvergence:
    def test_first_order_error_ratio(self) -> None:
        """Halving dt halves the bias of the Euler-Maruyama moments."""
        spec = ChannelSpec.of(ChannelKind.BIT_FLIP, 0.5)
        exact = second_moments(spec, 1.0).m

        def error(n_steps: int) -> float:
            moments = scheme_moments(spec.sde_spec(), TimeGrid(0.0, 1.0, n_steps), "euler")
            return float(np.max(np.abs(moments - exact)))

        assert 1.5 <= error(50) / error(100) <= 2.5

    def test_ensemble_agrees_with_scheme_moments(self) -> None:
        """Sampled propagators average to the scheme's exact expectation."""
        spec = ChannelSpec.of(ChannelKind.BIT_FLIP, 0.5).sde_spec()
        grid = TimeGrid(0.0, 1.0, 20)
        gates = np.array([sde_propagator(spec, grid, [StreamKey(4, t, 0)]) for t in range(4000)])
        sampled = np.einsum("sij,skl->ijkl", gates, gates.conj()) / len(gates)
        products = np.einsum("sij,skl->sijkl", gates, gates.conj())
        se = products.std(axis=0) / math.sqrt(len(gates))
        assert np.all(np.abs(sampled - scheme_moments(spec, grid)) <= 4 * se + 1e-12)
