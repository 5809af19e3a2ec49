"""Closed-form fidelities for the noisy CNOT and the spin-chain transfer."""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from .channels import ChannelKind, ChannelSpec, SecondMoments, second_moments
from .qstate import NORMALIZATION_TOL, ComplexArray, DensityMatrix, StateVector, apply_one_qubit_channel, fidelity_pure


def _unit(value: float) -> float:
    return min(max(float(value), 0.0), 1.0)


@dataclass(frozen=True)
class EntangledPairCoeffs:
    """Normalized two-qubit state ``sum a_ij |ij>``; qubit 0 stays put, qubit 1 is transmitted."""

    a00: complex
    a01: complex
    a10: complex
    a11: complex

    def __post_init__(self) -> None:
        total = sum(abs(complex(a)) ** 2 for a in self.amplitudes())
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise ValueError(f"Pair coefficients must be normalized, sum |a|^2 = {total}")

    @classmethod
    def from_amplitudes(cls, amps: npt.ArrayLike) -> EntangledPairCoeffs:
        flat = np.asarray(amps, dtype=np.complex128).reshape(-1)
        if flat.size != 4:
            raise ValueError(f"A pair state has 4 amplitudes, got {flat.size}")
        return cls(*(complex(a) for a in flat))

    @classmethod
    def bell(cls) -> EntangledPairCoeffs:
        h = math.sqrt(0.5)
        return cls(h, 0.0, 0.0, h)

    @classmethod
    def from_lambda(cls, lam: float) -> EntangledPairCoeffs:
        """``sqrt(lam) |01> + sqrt(1 - lam) |10>``."""
        if not 0.0 <= lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {lam}")
        return cls(0.0, math.sqrt(lam), math.sqrt(1.0 - lam), 0.0)

    def amplitudes(self) -> ComplexArray:
        return np.array([self.a00, self.a01, self.a10, self.a11], dtype=np.complex128)

    def state(self) -> StateVector:
        return StateVector(2, self.amplitudes())

    @property
    def A(self) -> float:  # noqa: N802
        return abs(self.a00) ** 2 + abs(self.a10) ** 2

    @property
    def B(self) -> complex:  # noqa: N802
        return complex(np.conj(self.a00) * self.a01 + np.conj(self.a10) * self.a11)

    def overlap_weights(self) -> ComplexArray:
        """Weights ``w`` with ``<psi|psi_bar> = sum_ij w_ij n_bar_ij``."""
        return np.array([[self.A, self.B], [np.conj(self.B), 1.0 - self.A]], dtype=np.complex128)


@dataclass(frozen=True)
class ChainCouplings:
    """Coupling constants of the transmitted qubit along the chain.

    ``gammas[s]`` holds the per-component constants while the state sits in segment ``s``,
    ``intervals[s]`` is that segment's duration.
    """

    gammas: tuple[tuple[float, ...], ...]
    intervals: tuple[float, ...]

    def __post_init__(self) -> None:
        gammas = tuple(tuple(float(g) for g in row) for row in self.gammas)
        intervals = tuple(float(t) for t in self.intervals)
        if len(gammas) != len(intervals):
            raise ValueError(f"Got {len(gammas)} coupling rows for {len(intervals)} intervals")
        if len({len(row) for row in gammas}) > 1:
            raise ValueError("Every segment needs the same number of coupling components")
        if any(g < 0 for row in gammas for g in row) or any(t < 0 for t in intervals):
            raise ValueError("Couplings and interval lengths must be non-negative")
        object.__setattr__(self, "gammas", gammas)
        object.__setattr__(self, "intervals", intervals)

    @classmethod
    def uniform(cls, gammas: float | Sequence[float], n_segments: int, interval: float = 1.0) -> ChainCouplings:
        row = (float(gammas),) if isinstance(gammas, int | float) else tuple(gammas)
        return cls((row,) * n_segments, (interval,) * n_segments)

    @classmethod
    def gaussian(
        cls,
        n_segments: int,
        peaks: Sequence[float],
        *,
        center: float | None = None,
        base_variance: float | None = None,
        variance_ratios: Sequence[float] = (1.0, 2.0, 3.0),
        interval: float = 1.0,
    ) -> ChainCouplings:
        """Gaussian profile over qubits ``1..n_segments``; component ``m`` has variance ``ratio_m * base``.

        Defaults: centered on the middle qubit, base variance ``(n_segments / 10) ** 2``.
        """
        if len(peaks) > len(variance_ratios):
            raise ValueError(f"Need a variance ratio per component, got {len(variance_ratios)} for {len(peaks)}")
        mid = (n_segments + 1) / 2.0 if center is None else center
        base = (n_segments / 10.0) ** 2 if base_variance is None else base_variance
        if base <= 0:
            raise ValueError(f"base_variance must be positive, got {base}")
        qubits = np.arange(1, n_segments + 1, dtype=np.float64)
        columns = [
            peak * np.exp(-((qubits - mid) ** 2) / (2.0 * ratio * base))
            for peak, ratio in zip(peaks, variance_ratios, strict=False)
        ]
        rows = tuple(tuple(float(col[s]) for col in columns) for s in range(n_segments))
        return cls(rows, (interval,) * n_segments)

    @property
    def n_components(self) -> int:
        return len(self.gammas[0]) if self.gammas else 0

    def total(self, component: int = 0) -> float:
        """``Gamma^(m) = sum_s gamma_s^(m) * interval_s``."""
        return float(sum(row[component] * t for row, t in zip(self.gammas, self.intervals, strict=True)))

    def pair_total(self, m: int, n: int) -> float:
        return self.total(m) + self.total(n)

    def total_time(self) -> float:
        return float(sum(self.intervals))

    def elapsed(self, t: float) -> ChainCouplings:
        """Couplings accumulated during the first ``t`` time units; later segments get zero length."""
        if t < 0:
            raise ValueError(f"Elapsed time must be non-negative, got {t}")
        clipped = []
        start = 0.0
        for interval in self.intervals:
            clipped.append(max(0.0, min(start + interval, t) - start))
            start += interval
        return ChainCouplings(self.gammas, tuple(clipped))

    def is_uniform(self) -> bool:
        return len(set(self.gammas)) <= 1


def flip_probability(gamma: float, duration: float) -> float:
    """``p = (1 + exp(-2 gamma duration)) / 2``."""
    return 0.5 * (1.0 + math.exp(-2.0 * gamma * duration))


def fidelity_cnot_bitflip(gamma1: float, gamma2: float, intervals: tuple[float, float]) -> float:
    """Fidelity of the CNOT with bit-flip noise on control (gamma1) and target (gamma2), input |00>."""
    before, after = intervals
    if min(gamma1, gamma2, before, after) < 0:
        raise ValueError("Coupling constants and intervals must be non-negative")
    p1, p2 = flip_probability(gamma1, before), flip_probability(gamma2, before)
    r1, r2 = flip_probability(gamma1, after), flip_probability(gamma2, after)
    q1, q2, s1, s2 = 1 - p1, 1 - p2, 1 - r1, 1 - r2
    return _unit(p1 * p2 * r1 * r2 + q1 * p2 * s1 * s2 + p1 * q2 * r1 * s2 + q1 * q2 * s1 * r2)


def fidelity_cnot_bitflip_equal(p: float) -> float:
    """Equal couplings and intervals: ``4p^3 - 5p^2 + 2p``."""
    return _unit(4 * p**3 - 5 * p**2 + 2 * p)


def fidelity_chain_amplitude_damping(pair: EntangledPairCoeffs, total_coupling: float) -> float:
    if total_coupling < 0:
        raise ValueError(f"Total coupling must be non-negative, got {total_coupling}")
    A = pair.A  # noqa: N806
    return _unit((A + (1 - A) * math.exp(-total_coupling / 2)) ** 2 + abs(pair.B) ** 2 * -math.expm1(-total_coupling))


def flip_asymmetry(kind: ChannelKind, pair: EntangledPairCoeffs) -> float:
    """``g``: 2 Re B for bit flip, 2A - 1 for phase flip, 2 Im B for bit-phase flip."""
    kind = ChannelKind.parse(kind)
    if kind is ChannelKind.BIT_FLIP:
        return 2 * pair.B.real
    if kind is ChannelKind.PHASE_FLIP:
        return 2 * pair.A - 1
    if kind is ChannelKind.BIT_PHASE_FLIP:
        return 2 * pair.B.imag
    raise ValueError(f"{kind.value} is not a flip channel")


def fidelity_chain_flip(kind: ChannelKind, pair: EntangledPairCoeffs, total_coupling: float) -> float:
    if total_coupling < 0:
        raise ValueError(f"Total coupling must be non-negative, got {total_coupling}")
    g2 = flip_asymmetry(kind, pair) ** 2
    return _unit((1 + g2) / 2 + (1 - g2) / 2 * math.exp(-2 * total_coupling))


def fidelity_chain_depolarizing(pair: EntangledPairCoeffs, gamma12: float, gamma13: float, gamma23: float) -> float:
    """Arguments are the pairwise aggregates ``Gamma^(m,n) = Gamma^(m) + Gamma^(n)``."""
    A, B = pair.A, pair.B  # noqa: N806
    e12, e13, e23 = (math.exp(-2 * g) for g in (gamma12, gamma13, gamma23))
    value = (
        0.5 * (A**2 + (1 - A) ** 2) * (1 + e12)
        + A * (1 - A) * (e23 + e13)
        + abs(B) ** 2 * (1 - e12)
        + (B * B).real * (e23 - e13)
    )
    return _unit(value)


def fidelity_chain_gen_amp_damping(
    pair: EntangledPairCoeffs, gamma1: float, gamma2: float, total_time: float
) -> float:
    """Uniform decay (gamma1) and excitation (gamma2) constants along the whole chain."""
    if min(gamma1, gamma2, total_time) < 0:
        raise ValueError("Coupling constants and time must be non-negative")
    total = gamma1 + gamma2
    if total == 0:
        return 1.0
    A, B = pair.A, pair.B  # noqa: N806
    decay = math.exp(-total * total_time)
    stationary = A**2 * gamma1 / total + (1 - A) ** 2 * gamma2 / total + abs(B) ** 2
    transient = A**2 * gamma2 / total + (1 - A) ** 2 * gamma1 / total - abs(B) ** 2
    return _unit(stationary + transient * decay + 2 * A * (1 - A) * math.exp(-total * total_time / 2))


def fidelity_from_moments(pair: EntangledPairCoeffs, moments: SecondMoments) -> float:
    """``E|A n00 + B n01 + B* n10 + (1 - A) n11|^2`` contracted through a moment table."""
    w = pair.overlap_weights()
    return _unit(np.einsum("ij,kl,ijkl->", w, w.conj(), moments.m).real)


def composed_chain_moments(kind: ChannelKind, couplings: ChainCouplings) -> SecondMoments:
    """Moments of the transmitted qubit's accumulated gate, composing segment by segment."""
    total = SecondMoments.identity()
    for row, interval in zip(couplings.gammas, couplings.intervals, strict=True):
        total = total.compose(second_moments(ChannelSpec(ChannelKind.parse(kind), row), interval))
    return total


def chain_fidelity(kind: ChannelKind, pair: EntangledPairCoeffs, couplings: ChainCouplings) -> float:
    """Transfer fidelity from the aggregate couplings, using the closed form for ``kind``."""
    kind = ChannelKind.parse(kind)
    if kind.n_gammas != couplings.n_components:
        raise ValueError(f"{kind.value} needs {kind.n_gammas} coupling components, got {couplings.n_components}")
    if kind.is_flip:
        return fidelity_chain_flip(kind, pair, couplings.total(0))
    if kind is ChannelKind.AMPLITUDE_DAMPING:
        return fidelity_chain_amplitude_damping(pair, couplings.total(0))
    if kind is ChannelKind.DEPOLARIZING:
        return fidelity_chain_depolarizing(
            pair, couplings.pair_total(0, 1), couplings.pair_total(0, 2), couplings.pair_total(1, 2)
        )
    if couplings.is_uniform() and couplings.gammas:
        gamma1, gamma2 = couplings.gammas[0]
        return fidelity_chain_gen_amp_damping(pair, gamma1, gamma2, couplings.total_time())
    return fidelity_from_moments(pair, composed_chain_moments(kind, couplings))


def chain_fidelity_with_stationary_noise(
    kind: ChannelKind,
    pair: EntangledPairCoeffs,
    couplings: ChainCouplings,
    stationary: Sequence[float],
    duration: float,
) -> float:
    """Transfer fidelity when qubit 0 also decoheres with couplings ``stationary`` for ``duration``.

    The two qubits see independent noise, so the pair evolves under the product of the stationary
    channel on qubit 0 and the composed chain channel on the transmitted qubit.
    """
    kind = ChannelKind.parse(kind)
    if duration < 0:
        raise ValueError(f"Duration must be non-negative, got {duration}")
    resting = ChannelSpec(kind, tuple(stationary))
    if duration == 0 or resting.is_noiseless():
        return chain_fidelity(kind, pair, couplings)
    if kind.n_gammas != couplings.n_components:
        raise ValueError(f"{kind.value} needs {kind.n_gammas} coupling components, got {couplings.n_components}")
    target = pair.state()
    rho = apply_one_qubit_channel(DensityMatrix.pure(target), second_moments(resting, duration).m, 0)
    rho = apply_one_qubit_channel(rho, composed_chain_moments(kind, couplings).m, 1)
    return _unit(fidelity_pure(rho, target))
