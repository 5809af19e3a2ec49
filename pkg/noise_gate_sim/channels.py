"""Noise channels: gate samplers, second-moment tables and coefficient comparison."""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass
from enum import Enum

import numpy as np
import numpy.typing as npt

from .qstate import I2, SIGMA_MINUS, SIGMA_PLUS, ComplexArray, DensityMatrix, GateMatrix, X, Y, Z
from .stochastic import (
    Drift,
    SDESpec,
    StreamKey,
    TimeGrid,
    default_time_step,
    sample_ito_exponential_integral,
    sample_wiener_increment,
    scheme_moments,
    sde_propagator,
)

MOMENT_TOL = 1e-10
CONSISTENCY_TOL = 1e-8


class ChannelKind(str, Enum):
    BIT_FLIP = "bit_flip"
    PHASE_FLIP = "phase_flip"
    BIT_PHASE_FLIP = "bit_phase_flip"
    AMPLITUDE_DAMPING = "amplitude_damping"
    DEPOLARIZING = "depolarizing"
    GENERALIZED_AMPLITUDE_DAMPING = "generalized_amplitude_damping"

    @property
    def n_gammas(self) -> int:
        return {ChannelKind.DEPOLARIZING: 3, ChannelKind.GENERALIZED_AMPLITUDE_DAMPING: 2}.get(self, 1)

    @property
    def is_flip(self) -> bool:
        return self in FLIP_AXES

    @classmethod
    def parse(cls, name: str | ChannelKind) -> ChannelKind:
        """Accept enum values, member names and common spellings (``BitFlip``, ``bit-flip``)."""
        if isinstance(name, ChannelKind):
            return name
        token = name.strip().replace("-", "").replace("_", "").lower()
        for kind in cls:
            if kind.value.replace("_", "") == token:
                return kind
        raise ValueError(f"Unknown channel kind {name!r}; choose from {', '.join(k.value for k in cls)}")


FLIP_AXES: dict[ChannelKind, GateMatrix] = {
    ChannelKind.BIT_FLIP: X,
    ChannelKind.PHASE_FLIP: Z,
    ChannelKind.BIT_PHASE_FLIP: Y,
}


@dataclass(frozen=True)
class ChannelSpec:
    """Channel kind plus its coupling constants (1/time).

    Depolarizing takes (g_x, g_y, g_z); generalized amplitude damping takes (g_decay, g_excite)
    for sigma^- and sigma^+.
    """

    kind: ChannelKind
    gammas: tuple[float, ...]

    def __post_init__(self) -> None:
        kind = ChannelKind.parse(self.kind)
        gammas = tuple(float(g) for g in self.gammas)
        if len(gammas) != kind.n_gammas:
            raise ValueError(f"{kind.value} takes {kind.n_gammas} coupling constant(s), got {len(gammas)}")
        if any(g < 0 or not math.isfinite(g) for g in gammas):
            raise ValueError(f"Coupling constants must be finite and non-negative, got {gammas}")
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "gammas", gammas)

    @classmethod
    def of(cls, kind: str | ChannelKind, gamma: float | Sequence[float]) -> ChannelSpec:
        """Build a channel; a scalar ``gamma`` is used for every component of the kind."""
        parsed = ChannelKind.parse(kind)
        gammas = (float(gamma),) * parsed.n_gammas if isinstance(gamma, int | float) else tuple(gamma)
        return cls(parsed, gammas)

    def lindblad_terms(self) -> list[tuple[GateMatrix, float]]:
        if self.kind.is_flip:
            return [(FLIP_AXES[self.kind], self.gammas[0])]
        if self.kind is ChannelKind.AMPLITUDE_DAMPING:
            return [(SIGMA_MINUS, self.gammas[0])]
        if self.kind is ChannelKind.DEPOLARIZING:
            return list(zip((X, Y, Z), self.gammas, strict=True))
        return list(zip((SIGMA_MINUS, SIGMA_PLUS), self.gammas, strict=True))

    def sde_spec(self) -> SDESpec:
        return SDESpec.noise_only(self.lindblad_terms())

    @property
    def n_components(self) -> int:
        return len(self.lindblad_terms())

    @property
    def has_closed_form_sampler(self) -> bool:
        return self.kind.is_flip or self.kind is ChannelKind.AMPLITUDE_DAMPING

    def total_rate(self) -> float:
        return self.sde_spec().total_rate()

    def is_noiseless(self) -> bool:
        return all(g == 0 for g in self.gammas)

    def to_dict(self) -> dict[str, object]:
        return {"kind": self.kind.value, "gammas": list(self.gammas)}

    @classmethod
    def from_dict(cls, data: dict[str, object]) -> ChannelSpec:
        gammas = data["gammas"]
        if not isinstance(gammas, list | tuple):
            raise ValueError("Channel 'gammas' must be a list")
        return cls(ChannelKind.parse(str(data["kind"])), tuple(float(g) for g in gammas))


@dataclass(frozen=True)
class NoiseGateSample:
    matrix: GateMatrix
    interval: tuple[float, float]

    def __post_init__(self) -> None:
        matrix = np.asarray(self.matrix, dtype=np.complex128)
        if matrix.shape != (2, 2) or not np.all(np.isfinite(matrix)):
            raise ValueError("Noise gate must be a finite 2x2 matrix")
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    @property
    def duration(self) -> float:
        return self.interval[1] - self.interval[0]


@dataclass(frozen=True)
class SecondMoments:
    """Table ``m[i, j, k, l] = E[n_ij conj(n_kl)]`` of a 2x2 noise gate over an interval of length ``T``."""

    m: ComplexArray
    T: float

    def __post_init__(self) -> None:
        table = np.asarray(self.m, dtype=np.complex128)
        if table.shape != (2, 2, 2, 2):
            raise ValueError(f"Moment table must have shape (2, 2, 2, 2), got {table.shape}")
        table.setflags(write=False)
        object.__setattr__(self, "m", table)

    @classmethod
    def identity(cls, T: float = 0.0) -> SecondMoments:
        return cls(np.einsum("ij,kl->ijkl", I2, I2), T)

    def trace_residual(self) -> float:
        """Largest deviation of ``sum_i m[i, j, i, j']`` from ``delta_{j j'}``."""
        return float(np.max(np.abs(np.einsum("ijil->jl", self.m) - I2)))

    def hermitian_residual(self) -> float:
        return float(np.max(np.abs(self.m - self.m.transpose(2, 3, 0, 1).conj())))

    def compose(self, later: SecondMoments) -> SecondMoments:
        """Moments of ``N_later @ N_self`` for independent gates."""
        return SecondMoments(np.einsum("iakb,ajbl->ijkl", later.m, self.m), self.T + later.T)

    def apply(self, rho: npt.ArrayLike) -> ComplexArray:
        """Channel action ``E[N rho N^dagger]`` on a 2x2 operator."""
        return np.asarray(np.einsum("ijkl,jl->ik", self.m, np.asarray(rho, dtype=np.complex128)))

    def allclose(self, other: SecondMoments, atol: float = MOMENT_TOL) -> bool:
        return bool(np.allclose(self.m, other.m, rtol=0.0, atol=atol))


def _check_interval(t0: float, t: float) -> None:
    if t < t0:
        raise ValueError(f"Interval end {t} precedes start {t0}")


def sample_flip_gate(kind: ChannelKind, gamma: float, key: StreamKey, t0: float, t: float) -> NoiseGateSample:
    """``cos(sqrt(g) dW) I + i sin(sqrt(g) dW) sigma`` with ``dW ~ Normal(0, t - t0)``."""
    kind = ChannelKind.parse(kind)
    if not kind.is_flip:
        raise ValueError(f"{kind.value} is not a flip channel")
    if gamma < 0:
        raise ValueError(f"gamma must be non-negative, got {gamma}")
    _check_interval(t0, t)
    angle = math.sqrt(gamma) * sample_wiener_increment(key, 0, t - t0)
    matrix = math.cos(angle) * I2 + 1j * math.sin(angle) * FLIP_AXES[kind]
    return NoiseGateSample(matrix, (t0, t))


def sample_amplitude_damping_gate(gamma: float, key: StreamKey, t0: float, t: float) -> NoiseGateSample:
    """Upper-triangular gate ``[[1, i phi], [0, exp(-g (t - t0) / 2)]]``."""
    _check_interval(t0, t)
    phi = sample_ito_exponential_integral(key, gamma, t0, t)
    matrix = np.array([[1.0, 1j * phi], [0.0, math.exp(-0.5 * gamma * (t - t0))]], dtype=np.complex128)
    return NoiseGateSample(matrix, (t0, t))


def _sampler_grid(sde: SDESpec, t0: float, t: float, dt: float | None) -> TimeGrid:
    step = dt if dt is not None else default_time_step(sde.total_rate(), t - t0)
    return TimeGrid.covering(t0, t, step)


def sample_noise_gate(
    spec: ChannelSpec,
    key: StreamKey,
    t0: float,
    t: float,
    dt: float | None = None,
    drift: Drift = "euler",
) -> NoiseGateSample:
    """Sample ``N(t, t0)`` for any channel.

    Flip and amplitude-damping channels use their closed forms; the others integrate the SDE
    (Euler-Maruyama unless ``drift`` says otherwise) with component ``c`` of the channel drawing from
    ``key.with_component(key.channel_component + c)``.
    """
    _check_interval(t0, t)
    if spec.kind.is_flip:
        return sample_flip_gate(spec.kind, spec.gammas[0], key, t0, t)
    if spec.kind is ChannelKind.AMPLITUDE_DAMPING:
        return sample_amplitude_damping_gate(spec.gammas[0], key, t0, t)
    if t == t0 or spec.is_noiseless():
        return NoiseGateSample(I2, (t0, t))
    sde = spec.sde_spec()
    grid = _sampler_grid(sde, t0, t, dt)
    keys = [key.with_component(key.channel_component + c) for c in range(spec.n_components)]
    return NoiseGateSample(sde_propagator(sde, grid, keys, drift), (t0, t))


def _flip_moments(kind: ChannelKind, gamma_t: float) -> ComplexArray:
    p = 0.5 * (1.0 + math.exp(-2.0 * gamma_t))
    q = 1.0 - p
    m = np.zeros((2, 2, 2, 2), dtype=np.complex128)
    if kind is ChannelKind.BIT_FLIP:
        # [[c, i s], [i s, c]]
        for i, j, k, l in [(0, 0, 0, 0), (0, 0, 1, 1), (1, 1, 0, 0), (1, 1, 1, 1)]:
            m[i, j, k, l] = p
        for i, j, k, l in [(0, 1, 0, 1), (0, 1, 1, 0), (1, 0, 0, 1), (1, 0, 1, 0)]:
            m[i, j, k, l] = q
    elif kind is ChannelKind.BIT_PHASE_FLIP:
        # [[c, s], [-s, c]]
        for i, j, k, l in [(0, 0, 0, 0), (0, 0, 1, 1), (1, 1, 0, 0), (1, 1, 1, 1)]:
            m[i, j, k, l] = p
        m[0, 1, 0, 1] = m[1, 0, 1, 0] = q
        m[0, 1, 1, 0] = m[1, 0, 0, 1] = -q
    else:
        # diag(exp(i theta), exp(-i theta))
        m[0, 0, 0, 0] = m[1, 1, 1, 1] = 1.0
        m[0, 0, 1, 1] = m[1, 1, 0, 0] = p - q
    return m


def _depolarizing_moments(gammas: tuple[float, ...], T: float) -> ComplexArray:
    g1, g2, g3 = gammas
    e12 = math.exp(-2.0 * T * (g1 + g2))
    e13 = math.exp(-2.0 * T * (g1 + g3))
    e23 = math.exp(-2.0 * T * (g2 + g3))
    m = np.zeros((2, 2, 2, 2), dtype=np.complex128)
    m[0, 0, 0, 0] = m[1, 1, 1, 1] = 0.5 * (1.0 + e12)
    m[0, 1, 0, 1] = m[1, 0, 1, 0] = 0.5 * (1.0 - e12)
    m[0, 0, 1, 1] = m[1, 1, 0, 0] = 0.5 * (e23 + e13)
    m[0, 1, 1, 0] = m[1, 0, 0, 1] = 0.5 * (e23 - e13)
    return m


def _gad_moments(gammas: tuple[float, ...], T: float, *, printed: bool = False) -> ComplexArray:
    g1, g2 = gammas
    total = g1 + g2
    m = np.zeros((2, 2, 2, 2), dtype=np.complex128)
    if total == 0:
        m[0, 0, 0, 0] = m[1, 1, 1, 1] = m[0, 0, 1, 1] = m[1, 1, 0, 0] = 1.0
        return m
    decay = math.exp(-total * T)
    m[0, 0, 0, 0] = (g1 + g2 * decay) / total
    m[1, 1, 1, 1] = (g2 + g1 * decay) / total
    m[0, 0, 1, 1] = m[1, 1, 0, 0] = math.exp(-0.5 * total * T)
    if printed:
        m[0, 1, 0, 1] = g1 * decay / total
        m[1, 0, 1, 0] = g2 * decay / total
    else:
        m[0, 1, 0, 1] = -g1 * math.expm1(-total * T) / total
        m[1, 0, 1, 0] = -g2 * math.expm1(-total * T) / total
    return m


def second_moments(spec: ChannelSpec, T: float) -> SecondMoments:
    """Exact moment table of the channel's noise gate over an interval of length ``T``."""
    if T < 0:
        raise ValueError(f"Interval length must be non-negative, got {T}")
    if spec.kind.is_flip:
        return SecondMoments(_flip_moments(spec.kind, spec.gammas[0] * T), T)
    if spec.kind is ChannelKind.AMPLITUDE_DAMPING:
        return SecondMoments(_gad_moments((spec.gammas[0], 0.0), T), T)
    if spec.kind is ChannelKind.DEPOLARIZING:
        return SecondMoments(_depolarizing_moments(spec.gammas, T), T)
    return SecondMoments(_gad_moments(spec.gammas, T), T)


def sampler_moments(spec: ChannelSpec, T: float, dt: float | None = None, drift: Drift = "euler") -> SecondMoments:
    """Exact moments of what ``sample_noise_gate`` draws over an interval of length ``T``.

    Equal to ``second_moments`` for closed-form samplers; for SDE-sampled channels this is the
    discretized scheme, which differs from the channel by the scheme's weak error.
    """
    if spec.has_closed_form_sampler or T == 0 or spec.is_noiseless():
        return second_moments(spec, T)
    sde = spec.sde_spec()
    return SecondMoments(scheme_moments(sde, _sampler_grid(sde, 0.0, T, dt), drift), T)


def printed_generalized_amplitude_damping_moments(gammas: tuple[float, float], T: float) -> SecondMoments:
    """The uncorrected table with ``g e^{-Gamma T} / Gamma`` off-diagonal magnitudes.

    It violates the trace identity; kept as a regression fixture for the validation suite.
    """
    return SecondMoments(_gad_moments(tuple(gammas), T, printed=True), T)


BASIS_OPERATORS: tuple[ComplexArray, ...] = tuple(
    np.outer(np.eye(2)[a], np.eye(2)[b]).astype(np.complex128) for a, b in [(0, 0), (0, 1), (1, 0), (1, 1)]
)
"""|0><0|, |0><1|, |1><0|, |1><1| in the order ``moments_from_master_solution`` expects."""


def moments_from_master_solution(
    rho_of_basis: Sequence[DensityMatrix | npt.ArrayLike], T: float = 0.0
) -> SecondMoments:
    """Identify ``m[i, j, k, l] = <i| Phi(|j><l|) |k>`` from the images of the four basis operators."""
    if len(rho_of_basis) != 4:
        raise ValueError(f"Expected images of 4 basis operators, got {len(rho_of_basis)}")
    images = [
        np.asarray(img.entries if isinstance(img, DensityMatrix) else img, dtype=np.complex128) for img in rho_of_basis
    ]
    if any(img.shape != (2, 2) for img in images):
        raise ValueError("Basis images must be 2x2 operators")
    e00, e01, e10, e11 = images
    residual = max(
        float(np.max(np.abs(e10 - e01.conj().T))),
        float(np.max(np.abs(e00 - e00.conj().T))),
        float(np.max(np.abs(e11 - e11.conj().T))),
    )
    if residual > CONSISTENCY_TOL:
        raise ValueError(
            f"Basis images are not the images of a Hermiticity-preserving linear map (residual {residual:.3g})"
        )
    m = np.zeros((2, 2, 2, 2), dtype=np.complex128)
    for (j, l), image in zip([(0, 0), (0, 1), (1, 0), (1, 1)], images, strict=True):
        m[:, j, :, l] = image
    return SecondMoments(m, T)
