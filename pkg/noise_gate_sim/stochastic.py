"""Reproducible Wiener increments and the Euler-Maruyama integrator for the linear noise SDE.

Every random number is addressed by a ``StreamKey`` and a block index. The key becomes a Philox
key, the block index becomes the Philox counter, so a draw never depends on how many other draws
happened before it or on which worker produced it.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np
import numpy.typing as npt
from numpy.random import Philox
from scipy.linalg import expm
from scipy.special import ndtri

from .qstate import HERMITIAN_TOL, ComplexArray, GateMatrix, StateVector, as_gate

Drift = Literal["euler", "balanced"]

MAX_TRAJECTORY = 2**32
MAX_QUBIT = 2**16
MAX_COMPONENT = 2**16
STEP_ACCURACY = 0.01
"""Default step sizes keep (total coupling rate) * dt at or below this value."""

_U64 = 2**64
_INV_2_53 = 2.0**-53


@dataclass(frozen=True)
class StreamKey:
    """Address of one Wiener process: (master seed, trajectory, qubit, component)."""

    master_seed: int
    trajectory: int
    qubit: int
    channel_component: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.master_seed < _U64:
            raise ValueError(f"master_seed must be in [0, 2**64), got {self.master_seed}")
        if not 0 <= self.trajectory < MAX_TRAJECTORY:
            raise ValueError(f"trajectory must be in [0, {MAX_TRAJECTORY}), got {self.trajectory}")
        if not 0 <= self.qubit < MAX_QUBIT:
            raise ValueError(f"qubit must be in [0, {MAX_QUBIT}), got {self.qubit}")
        if not 0 <= self.channel_component < MAX_COMPONENT:
            raise ValueError(f"channel_component must be in [0, {MAX_COMPONENT}), got {self.channel_component}")

    def philox_key(self) -> int:
        """128-bit Philox key: seed in the low word, stream identity in the high word."""
        stream = (self.trajectory << 32) | (self.qubit << 16) | self.channel_component
        return self.master_seed | (stream << 64)

    def with_component(self, component: int) -> StreamKey:
        return replace(self, channel_component=component)


@dataclass(frozen=True)
class TimeGrid:
    t_start: float
    t_end: float
    n_steps: int

    def __post_init__(self) -> None:
        if self.t_end < self.t_start:
            raise ValueError(f"t_end ({self.t_end}) must not precede t_start ({self.t_start})")
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be positive, got {self.n_steps}")

    @classmethod
    def covering(cls, t_start: float, t_end: float, max_dt: float) -> TimeGrid:
        """Smallest uniform grid on [t_start, t_end] whose step does not exceed ``max_dt``."""
        if max_dt <= 0:
            raise ValueError(f"max_dt must be positive, got {max_dt}")
        n_steps = max(1, math.ceil((t_end - t_start) / max_dt - 1e-9))
        return cls(t_start, t_end, n_steps)

    @property
    def dt(self) -> float:
        return (self.t_end - self.t_start) / self.n_steps

    @property
    def duration(self) -> float:
        return self.t_end - self.t_start


def default_time_step(total_rate: float, duration: float) -> float:
    """Step with ``total_rate * dt <= STEP_ACCURACY``; a noiseless interval gets a single step."""
    if total_rate <= 0:
        return duration if duration > 0 else 1.0
    return STEP_ACCURACY / total_rate


def validate_generator(
    dim: int, hamiltonian: npt.ArrayLike, lindblads: Sequence[tuple[npt.ArrayLike, float]]
) -> tuple[GateMatrix, tuple[tuple[GateMatrix, float], ...]]:
    if dim < 1:
        raise ValueError(f"dim must be positive, got {dim}")
    ham = as_gate(hamiltonian, dim)
    if np.max(np.abs(ham - ham.conj().T)) > HERMITIAN_TOL:
        raise ValueError("Hamiltonian must be Hermitian")
    terms = []
    for operator, gamma in lindblads:
        if gamma < 0:
            raise ValueError(f"Coupling constants must be non-negative, got {gamma}")
        terms.append((as_gate(operator, dim), float(gamma)))
    return ham, tuple(terms)


@dataclass(frozen=True)
class SDESpec:
    """Generator of dpsi = [-iH dt + sum_k (i sqrt(g_k) L_k dW_k - g_k/2 L_k^dag L_k dt)] psi."""

    dim: int
    hamiltonian: GateMatrix
    lindblads: tuple[tuple[GateMatrix, float], ...] = field(default=())

    def __post_init__(self) -> None:
        ham, terms = validate_generator(self.dim, self.hamiltonian, self.lindblads)
        object.__setattr__(self, "hamiltonian", ham)
        object.__setattr__(self, "lindblads", terms)

    @classmethod
    def noise_only(cls, lindblads: Sequence[tuple[npt.ArrayLike, float]], dim: int = 2) -> SDESpec:
        return cls(dim, np.zeros((dim, dim), dtype=np.complex128), tuple((as_gate(op), g) for op, g in lindblads))

    def dissipator(self) -> GateMatrix:
        """``sum_k g_k L_k^dag L_k``."""
        total = np.zeros((self.dim, self.dim), dtype=np.complex128)
        for operator, gamma in self.lindblads:
            total += gamma * (operator.conj().T @ operator)
        return total

    def total_rate(self) -> float:
        return float(np.linalg.eigvalsh(self.dissipator())[-1]) if self.lindblads else 0.0


def standard_normals(key: StreamKey, start: int, count: int) -> npt.NDArray[np.float64]:
    """``count`` standard normals from counter blocks ``start, start+1, ...`` of the keyed stream."""
    if start < 0 or count < 0:
        raise ValueError(f"start and count must be non-negative, got {start}, {count}")
    if count == 0:
        return np.zeros(0)
    raw = Philox(key=key.philox_key(), counter=start).random_raw(4 * count)
    words = raw.reshape(count, 4)[:, 0]
    uniforms = ((words >> np.uint64(11)).astype(np.float64) + 0.5) * _INV_2_53
    return np.asarray(ndtri(uniforms), dtype=np.float64)


def sample_wiener_increment(key: StreamKey, step_index: int, dt: float) -> float:
    """Draw from Normal(0, dt); deterministic in ``(key, step_index)``."""
    if dt < 0:
        raise ValueError(f"dt must be non-negative, got {dt}")
    return math.sqrt(dt) * float(standard_normals(key, step_index, 1)[0])


def wiener_increments(key: StreamKey, grid: TimeGrid) -> npt.NDArray[np.float64]:
    """Increments of one Wiener path on ``grid``; element ``k`` equals ``sample_wiener_increment(key, k, dt)``."""
    return math.sqrt(grid.dt) * standard_normals(key, 0, grid.n_steps)


def sample_ito_exponential_integral(key: StreamKey, gamma: float, t0: float, t: float) -> float:
    """Draw ``sqrt(gamma) * int_{t0}^{t} exp(-gamma (s - t0) / 2) dW_s`` from its Gaussian law.

    The variance is ``1 - exp(-gamma (t - t0))`` by the Ito isometry.
    """
    if gamma < 0:
        raise ValueError(f"gamma must be non-negative, got {gamma}")
    if t < t0:
        raise ValueError(f"Interval end {t} precedes start {t0}")
    variance = -math.expm1(-gamma * (t - t0))
    return math.sqrt(variance) * float(standard_normals(key, 0, 1)[0])


def _step_factors(spec: SDESpec, dt: float, drift: Drift) -> tuple[GateMatrix, list[GateMatrix]]:
    identity = np.eye(spec.dim, dtype=np.complex128)
    dissipator = spec.dissipator()
    if drift == "euler":
        deterministic = identity + dt * (-1j * spec.hamiltonian - 0.5 * dissipator)
    elif drift == "balanced":
        weights, vectors = np.linalg.eigh(identity - dt * dissipator)
        if weights[0] < 0:
            raise ValueError(f"Step dt={dt} too large for the balanced drift (coupling rate {spec.total_rate()})")
        root = (vectors * np.sqrt(weights)) @ vectors.conj().T
        deterministic = expm(-1j * dt * spec.hamiltonian) @ root
    else:
        raise ValueError(f"Unknown drift {drift!r}")
    diffusion = [1j * math.sqrt(gamma) * operator for operator, gamma in spec.lindblads]
    return deterministic, diffusion


def _check_keys(spec: SDESpec, keys: Sequence[StreamKey]) -> None:
    if len(keys) != len(spec.lindblads):
        raise ValueError(f"Expected {len(spec.lindblads)} stream keys (one per Lindblad term), got {len(keys)}")


def sde_step_matrices(
    spec: SDESpec, grid: TimeGrid, keys: Sequence[StreamKey], drift: Drift = "euler"
) -> npt.NDArray[np.complex128]:
    """Per-step matrices ``M_k = A + sum_j B_j dW_j[k]``, shape ``(n_steps, dim, dim)``."""
    _check_keys(spec, keys)
    deterministic, diffusion = _step_factors(spec, grid.dt, drift)
    steps = np.broadcast_to(deterministic, (grid.n_steps, spec.dim, spec.dim)).copy()
    for key, factor in zip(keys, diffusion, strict=True):
        steps += wiener_increments(key, grid)[:, None, None] * factor
    return steps


def ordered_product(steps: npt.NDArray[np.complex128]) -> GateMatrix:
    """``steps[n-1] @ ... @ steps[0]`` by pairwise reduction in a fixed order."""
    mats = np.asarray(steps, dtype=np.complex128)
    if mats.shape[0] == 0:
        raise ValueError("Cannot multiply an empty sequence of matrices")
    while mats.shape[0] > 1:
        if mats.shape[0] % 2:
            mats = np.concatenate([mats, np.eye(mats.shape[1], dtype=np.complex128)[None]], axis=0)
        mats = mats[1::2] @ mats[0::2]
    return np.array(mats[0])


def sde_propagator(spec: SDESpec, grid: TimeGrid, keys: Sequence[StreamKey], drift: Drift = "euler") -> GateMatrix:
    """The random matrix N(t_end, t_start) of one discretized noise history."""
    return ordered_product(sde_step_matrices(spec, grid, keys, drift))


def integrate_sde(
    spec: SDESpec,
    psi0: StateVector,
    grid: TimeGrid,
    keys: Sequence[StreamKey],
    drift: Drift = "euler",
) -> StateVector:
    """Euler-Maruyama iteration of the linear SDE; the result is left unnormalized."""
    if psi0.dim != spec.dim:
        raise ValueError(f"Dimension mismatch: state has dimension {psi0.dim}, SDE has {spec.dim}")
    propagator = sde_propagator(spec, grid, keys, drift)
    return StateVector(psi0.n_qubits, propagator @ psi0.amps)


def scheme_moments(spec: SDESpec, grid: TimeGrid, drift: Drift = "euler") -> ComplexArray:
    """Exact ``E[N_ij conj(N_kl)]`` of the discretized propagator, indexed ``[i, j, k, l]``."""
    deterministic, diffusion = _step_factors(spec, grid.dt, drift)
    transfer = np.kron(deterministic, deterministic.conj())
    for factor in diffusion:
        transfer = transfer + grid.dt * np.kron(factor, factor.conj())
    total = np.linalg.matrix_power(transfer, grid.n_steps)
    d = spec.dim
    return np.asarray(total.reshape(d, d, d, d).transpose(0, 2, 1, 3))
