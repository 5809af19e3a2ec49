"""Master-equation reference solutions: fixed-step RK4 and the closed forms of the combined channels."""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt

from .channels import BASIS_OPERATORS, ChannelKind, ChannelSpec, SecondMoments, moments_from_master_solution
from .qstate import ComplexArray, DensityMatrix, GateMatrix, as_gate
from .stochastic import validate_generator


@dataclass(frozen=True)
class LindbladSpec:
    """drho/dt = -i[H, rho] + sum_k g_k (L_k rho L_k^dag - 1/2 {L_k^dag L_k, rho})."""

    dim: int
    hamiltonian: GateMatrix
    lindblads: tuple[tuple[GateMatrix, float], ...] = field(default=())

    def __post_init__(self) -> None:
        ham, terms = validate_generator(self.dim, self.hamiltonian, self.lindblads)
        object.__setattr__(self, "hamiltonian", ham)
        object.__setattr__(self, "lindblads", terms)

    @classmethod
    def from_channel(cls, spec: ChannelSpec) -> LindbladSpec:
        return cls(2, np.zeros((2, 2), dtype=np.complex128), tuple(spec.lindblad_terms()))

    @classmethod
    def noise_only(cls, lindblads: Sequence[tuple[npt.ArrayLike, float]], dim: int = 2) -> LindbladSpec:
        return cls(dim, np.zeros((dim, dim), dtype=np.complex128), tuple((as_gate(op), g) for op, g in lindblads))

    def max_gamma(self) -> float:
        return max((gamma for _, gamma in self.lindblads), default=0.0)

    def rhs(self, rho: ComplexArray) -> ComplexArray:
        out = -1j * (self.hamiltonian @ rho - rho @ self.hamiltonian)
        for operator, gamma in self.lindblads:
            if gamma == 0:
                continue
            dagger = operator.conj().T
            jump = dagger @ operator
            out = out + gamma * (operator @ rho @ dagger - 0.5 * (jump @ rho + rho @ jump))
        return out


def default_rk4_step(spec: LindbladSpec, T: float) -> float:
    """``min(0.01 / max gamma, T / 100)``."""
    candidates = [T / 100.0] if T > 0 else []
    if spec.max_gamma() > 0:
        candidates.append(0.01 / spec.max_gamma())
    return min(candidates) if candidates else 1.0


def rk4_evolve(spec: LindbladSpec, rho0: DensityMatrix, T: float, dt: float | None = None) -> DensityMatrix:
    """Classical fixed-step RK4; the step is shortened so the last one lands on ``T`` exactly."""
    if T < 0:
        raise ValueError(f"Evolution time must be non-negative, got {T}")
    step = default_rk4_step(spec, T) if dt is None else dt
    if step <= 0:
        raise ValueError(f"dt must be positive, got {step}")
    if rho0.dim != spec.dim:
        raise ValueError(f"Dimension mismatch: rho0 has dimension {rho0.dim}, spec has {spec.dim}")
    if T == 0:
        return rho0
    n_steps = max(1, math.ceil(T / step - 1e-9))
    h = T / n_steps
    rho = np.array(rho0.entries)
    for _ in range(n_steps):
        k1 = spec.rhs(rho)
        k2 = spec.rhs(rho + 0.5 * h * k1)
        k3 = spec.rhs(rho + 0.5 * h * k2)
        k4 = spec.rhs(rho + h * k3)
        rho = rho + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return DensityMatrix(rho0.n_qubits, rho)


def closed_form_rho(spec: ChannelSpec, rho0: DensityMatrix, T: float) -> DensityMatrix:
    """Explicit solution for the depolarizing and generalized amplitude damping master equations."""
    if rho0.dim != 2:
        raise ValueError(f"Closed forms are single-qubit, got dimension {rho0.dim}")
    if T < 0:
        raise ValueError(f"Evolution time must be non-negative, got {T}")
    r = rho0.entries
    if spec.kind is ChannelKind.DEPOLARIZING:
        g1, g2, g3 = spec.gammas
        e12 = math.exp(-2 * T * (g1 + g2))
        e13 = math.exp(-2 * T * (g1 + g3))
        e23 = math.exp(-2 * T * (g2 + g3))
        r00 = 0.5 * (r[0, 0] * (1 + e12) + r[1, 1] * (1 - e12))
        r11 = 0.5 * (r[1, 1] * (1 + e12) + r[0, 0] * (1 - e12))
        r01 = 0.5 * (r[0, 1] * (e13 + e23) + r[1, 0] * (e23 - e13))
        r10 = 0.5 * (r[1, 0] * (e13 + e23) + r[0, 1] * (e23 - e13))
    elif spec.kind is ChannelKind.GENERALIZED_AMPLITUDE_DAMPING:
        g1, g2 = spec.gammas
        total = g1 + g2
        if total == 0:
            return rho0
        decay = math.exp(-total * T)
        r00 = (r[0, 0] * (g1 + g2 * decay) + r[1, 1] * g1 * (1 - decay)) / total
        r11 = (r[0, 0] * g2 * (1 - decay) + r[1, 1] * (g2 + g1 * decay)) / total
        coherence = math.exp(-0.5 * total * T)
        r01 = r[0, 1] * coherence
        r10 = r[1, 0] * coherence
    else:
        raise ValueError(f"No closed-form solution for {spec.kind.value}")
    return DensityMatrix(1, np.array([[r00, r01], [r10, r11]], dtype=np.complex128))


def moments_from_lindblad(spec: ChannelSpec, T: float, dt: float | None = None) -> SecondMoments:
    """Second moments by RK4-propagating the four basis operators and comparing coefficients."""
    lindblad = LindbladSpec.from_channel(spec)
    images = [rk4_evolve(lindblad, DensityMatrix(1, basis), T, dt) for basis in BASIS_OPERATORS]
    return moments_from_master_solution(images, T)
