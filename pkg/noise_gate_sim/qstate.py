"""Pure states, density matrices and the gate kernels that act on them.

Qubit 0 is the most significant bit of a basis index, so ``|i0 i1 ... i_{n-1}>`` has index
``i0 * 2**(n-1) + ... + i_{n-1}``.
"""

from __future__ import annotations

from collections.abc import Iterable
from dataclasses import dataclass

import numpy as np
import numpy.typing as npt
from scipy.linalg import svdvals

ComplexArray = npt.NDArray[np.complex128]
GateMatrix = ComplexArray

HERMITIAN_TOL = 1e-10
NORMALIZATION_TOL = 1e-10

_SQRT_HALF = 1.0 / np.sqrt(2.0)

I2: GateMatrix = np.eye(2, dtype=np.complex128)
X: GateMatrix = np.array([[0, 1], [1, 0]], dtype=np.complex128)
Y: GateMatrix = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
Z: GateMatrix = np.array([[1, 0], [0, -1]], dtype=np.complex128)
H: GateMatrix = _SQRT_HALF * np.array([[1, 1], [1, -1]], dtype=np.complex128)
SIGMA_MINUS: GateMatrix = np.array([[0, 1], [0, 0]], dtype=np.complex128)  # |0><1|
SIGMA_PLUS: GateMatrix = np.array([[0, 0], [1, 0]], dtype=np.complex128)  # |1><0|
CNOT: GateMatrix = np.array(
    [[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]],
    dtype=np.complex128,
)
SWAP: GateMatrix = np.array(
    [[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]],
    dtype=np.complex128,
)

NAMED_GATES: dict[str, GateMatrix] = {"X": X, "Y": Y, "Z": Z, "H": H, "CNOT": CNOT, "SWAP": SWAP}


def _frozen(values: npt.ArrayLike) -> ComplexArray:
    array = np.array(values, dtype=np.complex128)
    array.setflags(write=False)
    return array


def as_gate(matrix: npt.ArrayLike, dim: int | None = None) -> GateMatrix:
    """Coerce ``matrix`` to a finite square complex matrix, optionally of a fixed dimension."""
    gate = np.asarray(matrix, dtype=np.complex128)
    if gate.ndim != 2 or gate.shape[0] != gate.shape[1]:
        raise ValueError(f"Gate must be a square matrix, got shape {gate.shape}")
    if dim is not None and gate.shape[0] != dim:
        raise ValueError(f"Gate must be {dim}x{dim}, got {gate.shape[0]}x{gate.shape[1]}")
    if not np.all(np.isfinite(gate)):
        raise ValueError("Gate matrix contains non-finite entries")
    return gate


@dataclass(frozen=True)
class StateVector:
    """Unnormalized pure state of ``n_qubits`` qubits."""

    n_qubits: int
    amps: ComplexArray

    def __post_init__(self) -> None:
        if self.n_qubits < 1:
            raise ValueError(f"n_qubits must be positive, got {self.n_qubits}")
        amps = np.asarray(self.amps, dtype=np.complex128).reshape(-1)
        if amps.size != 2**self.n_qubits:
            raise ValueError(f"Expected {2**self.n_qubits} amplitudes for {self.n_qubits} qubits, got {amps.size}")
        if not np.all(np.isfinite(amps)):
            raise ValueError("State vector contains non-finite amplitudes")
        object.__setattr__(self, "amps", _frozen(amps))

    @classmethod
    def from_amplitudes(cls, amps: npt.ArrayLike) -> StateVector:
        """Build a state from a flat amplitude sequence whose length is a power of two."""
        flat = np.asarray(amps, dtype=np.complex128).reshape(-1)
        n_qubits = int(flat.size).bit_length() - 1
        if flat.size < 2 or 2**n_qubits != flat.size:
            raise ValueError(f"Amplitude count must be a power of two >= 2, got {flat.size}")
        return cls(n_qubits, flat)

    @classmethod
    def basis(cls, n_qubits: int, index: int = 0) -> StateVector:
        if not 0 <= index < 2**n_qubits:
            raise ValueError(f"Basis index {index} out of range for {n_qubits} qubits")
        amps = np.zeros(2**n_qubits, dtype=np.complex128)
        amps[index] = 1.0
        return cls(n_qubits, amps)

    @property
    def dim(self) -> int:
        return int(self.amps.size)

    def norm2(self) -> float:
        return float(np.vdot(self.amps, self.amps).real)

    def kron(self, other: StateVector) -> StateVector:
        """Tensor product with ``self`` on the leading (more significant) qubits."""
        return StateVector(self.n_qubits + other.n_qubits, np.kron(self.amps, other.amps))


@dataclass(frozen=True)
class DensityMatrix:
    """Operator on ``n_qubits`` qubits; Hermiticity and positivity are checked by callers, not enforced."""

    n_qubits: int
    entries: ComplexArray

    def __post_init__(self) -> None:
        if self.n_qubits < 1:
            raise ValueError(f"n_qubits must be positive, got {self.n_qubits}")
        dim = 2**self.n_qubits
        entries = np.asarray(self.entries, dtype=np.complex128)
        if entries.shape != (dim, dim):
            raise ValueError(f"Expected a {dim}x{dim} matrix for {self.n_qubits} qubits, got {entries.shape}")
        if not np.all(np.isfinite(entries)):
            raise ValueError("Density matrix contains non-finite entries")
        object.__setattr__(self, "entries", _frozen(entries))

    @classmethod
    def zeros(cls, n_qubits: int) -> DensityMatrix:
        dim = 2**n_qubits
        return cls(n_qubits, np.zeros((dim, dim), dtype=np.complex128))

    @classmethod
    def from_matrix(cls, matrix: npt.ArrayLike) -> DensityMatrix:
        entries = np.asarray(matrix, dtype=np.complex128)
        n_qubits = int(entries.shape[0]).bit_length() - 1
        return cls(n_qubits, entries)

    @classmethod
    def pure(cls, state: StateVector) -> DensityMatrix:
        return cls(state.n_qubits, np.outer(state.amps, state.amps.conj()))

    @property
    def dim(self) -> int:
        return int(self.entries.shape[0])

    def trace(self) -> complex:
        return complex(np.trace(self.entries))

    def hermitian_residual(self) -> float:
        return float(np.max(np.abs(self.entries - self.entries.conj().T)))

    def min_eigenvalue(self) -> float:
        hermitian = 0.5 * (self.entries + self.entries.conj().T)
        return float(np.linalg.eigvalsh(hermitian)[0])


def _check_qubit(index: int, n_qubits: int) -> None:
    if not 0 <= index < n_qubits:
        raise ValueError(f"Qubit index {index} out of range for {n_qubits} qubits")


def apply_one_qubit_gate(state: StateVector, g: npt.ArrayLike, target: int) -> StateVector:
    """Apply a 2x2 gate to qubit ``target``; the other qubits are untouched."""
    gate = as_gate(g, 2)
    _check_qubit(target, state.n_qubits)
    # (high, target, low) view: each (high, low) column is one of the 2**(n-1) index pairs
    view = state.amps.reshape(2**target, 2, 2 ** (state.n_qubits - target - 1))
    updated = np.einsum("ab,ibj->iaj", gate, view)
    return StateVector(state.n_qubits, updated.reshape(-1))


def apply_two_qubit_gate(state: StateVector, g: npt.ArrayLike, q_hi: int, q_lo: int) -> StateVector:
    """Apply a 4x4 gate to the ordered pair ``(q_hi, q_lo)``; ``q_hi`` is the leading factor."""
    gate = as_gate(g, 4)
    _check_qubit(q_hi, state.n_qubits)
    _check_qubit(q_lo, state.n_qubits)
    if q_hi == q_lo:
        raise ValueError(f"Two-qubit gate needs distinct qubits, got {q_hi} twice")
    n = state.n_qubits
    tensor = np.moveaxis(state.amps.reshape((2,) * n), (q_hi, q_lo), (0, 1))
    rest = tensor.shape[2:]
    updated = (gate @ tensor.reshape(4, -1)).reshape((2, 2, *rest))
    return StateVector(n, np.moveaxis(updated, (0, 1), (q_hi, q_lo)).reshape(-1))


def outer_accumulate(acc: DensityMatrix, state: StateVector, weight: float = 1.0) -> DensityMatrix:
    """Return ``acc + weight * |state><state|``."""
    if acc.n_qubits != state.n_qubits:
        raise ValueError(f"Dimension mismatch: accumulator has {acc.n_qubits} qubits, state has {state.n_qubits}")
    if weight < 0:
        raise ValueError(f"Weight must be non-negative, got {weight}")
    if weight == 0:
        return acc
    return DensityMatrix(acc.n_qubits, acc.entries + weight * np.outer(state.amps, state.amps.conj()))


def _normalize_keep(keep: Iterable[int], n_qubits: int) -> tuple[int, ...]:
    kept = tuple(sorted(set(keep)))
    if not kept:
        raise ValueError("keep must name at least one qubit")
    for qubit in kept:
        _check_qubit(qubit, n_qubits)
    return kept


def partial_trace(dm: DensityMatrix, keep: Iterable[int]) -> DensityMatrix:
    """Trace out every qubit not in ``keep``; kept qubits stay in ascending order."""
    n = dm.n_qubits
    kept = _normalize_keep(keep, n)
    if len(kept) == n:
        return dm
    rows = list(range(n))
    cols = [n + q if q in kept else q for q in range(n)]
    out = list(kept) + [n + q for q in kept]
    reduced = np.einsum(dm.entries.reshape((2,) * (2 * n)), rows + cols, out)
    dim = 2 ** len(kept)
    return DensityMatrix(len(kept), reduced.reshape(dim, dim))


def reduced_projector(state: StateVector, keep: Iterable[int]) -> DensityMatrix:
    """``partial_trace(|state><state|, keep)`` without forming the full projector."""
    n = state.n_qubits
    kept = _normalize_keep(keep, n)
    traced = [q for q in range(n) if q not in kept]
    tensor = np.transpose(state.amps.reshape((2,) * n), list(kept) + traced)
    block = tensor.reshape(2 ** len(kept), -1)
    return DensityMatrix(len(kept), block @ block.conj().T)


def fidelity_pure(dm: DensityMatrix, target: StateVector) -> float:
    """``<target|dm|target>`` for a normalized target, clamped at zero."""
    if dm.n_qubits != target.n_qubits:
        raise ValueError(f"Dimension mismatch: density matrix has {dm.n_qubits} qubits, target has {target.n_qubits}")
    if abs(target.norm2() - 1.0) > NORMALIZATION_TOL:
        raise ValueError(f"Target state must be normalized, norm^2 = {target.norm2()}")
    value = np.vdot(target.amps, dm.entries @ target.amps).real
    return max(float(value), 0.0)


def trace_distance(a: DensityMatrix, b: DensityMatrix) -> float:
    if a.n_qubits != b.n_qubits:
        raise ValueError(f"Dimension mismatch: {a.n_qubits} vs {b.n_qubits} qubits")
    return 0.5 * float(np.sum(svdvals(a.entries - b.entries)))


def apply_unitary_to_density(dm: DensityMatrix, g: npt.ArrayLike, qubits: tuple[int, ...]) -> DensityMatrix:
    """Conjugate ``dm`` by a one- or two-qubit gate acting on ``qubits``."""
    gate = as_gate(g, 2 ** len(qubits))
    n = dm.n_qubits
    for qubit in qubits:
        _check_qubit(qubit, n)
    if len(set(qubits)) != len(qubits):
        raise ValueError(f"Gate operands must be distinct, got {qubits}")
    k = len(qubits)
    tensor = dm.entries.reshape((2,) * (2 * n))
    gate_t = gate.reshape((2,) * (2 * k))
    # rows: g . rho ; columns: rho . g^dagger
    row_axes = list(qubits)
    tensor = np.moveaxis(np.tensordot(gate_t, tensor, axes=(list(range(k, 2 * k)), row_axes)), list(range(k)), row_axes)
    col_axes = [n + q for q in qubits]
    tensor = np.moveaxis(
        np.tensordot(gate_t.conj(), tensor, axes=(list(range(k, 2 * k)), col_axes)), list(range(k)), col_axes
    )
    dim = 2**n
    return DensityMatrix(n, tensor.reshape(dim, dim))


def apply_one_qubit_channel(dm: DensityMatrix, moments: npt.ArrayLike, target: int) -> DensityMatrix:
    """Apply the channel ``rho -> E[N rho N^dagger]`` given by a second-moment table ``m[i,j,k,l]``."""
    table = np.asarray(moments, dtype=np.complex128)
    if table.shape != (2, 2, 2, 2):
        raise ValueError(f"Moment table must have shape (2, 2, 2, 2), got {table.shape}")
    n = dm.n_qubits
    _check_qubit(target, n)
    tensor = dm.entries.reshape((2,) * (2 * n))
    updated = np.tensordot(table, tensor, axes=([1, 3], [target, n + target]))
    # updated axes: (i, k, remaining rows..., remaining cols...)
    updated = np.moveaxis(updated, (0, 1), (target, n + target))
    dim = 2**n
    return DensityMatrix(n, updated.reshape(dim, dim))
