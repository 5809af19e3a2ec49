"""Ensemble averages over noise trajectories.

Trajectories are split into fixed-size chunks, so chunk boundaries never depend on the number of
workers. Each chunk keeps running means and squared-deviation sums (Welford); chunks are merged in
index order with Chan's pairwise update, which makes the result bitwise reproducible.
"""

from __future__ import annotations

import math
from collections.abc import Iterable
from concurrent.futures import ProcessPoolExecutor
from concurrent.futures.process import BrokenProcessPool
from dataclasses import dataclass
from typing import Literal

import numpy as np
import numpy.typing as npt
from rich.console import Console

from .circuit import CircuitIR, Scenario, chain_factors, run_trajectory
from .qstate import NORMALIZATION_TOL, DensityMatrix, StateVector, reduced_projector
from .stochastic import STEP_ACCURACY

console = Console(stderr=True)

CHUNK_SIZE = 256

Mode = Literal["circuit", "pair", "bulk"]


class TrajectoryError(RuntimeError):
    """A trajectory produced an invalid state."""

    def __init__(self, message: str, trajectory: int | None = None) -> None:
        super().__init__(message, trajectory)
        self.message = message
        self.trajectory = trajectory

    def __str__(self) -> str:
        return self.message


@dataclass(frozen=True)
class EnsembleConfig:
    n_trajectories: int = 10_000
    master_seed: int = 0
    dt: float | None = None
    n_workers_hint: int = 1

    def __post_init__(self) -> None:
        if self.n_trajectories < 1:
            raise ValueError(f"n_trajectories must be at least 1, got {self.n_trajectories}")
        if self.dt is not None and self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError(f"master_seed must be in [0, 2**64), got {self.master_seed}")


@dataclass(frozen=True)
class Estimate:
    value: float
    std_error: float
    n: int

    def within(self, expected: float, n_se: float = 3.0, atol: float = 0.0) -> bool:
        return abs(self.value - expected) <= n_se * self.std_error + atol


@dataclass(frozen=True)
class EnsembleResult:
    density: DensityMatrix
    density_se: npt.NDArray[np.float64]
    norm: Estimate
    fidelity: Estimate | None

    def density_se_norm(self) -> float:
        """Frobenius norm of the per-entry standard errors."""
        return float(np.sqrt(np.sum(self.density_se**2)))


@dataclass
class _Moments:
    """Running mean and squared-deviation sum of an array-valued sample."""

    count: int
    mean: npt.NDArray[np.complex128]
    m2: npt.NDArray[np.float64]

    @classmethod
    def empty(cls, shape: tuple[int, ...]) -> _Moments:
        return cls(0, np.zeros(shape, dtype=np.complex128), np.zeros(shape, dtype=np.float64))

    def push(self, value: npt.NDArray[np.complex128]) -> None:
        self.count += 1
        delta = value - self.mean
        self.mean = self.mean + delta / self.count
        self.m2 = self.m2 + (delta * np.conj(value - self.mean)).real

    def merge(self, other: _Moments) -> _Moments:
        if other.count == 0:
            return self
        if self.count == 0:
            return other
        count = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * (other.count / count)
        m2 = self.m2 + other.m2 + np.abs(delta) ** 2 * (self.count * other.count / count)
        return _Moments(count, mean, m2)

    def std_error(self) -> npt.NDArray[np.float64]:
        if self.count < 2:
            return np.zeros_like(self.m2)
        return np.sqrt(np.maximum(self.m2, 0.0) / (self.count - 1) / self.count)


@dataclass(frozen=True)
class _Job:
    mode: Mode
    circuit: CircuitIR
    input_state: StateVector
    keep: tuple[int, ...]
    target: StateVector | None
    master_seed: int
    dt: float | None
    scenario: Scenario | None = None

    def final_state(self, trajectory: int) -> StateVector:
        if self.mode == "circuit":
            return run_trajectory(self.circuit, self.input_state, self.master_seed, trajectory, self.dt)
        if self.scenario is None:
            raise ValueError(f"Mode {self.mode!r} needs a chain scenario")
        psi_bar, phi_bar = chain_factors(self.scenario, self.master_seed, trajectory, self.dt)
        return psi_bar if self.mode == "pair" else phi_bar


@dataclass
class _Partial:
    density: _Moments
    norm: _Moments
    fidelity: _Moments


def _run_chunk(job: _Job, start: int, stop: int) -> _Partial:
    dim = 2 ** len(job.keep)
    partial = _Partial(_Moments.empty((dim, dim)), _Moments.empty(()), _Moments.empty(()))
    for trajectory in range(start, stop):
        try:
            state = job.final_state(trajectory)
            reduced = reduced_projector(state, job.keep).entries
        except (ValueError, ArithmeticError, np.linalg.LinAlgError) as e:
            raise TrajectoryError(f"Trajectory {trajectory} failed: {e}", trajectory) from e
        partial.density.push(reduced)
        partial.norm.push(np.asarray(np.trace(reduced)))
        if job.target is not None:
            overlap = np.vdot(job.target.amps, reduced @ job.target.amps).real
            partial.fidelity.push(np.asarray(overlap, dtype=np.complex128))
    return partial


def _chunks(n_trajectories: int) -> list[tuple[int, int]]:
    return [(start, min(start + CHUNK_SIZE, n_trajectories)) for start in range(0, n_trajectories, CHUNK_SIZE)]


def _map_chunks(job: _Job, cfg: EnsembleConfig) -> list[_Partial]:
    bounds = _chunks(cfg.n_trajectories)
    if cfg.n_workers_hint > 1 and len(bounds) > 1:
        starts, stops = zip(*bounds, strict=True)
        try:
            with ProcessPoolExecutor(max_workers=cfg.n_workers_hint) as pool:
                return list(pool.map(_run_chunk, [job] * len(bounds), starts, stops))
        except (OSError, BrokenProcessPool) as e:
            console.print(f"[yellow]Warning: parallel pool unavailable ({e}); running serially[/yellow]")
    return [_run_chunk(job, start, stop) for start, stop in bounds]


def _reduce(partials: Iterable[_Partial], job: _Job) -> EnsembleResult:
    dim = 2 ** len(job.keep)
    total = _Partial(_Moments.empty((dim, dim)), _Moments.empty(()), _Moments.empty(()))
    for partial in partials:
        total = _Partial(
            total.density.merge(partial.density), total.norm.merge(partial.norm), total.fidelity.merge(partial.fidelity)
        )
    n = total.density.count
    fidelity = None
    if job.target is not None:
        fidelity = Estimate(float(total.fidelity.mean.real), float(total.fidelity.std_error()), n)
    return EnsembleResult(
        DensityMatrix(len(job.keep), total.density.mean),
        total.density.std_error(),
        Estimate(float(total.norm.mean.real), float(total.norm.std_error()), n),
        fidelity,
    )


def bounded_step(c: CircuitIR, dt: float | None) -> float | None:
    """``dt`` lowered to the accuracy bound of the fastest SDE-sampled segment of ``c``."""
    rates = [s.channel.total_rate() for s in c.segments if not s.channel.has_closed_form_sampler]
    if dt is None or not rates or max(rates) * dt <= STEP_ACCURACY * (1 + 1e-12):
        return dt
    rate = max(rates)
    bounded = STEP_ACCURACY / rate
    console.print(f"[yellow]Warning: dt={dt} too coarse for coupling rate {rate:g}; using dt={bounded:.6g}[/yellow]")
    return bounded


def _check_target(target: StateVector | None, keep: tuple[int, ...]) -> None:
    if target is None:
        return
    if target.n_qubits != len(keep):
        raise ValueError(f"Target covers {target.n_qubits} qubits but {len(keep)} are kept")
    if abs(target.norm2() - 1.0) > NORMALIZATION_TOL:
        raise ValueError(f"Target state must be normalized, norm^2 = {target.norm2()}")


def _execute(job: _Job, cfg: EnsembleConfig) -> EnsembleResult:
    _check_target(job.target, job.keep)
    return _reduce(_map_chunks(job, cfg), job)


def run_ensemble(
    c: CircuitIR,
    input_state: StateVector,
    keep: Iterable[int],
    cfg: EnsembleConfig,
    target: StateVector | None = None,
) -> EnsembleResult:
    """Reduced density matrix, mean norm and (optionally) fidelity from one set of trajectories."""
    kept = tuple(sorted(set(keep)))
    if not kept:
        raise ValueError("keep must name at least one qubit")
    if input_state.n_qubits != c.n_qubits:
        raise ValueError(f"Dimension mismatch: circuit has {c.n_qubits} qubits, input has {input_state.n_qubits}")
    job = _Job("circuit", c, input_state, kept, target, cfg.master_seed, bounded_step(c, cfg.dt))
    return _execute(job, cfg)


def estimate_density_matrix(
    c: CircuitIR, input_state: StateVector, keep: Iterable[int], cfg: EnsembleConfig
) -> tuple[DensityMatrix, npt.NDArray[np.float64]]:
    result = run_ensemble(c, input_state, keep, cfg)
    return result.density, result.density_se


def estimate_fidelity(
    c: CircuitIR, input_state: StateVector, target: StateVector, keep: Iterable[int], cfg: EnsembleConfig
) -> Estimate:
    """Mean and standard error of the per-trajectory ``<target| Tr_rest |psi><psi| |target>``."""
    fidelity = run_ensemble(c, input_state, keep, cfg, target).fidelity
    if fidelity is None:
        raise ValueError("Fidelity estimate needs a target state")
    return fidelity


def run_scenario_ensemble(scenario: Scenario, cfg: EnsembleConfig) -> EnsembleResult:
    return run_ensemble(scenario.circuit, scenario.input_state, scenario.keep, cfg, scenario.target)


def estimate_pair_via_chain_gate(scenario: Scenario, cfg: EnsembleConfig) -> EnsembleResult:
    """Two-qubit ensemble of the transmitted pair, using the composed chain gate per trajectory."""
    dt = bounded_step(scenario.circuit, cfg.dt)
    job = _Job("pair", scenario.circuit, scenario.target, (0, 1), scenario.target, cfg.master_seed, dt, scenario)
    return _execute(job, cfg)


def estimate_bulk_norm(scenario: Scenario, cfg: EnsembleConfig) -> Estimate:
    """``Tr E[|phi_bar><phi_bar|]`` over the bulk qubits."""
    if scenario.bulk_state is None:
        raise ValueError("Scenario has no bulk state")
    keep = tuple(range(scenario.bulk_state.n_qubits))
    dt = bounded_step(scenario.circuit, cfg.dt)
    job = _Job("bulk", scenario.circuit, scenario.bulk_state, keep, None, cfg.master_seed, dt, scenario)
    return _execute(job, cfg).norm


def standard_error(samples: npt.ArrayLike) -> float:
    """Sample standard deviation over ``sqrt(n)``."""
    values = np.asarray(samples, dtype=np.float64)
    if values.size < 2:
        return 0.0
    return float(np.std(values, ddof=1) / math.sqrt(values.size))
