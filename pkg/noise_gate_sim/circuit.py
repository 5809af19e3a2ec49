"""Timed circuits: unitary events, per-qubit noise segments, trajectory execution and builders."""

from __future__ import annotations

import json
from collections.abc import Sequence
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np
import numpy.typing as npt

from .analytic import EntangledPairCoeffs
from .channels import ChannelKind, ChannelSpec, NoiseGateSample, sample_noise_gate, second_moments
from .qstate import (
    I2,
    NAMED_GATES,
    NORMALIZATION_TOL,
    DensityMatrix,
    GateMatrix,
    StateVector,
    apply_one_qubit_channel,
    apply_one_qubit_gate,
    apply_two_qubit_gate,
    apply_unitary_to_density,
    as_gate,
    partial_trace,
)
from .stochastic import Drift, StreamKey

COMPONENT_STRIDE = 4
"""Stream components per noise segment; segment ``s`` of a qubit uses components ``4s .. 4s+3``."""

CHAIN_CONTIGUITY_TOL = 1e-12


class CircuitError(ValueError):
    """Malformed circuit or circuit document."""


@dataclass(frozen=True)
class NoiseSegment:
    qubit: int
    channel: ChannelSpec
    t_a: float
    t_b: float

    def __post_init__(self) -> None:
        if self.t_b < self.t_a:
            raise CircuitError(f"Noise segment on qubit {self.qubit} ends ({self.t_b}) before it starts ({self.t_a})")

    @property
    def duration(self) -> float:
        return self.t_b - self.t_a


@dataclass(frozen=True)
class GateEvent:
    """A unitary at ``time``; ``kind`` is a named gate or ``"MATRIX"`` with an explicit ``matrix``."""

    time: float
    kind: str
    operands: tuple[int, ...]
    matrix: GateMatrix | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        operands = tuple(int(q) for q in self.operands)
        object.__setattr__(self, "operands", operands)
        if self.kind == "MATRIX":
            if self.matrix is None:
                raise CircuitError("MATRIX events need an explicit matrix")
            gate = as_gate(self.matrix)
        elif self.kind in NAMED_GATES:
            gate = NAMED_GATES[self.kind]
        else:
            raise CircuitError(f"Unknown gate kind {self.kind!r}")
        if gate.shape[0] != 2 ** len(operands) or len(operands) not in (1, 2):
            raise CircuitError(f"Gate {self.kind} of dimension {gate.shape[0]} cannot act on operands {operands}")
        if len(set(operands)) != len(operands):
            raise CircuitError(f"Gate {self.kind} has repeated operands {operands}")
        object.__setattr__(self, "matrix", gate)

    @property
    def gate(self) -> GateMatrix:
        if self.matrix is None:
            raise CircuitError(f"Gate event {self.kind} at t={self.time} has no matrix")
        return self.matrix


@dataclass(frozen=True)
class CircuitIR:
    n_qubits: int
    events: tuple[GateEvent, ...]
    segments: tuple[NoiseSegment, ...]
    t_start: float = 0.0
    t_end: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "events", tuple(self.events))
        object.__setattr__(self, "segments", tuple(self.segments))
        if self.n_qubits < 1:
            raise CircuitError(f"n_qubits must be positive, got {self.n_qubits}")
        if self.t_end < self.t_start:
            raise CircuitError(f"t_end ({self.t_end}) precedes t_start ({self.t_start})")
        times = [e.time for e in self.events]
        if times != sorted(times):
            raise CircuitError("Gate events must be sorted by time")
        for event in self.events:
            if not self.t_start <= event.time <= self.t_end:
                raise CircuitError(f"Event {event.kind} at t={event.time} lies outside [{self.t_start}, {self.t_end}]")
            for qubit in event.operands:
                self._check_qubit(qubit)
        by_qubit: dict[int, list[NoiseSegment]] = {}
        for segment in self.segments:
            self._check_qubit(segment.qubit)
            if segment.t_a < self.t_start or segment.t_b > self.t_end:
                raise CircuitError(f"Noise segment on qubit {segment.qubit} leaves [{self.t_start}, {self.t_end}]")
            by_qubit.setdefault(segment.qubit, []).append(segment)
        for qubit, segments in by_qubit.items():
            ordered = sorted(segments, key=lambda s: (s.t_a, s.t_b))
            for earlier, later in zip(ordered, ordered[1:], strict=False):
                if later.t_a < earlier.t_b:
                    raise CircuitError(f"Overlapping noise segments on qubit {qubit}")
            for event in self.events:
                if qubit in event.operands and any(s.t_a < event.time < s.t_b for s in segments):
                    raise CircuitError(
                        f"Event {event.kind} at t={event.time} falls inside a noise segment of qubit {qubit}"
                    )

    def _check_qubit(self, qubit: int) -> None:
        if not 0 <= qubit < self.n_qubits:
            raise CircuitError(f"Qubit {qubit} out of range for {self.n_qubits} qubits")

    @cached_property
    def schedule(self) -> tuple[tuple[str, int], ...]:
        """Execution order: segments at their end time, then events at that time in list order."""
        keyed = [((s.t_b, 0, i), ("segment", i)) for i, s in enumerate(self.segments)]
        keyed += [((e.time, 1, i), ("event", i)) for i, e in enumerate(self.events)]
        return tuple(item for _, item in sorted(keyed))

    @cached_property
    def stream_components(self) -> tuple[int, ...]:
        """Base stream component of each segment, from its rank among the qubit's segments."""
        ranks: dict[int, int] = {}
        bases = [0] * len(self.segments)
        for i in sorted(range(len(self.segments)), key=lambda i: (self.segments[i].t_a, self.segments[i].t_b, i)):
            qubit = self.segments[i].qubit
            bases[i] = ranks.get(qubit, 0) * COMPONENT_STRIDE
            ranks[qubit] = ranks.get(qubit, 0) + 1
        return tuple(bases)

    def segment_key(self, index: int, master_seed: int, trajectory: int) -> StreamKey:
        segment = self.segments[index]
        return StreamKey(master_seed, trajectory, segment.qubit, self.stream_components[index])

    def to_dict(self) -> dict[str, Any]:
        events = []
        for event in self.events:
            entry: dict[str, Any] = {"t": event.time, "kind": event.kind, "operands": list(event.operands)}
            if event.kind == "MATRIX":
                entry["matrix"] = [[[z.real, z.imag] for z in row] for row in event.gate.tolist()]
            events.append(entry)
        return {
            "n_qubits": self.n_qubits,
            "t_start": self.t_start,
            "t_end": self.t_end,
            "events": events,
            "segments": [
                {"qubit": s.qubit, "channel": s.channel.to_dict(), "t_a": s.t_a, "t_b": s.t_b} for s in self.segments
            ],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> CircuitIR:
        try:
            jsonschema.validate(data, load_schema("circuit"))
        except jsonschema.ValidationError as e:
            raise CircuitError(f"Invalid circuit document: {e.message}") from e
        try:
            events = tuple(
                GateEvent(
                    float(e["t"]),
                    e["kind"],
                    tuple(e["operands"]),
                    np.array([[complex(re, im) for re, im in row] for row in e["matrix"]]) if "matrix" in e else None,
                )
                for e in data["events"]
            )
            segments = tuple(
                NoiseSegment(int(s["qubit"]), ChannelSpec.from_dict(s["channel"]), float(s["t_a"]), float(s["t_b"]))
                for s in data["segments"]
            )
        except ValueError as e:
            raise CircuitError(str(e)) from e
        times = [e.time for e in events] + [s.t_a for s in segments] + [s.t_b for s in segments]
        t_start = float(data.get("t_start", min(times, default=0.0)))
        t_end = float(data.get("t_end", max(times, default=0.0)))
        return cls(int(data["n_qubits"]), events, segments, t_start, t_end)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def load(cls, path: str | Path) -> CircuitIR:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise CircuitError(f"Cannot read circuit file {path}: {e}") from e
        return cls.from_dict(data)


def load_schema(name: str) -> dict[str, Any]:
    """Load a JSON schema shipped in ``noise_gate_sim/schemas``."""
    text = resources.files("noise_gate_sim").joinpath("schemas", f"{name}.schema.json").read_text(encoding="utf-8")
    schema: dict[str, Any] = json.loads(text)
    return schema


def sample_segment_gates(
    c: CircuitIR, master_seed: int, trajectory: int, dt: float | None = None, drift: Drift = "euler"
) -> tuple[NoiseGateSample, ...]:
    """One sampled noise gate per segment of ``c``, in segment order."""
    return tuple(
        sample_noise_gate(
            segment.channel, c.segment_key(i, master_seed, trajectory), segment.t_a, segment.t_b, dt, drift
        )
        for i, segment in enumerate(c.segments)
    )


def _apply_event(state: StateVector, event: GateEvent) -> StateVector:
    if len(event.operands) == 1:
        return apply_one_qubit_gate(state, event.gate, event.operands[0])
    return apply_two_qubit_gate(state, event.gate, *event.operands)


def execute(c: CircuitIR, state: StateVector, noise: Sequence[NoiseGateSample] | None = None) -> StateVector:
    """Run the schedule with the given noise gates (none: the noiseless circuit)."""
    if state.n_qubits != c.n_qubits:
        raise ValueError(f"Dimension mismatch: circuit has {c.n_qubits} qubits, input has {state.n_qubits}")
    for kind, index in c.schedule:
        if kind == "event":
            state = _apply_event(state, c.events[index])
        elif noise is not None:
            state = apply_one_qubit_gate(state, noise[index].matrix, c.segments[index].qubit)
    return state


def run_trajectory(
    c: CircuitIR,
    input_state: StateVector,
    master_seed: int,
    trajectory: int,
    dt: float | None = None,
    drift: Drift = "euler",
) -> StateVector:
    """One noise history of ``c`` applied to ``input_state``; the result is unnormalized."""
    if dt is not None and dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if input_state.n_qubits != c.n_qubits:
        raise ValueError(f"Dimension mismatch: circuit has {c.n_qubits} qubits, input has {input_state.n_qubits}")
    return execute(c, input_state, sample_segment_gates(c, master_seed, trajectory, dt, drift))


def evolve_density(c: CircuitIR, rho0: DensityMatrix, keep: Sequence[int] | None = None) -> DensityMatrix:
    """Exact ensemble average: moment tables for noise segments, conjugation for events."""
    if rho0.n_qubits != c.n_qubits:
        raise ValueError(f"Dimension mismatch: circuit has {c.n_qubits} qubits, rho0 has {rho0.n_qubits}")
    rho = rho0
    for kind, index in c.schedule:
        if kind == "event":
            event = c.events[index]
            rho = apply_unitary_to_density(rho, event.gate, event.operands)
        else:
            segment = c.segments[index]
            rho = apply_one_qubit_channel(rho, second_moments(segment.channel, segment.duration).m, segment.qubit)
    return rho if keep is None else partial_trace(rho, keep)


def compose_chain_gate(segments: Sequence[NoiseGateSample]) -> NoiseGateSample:
    """Product ``N_last @ ... @ N_first`` of time-contiguous gates given in time order."""
    if not segments:
        raise ValueError("Cannot compose an empty chain")
    total = np.array(segments[0].matrix)
    for earlier, later in zip(segments, segments[1:], strict=False):
        if abs(later.interval[0] - earlier.interval[1]) > CHAIN_CONTIGUITY_TOL:
            raise ValueError(f"Chain segments are not contiguous: {earlier.interval} then {later.interval}")
        total = later.matrix @ total
    return NoiseGateSample(total, (segments[0].interval[0], segments[-1].interval[1]))


@dataclass(frozen=True)
class ChainLayout:
    """Segment indices of a spin-chain circuit by role.

    ``transmitted`` lists the moving state's segments in time order. ``bulk[b]`` is the
    ``(before swap, after swap)`` pair for the bulk state that starts on qubit ``b + 2``.
    """

    transmitted: tuple[int, ...]
    bulk: tuple[tuple[int, int], ...]
    qubit0: int | None


@dataclass(frozen=True)
class Scenario:
    circuit: CircuitIR
    input_state: StateVector
    keep: tuple[int, ...]
    target: StateVector
    layout: ChainLayout | None = None
    bulk_state: StateVector | None = None


def _channel(kind: ChannelKind | str, gamma: float | Sequence[float]) -> ChannelSpec:
    return ChannelSpec.of(kind, gamma)


def build_cnot_scenario(
    gamma1: float | Sequence[float],
    gamma2: float | Sequence[float],
    kind: ChannelKind | str,
    t1: float,
    t2: float,
    t3: float,
    input_state: StateVector | None = None,
) -> Scenario:
    """CNOT at ``t2`` between noisy idling on both qubits over ``(t1, t2)`` and ``(t2, t3)``.

    Qubit 0 (control) couples with ``gamma1``, qubit 1 (target) with ``gamma2``; scalar constants
    are used for every component of the channel. The default input is |00>.
    """
    if not t1 <= t2 <= t3:
        raise CircuitError(f"CNOT times must be ordered, got {t1}, {t2}, {t3}")
    control, target = _channel(kind, gamma1), _channel(kind, gamma2)
    segments = (
        NoiseSegment(0, control, t1, t2),
        NoiseSegment(1, target, t1, t2),
        NoiseSegment(0, control, t2, t3),
        NoiseSegment(1, target, t2, t3),
    )
    circuit = CircuitIR(2, (GateEvent(t2, "CNOT", (0, 1)),), segments, t1, t3)
    state = input_state if input_state is not None else StateVector.basis(2, 0)
    ideal = execute(circuit, state)
    norm = np.sqrt(ideal.norm2())
    return Scenario(circuit, state, (0, 1), StateVector(2, ideal.amps / norm))


def build_spinchain_scenario(
    n: int,
    couplings: Sequence[float | Sequence[float]],
    times: Sequence[float],
    kind: ChannelKind | str,
    pair: EntangledPairCoeffs,
    bulk: StateVector | npt.ArrayLike | None = None,
    *,
    qubit0_noise: bool = True,
) -> Scenario:
    """Transfer of qubit 1's half of ``pair`` to qubit ``n`` by SWAPs at ``times[1] .. times[n-1]``.

    ``times`` is the full grid ``t_0 <= t_1 <= ... <= t_n``: the moving state sits on qubit ``k``
    during ``(t_{k-1}, t_k)``. ``couplings[q]`` are qubit ``q``'s constants (index 0 for the
    stationary qubit). Every qubit ``1..n`` idles noisily for the whole run, split at its swaps.
    """
    if n < 2:
        raise CircuitError(f"A chain needs n >= 2, got {n}")
    if len(couplings) != n + 1:
        raise CircuitError(f"Expected {n + 1} coupling entries (qubits 0..{n}), got {len(couplings)}")
    if len(times) != n + 1:
        raise CircuitError(f"Expected {n + 1} times t_0..t_{n}, got {len(times)}")
    t = [float(x) for x in times]
    if any(b < a for a, b in zip(t, t[1:], strict=False)):
        raise CircuitError("Chain times must be non-decreasing")
    if bulk is None:
        bulk_state = StateVector.basis(n - 1, 0)
    elif isinstance(bulk, StateVector):
        bulk_state = bulk
    else:
        bulk_state = StateVector.from_amplitudes(bulk)
    if bulk_state.n_qubits != n - 1:
        raise CircuitError(f"Bulk state must cover {n - 1} qubits, got {bulk_state.n_qubits}")
    if abs(bulk_state.norm2() - 1.0) > NORMALIZATION_TOL:
        raise CircuitError(f"Bulk state must be normalized, norm^2 = {bulk_state.norm2()}")
    channels = [_channel(kind, g) for g in couplings]

    segments: list[NoiseSegment] = []

    def add(qubit: int, t_a: float, t_b: float) -> int:
        segments.append(NoiseSegment(qubit, channels[qubit], t_a, t_b))
        return len(segments) - 1

    qubit0 = add(0, t[0], t[n]) if qubit0_noise else None
    transmitted = tuple(add(k, t[k - 1], t[k]) for k in range(1, n + 1))
    bulk_layout = tuple((add(b + 1, t[0], t[b]), add(b, t[b], t[n])) for b in range(1, n))
    events = tuple(GateEvent(t[k], "SWAP", (k, k + 1)) for k in range(1, n))
    circuit = CircuitIR(n + 1, events, tuple(segments), t[0], t[n])
    return Scenario(
        circuit,
        pair.state().kron(bulk_state),
        (0, n),
        pair.state(),
        ChainLayout(transmitted, bulk_layout, qubit0),
        bulk_state,
    )


def chain_factors(
    scenario: Scenario, master_seed: int, trajectory: int, dt: float | None = None
) -> tuple[StateVector, StateVector]:
    """Split one spin-chain trajectory into the transmitted pair ``psi_bar`` and the bulk ``phi_bar``."""
    layout = scenario.layout
    if layout is None or scenario.bulk_state is None:
        raise ValueError("Scenario has no chain layout")
    samples = sample_segment_gates(scenario.circuit, master_seed, trajectory, dt)
    chain = compose_chain_gate([samples[i] for i in layout.transmitted])
    stationary = samples[layout.qubit0].matrix if layout.qubit0 is not None else I2
    psi_bar = apply_one_qubit_gate(apply_one_qubit_gate(scenario.target, stationary, 0), chain.matrix, 1)
    phi_bar = scenario.bulk_state
    for b, (before, after) in enumerate(layout.bulk):
        phi_bar = apply_one_qubit_gate(phi_bar, samples[after].matrix @ samples[before].matrix, b)
    return psi_bar, phi_bar
