"""Scenario runs: manifests, parameter sweeps and result tables."""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal

import jsonschema
import numpy as np
from rich.console import Console

from .analytic import (
    ChainCouplings,
    EntangledPairCoeffs,
    chain_fidelity,
    chain_fidelity_with_stationary_noise,
    fidelity_cnot_bitflip,
)
from .channels import ChannelKind, ChannelSpec
from .circuit import (
    CircuitIR,
    Scenario,
    build_cnot_scenario,
    build_spinchain_scenario,
    evolve_density,
    execute,
    load_schema,
)
from .montecarlo import EnsembleConfig, run_scenario_ensemble
from .qstate import DensityMatrix, StateVector, fidelity_pure

console = Console(stderr=True)

COLUMNS = ("lambda", "time", "analytic_fidelity", "mc_fidelity", "mc_std_error", "wall_time_s")
MAX_MC_CHAIN = 12
MAX_EXACT_QUBITS = 10
DEFAULT_CNOT_TIME_MAX = 5.0

ScenarioName = Literal["cnot", "spinchain", "custom"]
OutputFormat = Literal["csv", "json"]
Profile = Literal["uniform", "gaussian"]


class ManifestError(ValueError):
    """Invalid run manifest."""


@dataclass(frozen=True)
class SweepAxis:
    name: str
    min: float
    max: float
    steps: int

    def __post_init__(self) -> None:
        if self.steps < 1:
            raise ManifestError(f"Sweep '{self.name}' needs at least one step, got {self.steps}")
        if self.max < self.min:
            raise ManifestError(f"Sweep '{self.name}' bounds are reversed: {self.min} > {self.max}")

    def values(self) -> list[float]:
        return [float(v) for v in np.linspace(self.min, self.max, self.steps)]


@dataclass(frozen=True)
class RunManifest:
    scenario: ScenarioName = "cnot"
    channel: ChannelSpec = field(default_factory=lambda: ChannelSpec(ChannelKind.BIT_FLIP, (0.1,)))
    n_qubits: int = 4
    sweeps: tuple[SweepAxis, ...] = ()
    ensemble: EnsembleConfig = field(default_factory=EnsembleConfig)
    output: Path | None = None
    fmt: OutputFormat = "csv"
    qubit0_noise: bool = True
    mc: bool = True
    profile: Profile = "uniform"
    circuit_file: Path | None = None
    timing: bool = False

    def sweep(self, name: str) -> SweepAxis | None:
        return next((axis for axis in self.sweeps if axis.name == name), None)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> RunManifest:
        """Build a manifest from flat keys (the CLI flag names with underscores)."""
        try:
            scenario = str(data.get("scenario", "cnot"))
            if scenario not in ("cnot", "spinchain", "custom"):
                raise ManifestError(f"Unknown scenario {scenario!r}")
            gammas = data.get("gammas", [0.1])
            gammas = [gammas] if isinstance(gammas, int | float) else list(gammas)
            kind = ChannelKind.parse(str(data.get("channel", "bit_flip")))
            if len(gammas) == 1:
                channel = ChannelSpec.of(kind, float(gammas[0]))
            else:
                channel = ChannelSpec(kind, tuple(float(g) for g in gammas))
            n_qubits = int(data.get("n_qubits", 4))
            if scenario == "spinchain" and n_qubits < 2:
                raise ManifestError(f"A spin chain needs n_qubits >= 2, got {n_qubits}")
            ensemble = EnsembleConfig(
                n_trajectories=int(data.get("trajectories", 10_000)),
                master_seed=int(data.get("seed", 0)),
                dt=None if data.get("dt") is None else float(data["dt"]),
                n_workers_hint=int(data.get("workers", 1)),
            )
            sweeps = cls._sweeps(scenario, n_qubits, data)
            fmt = str(data.get("format", "csv"))
            if fmt not in ("csv", "json"):
                raise ManifestError(f"Unknown output format {fmt!r}")
            profile = str(data.get("profile", "uniform"))
            if profile not in ("uniform", "gaussian"):
                raise ManifestError(f"Unknown coupling profile {profile!r}")
            circuit_file = data.get("circuit")
            if scenario == "custom" and not circuit_file:
                raise ManifestError("The custom scenario needs a circuit file")
            output = data.get("output")
            return cls(
                scenario=scenario,  # type: ignore[arg-type]
                channel=channel,
                n_qubits=n_qubits,
                sweeps=sweeps,
                ensemble=ensemble,
                output=Path(output) if output else None,
                fmt=fmt,  # type: ignore[arg-type]
                qubit0_noise=bool(data.get("qubit0_noise", True)),
                mc=bool(data.get("mc", True)),
                profile=profile,  # type: ignore[arg-type]
                circuit_file=Path(circuit_file) if circuit_file else None,
                timing=bool(data.get("timing", False)),
            )
        except ManifestError:
            raise
        except (ValueError, TypeError, KeyError) as e:
            raise ManifestError(str(e)) from e

    @staticmethod
    def _sweeps(scenario: str, n_qubits: int, data: dict[str, Any]) -> tuple[SweepAxis, ...]:
        if "sweeps" in data:
            return tuple(
                SweepAxis(str(s["name"]), float(s["min"]), float(s["max"]), int(s["steps"])) for s in data["sweeps"]
            )
        if scenario == "custom":
            return ()
        default_max = float(n_qubits) if scenario == "spinchain" else DEFAULT_CNOT_TIME_MAX
        time_max = data.get("time_max")
        end = default_max if time_max is None else float(time_max)
        axes = [SweepAxis("time", 0.0, end, int(data.get("time_steps", 11)))]
        if scenario == "spinchain":
            axes.insert(0, SweepAxis("lambda", 0.0, 1.0, int(data.get("lambda_steps", 11))))
        return tuple(axes)

    @classmethod
    def load(cls, path: str | Path) -> dict[str, Any]:
        """Read a manifest file into the flat dictionary ``from_dict`` accepts."""
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ManifestError(f"Cannot read manifest {path}: {e}") from e
        if not isinstance(data, dict):
            raise ManifestError("Manifest must be a JSON object")
        return data


@dataclass(frozen=True)
class ResultRow:
    lam: float | None
    time: float | None
    analytic_fidelity: float | None
    mc_fidelity: float | None
    mc_std_error: float | None
    wall_time_s: float | None

    def as_tuple(self) -> tuple[float | None, ...]:
        return (self.lam, self.time, self.analytic_fidelity, self.mc_fidelity, self.mc_std_error, self.wall_time_s)


@dataclass(frozen=True)
class ResultTable:
    manifest: RunManifest
    rows: tuple[ResultRow, ...]


def _cnot_rows(manifest: RunManifest) -> list[ResultRow]:
    axis = manifest.sweep("time") or SweepAxis("time", 1.0, 1.0, 1)
    rows = []
    for duration in axis.values():
        started = time.perf_counter()
        scenario = build_cnot_scenario(
            manifest.channel.gammas, manifest.channel.gammas, manifest.channel.kind, 0.0, duration, 2 * duration
        )
        if manifest.channel.kind is ChannelKind.BIT_FLIP:
            gamma = manifest.channel.gammas[0]
            analytic = fidelity_cnot_bitflip(gamma, gamma, (duration, duration))
        else:
            analytic = _exact_fidelity(scenario)
        rows.append(_finish_row(manifest, scenario, None, duration, analytic, started))
    return rows


def _exact_fidelity(scenario: Scenario) -> float:
    rho = evolve_density(scenario.circuit, DensityMatrix.pure(scenario.input_state), scenario.keep)
    return min(fidelity_pure(rho, scenario.target), 1.0)


def chain_couplings(manifest: RunManifest) -> ChainCouplings:
    """Per-qubit couplings of qubits ``1..n`` with unit intervals."""
    n = manifest.n_qubits
    if manifest.profile == "gaussian":
        return ChainCouplings.gaussian(n, manifest.channel.gammas)
    return ChainCouplings.uniform(manifest.channel.gammas, n)


def _spinchain_rows(manifest: RunManifest) -> list[ResultRow]:
    n = manifest.n_qubits
    couplings = chain_couplings(manifest)
    lambdas = (manifest.sweep("lambda") or SweepAxis("lambda", 0.5, 0.5, 1)).values()
    durations = (manifest.sweep("time") or SweepAxis("time", float(n), float(n), 1)).values()
    run_mc = manifest.mc and n <= MAX_MC_CHAIN
    if manifest.mc and not run_mc:
        console.print(
            f"[yellow]Warning: Monte Carlo disabled for n={n} > {MAX_MC_CHAIN}; emitting analytic columns only[/yellow]"
        )
    per_qubit = [couplings.gammas[0], *couplings.gammas]
    rows = []
    for lam in lambdas:
        pair = EntangledPairCoeffs.from_lambda(lam)
        for elapsed in durations:
            started = time.perf_counter()
            if manifest.qubit0_noise:
                analytic = chain_fidelity_with_stationary_noise(
                    manifest.channel.kind,
                    pair,
                    couplings.elapsed(elapsed),
                    per_qubit[0],
                    min(elapsed, couplings.total_time()),
                )
            else:
                analytic = chain_fidelity(manifest.channel.kind, pair, couplings.elapsed(elapsed))
            scenario = None
            if run_mc:
                times = [min(float(k), elapsed) for k in range(n + 1)]
                scenario = build_spinchain_scenario(
                    n, per_qubit, times, manifest.channel.kind, pair, qubit0_noise=manifest.qubit0_noise
                )
            rows.append(_finish_row(manifest, scenario, lam, elapsed, analytic, started))
    return rows


def _custom_rows(manifest: RunManifest) -> list[ResultRow]:
    if manifest.circuit_file is None:
        raise ManifestError("The custom scenario needs a circuit file")
    started = time.perf_counter()
    circuit = CircuitIR.load(manifest.circuit_file)
    state = StateVector.basis(circuit.n_qubits, 0)
    ideal = execute(circuit, state)
    target = StateVector(circuit.n_qubits, ideal.amps / np.sqrt(ideal.norm2()))
    scenario = Scenario(circuit, state, tuple(range(circuit.n_qubits)), target)
    analytic = _exact_fidelity(scenario) if circuit.n_qubits <= MAX_EXACT_QUBITS else None
    return [_finish_row(manifest, scenario, None, circuit.t_end - circuit.t_start, analytic, started)]


def _finish_row(
    manifest: RunManifest,
    scenario: Scenario | None,
    lam: float | None,
    duration: float,
    analytic: float | None,
    started: float,
) -> ResultRow:
    mc_value = mc_se = None
    if manifest.mc and scenario is not None:
        estimate = run_scenario_ensemble(scenario, manifest.ensemble).fidelity
        if estimate is None:
            raise ManifestError(f"Scenario {manifest.scenario!r} has no target state to score")
        mc_value, mc_se = estimate.value, estimate.std_error
    wall = time.perf_counter() - started if manifest.timing else None
    return ResultRow(lam, duration, analytic, mc_value, mc_se, wall)


def run_scenario(manifest: RunManifest) -> ResultTable:
    """Evaluate every sweep point of the manifest's scenario."""
    if manifest.scenario == "cnot":
        rows = _cnot_rows(manifest)
    elif manifest.scenario == "spinchain":
        rows = _spinchain_rows(manifest)
    else:
        rows = _custom_rows(manifest)
    return ResultTable(manifest, tuple(rows))


def _cell(value: float | None) -> str:
    return "" if value is None else repr(float(value))


def to_csv(table: ResultTable) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(COLUMNS)
    for row in table.rows:
        writer.writerow([_cell(v) for v in row.as_tuple()])
    return buffer.getvalue()


def to_json_document(table: ResultTable) -> dict[str, Any]:
    manifest = table.manifest
    return {
        "scenario": manifest.scenario,
        "channel": manifest.channel.to_dict(),
        "n_qubits": manifest.n_qubits if manifest.scenario == "spinchain" else None,
        "master_seed": manifest.ensemble.master_seed,
        "trajectories": manifest.ensemble.n_trajectories,
        "columns": list(COLUMNS),
        "rows": [
            {name: (None if v is None else float(v)) for name, v in zip(COLUMNS, row.as_tuple(), strict=True)}
            for row in table.rows
        ],
    }


def to_json(table: ResultTable) -> str:
    document = to_json_document(table)
    jsonschema.validate(document, load_schema("results"))
    return json.dumps(document, indent=2) + "\n"


def render(table: ResultTable) -> str:
    return to_json(table) if table.manifest.fmt == "json" else to_csv(table)
