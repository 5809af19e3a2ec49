"""Command-line interface for the noise gate simulator."""

from __future__ import annotations

import json
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Any

import click
from click.core import ParameterSource
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from . import __version__
from .channels import ChannelKind
from .circuit import CircuitError
from .montecarlo import TrajectoryError
from .scenarios import ManifestError, ResultTable, RunManifest, render, run_scenario
from .validation import ValidationReport, run_validation

console = Console(stderr=True)

EXIT_VALIDATION_FAILED = 1
EXIT_BAD_MANIFEST = 2
EXIT_TRAJECTORY_FAILED = 3

# option name -> manifest key
_MANIFEST_KEYS = {
    "scenario": "scenario",
    "channel": "channel",
    "gamma": "gammas",
    "n_qubits": "n_qubits",
    "trajectories": "trajectories",
    "seed": "seed",
    "dt": "dt",
    "lambda_steps": "lambda_steps",
    "time_steps": "time_steps",
    "time_max": "time_max",
    "profile": "profile",
    "circuit": "circuit",
    "output": "output",
    "fmt": "format",
    "mc": "mc",
    "workers": "workers",
    "timing": "timing",
}


def _print_traceback(debug: bool) -> None:
    if debug:
        import traceback  # pylint: disable=import-outside-toplevel

        console.print(traceback.format_exc())


def _merge_manifest(ctx: click.Context, manifest_path: Path | None, options: dict[str, Any]) -> dict[str, Any]:
    """Manifest file values, overridden by every flag given on the command line."""
    data = RunManifest.load(manifest_path) if manifest_path else {}
    for name, key in _MANIFEST_KEYS.items():
        if ctx.get_parameter_source(name) is ParameterSource.DEFAULT and key in data:
            continue
        value = options[name]
        if name == "gamma":
            if not value:
                continue
            value = list(value)
        elif isinstance(value, Path):
            value = str(value)
        if value is not None:
            data[key] = value
    if ctx.get_parameter_source("no_qubit0_noise") is not ParameterSource.DEFAULT or "qubit0_noise" not in data:
        data["qubit0_noise"] = not options["no_qubit0_noise"]
    return data


def _summary(table: ResultTable) -> Table:
    manifest = table.manifest
    summary = Table(title="Run Summary", show_header=True, header_style="bold magenta")
    summary.add_column("Metric", style="cyan")
    summary.add_column("Value", style="green")
    summary.add_row("Scenario", manifest.scenario)
    summary.add_row("Channel", f"{manifest.channel.kind.value} {list(manifest.channel.gammas)}")
    if manifest.scenario == "spinchain":
        summary.add_row("Chain length", str(manifest.n_qubits))
        summary.add_row("Coupling profile", manifest.profile)
    summary.add_row("Rows", str(len(table.rows)))
    summary.add_row("Monte Carlo", f"{manifest.ensemble.n_trajectories} trajectories" if manifest.mc else "off")
    summary.add_row("Master seed", str(manifest.ensemble.master_seed))
    return summary


@click.group()
@click.version_option(version=__version__)
def main() -> None:
    """Simulate Markovian noise as sampled stochastic gates and compare against closed forms."""


@main.command()
@click.option("--manifest", "manifest_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="JSON run manifest; flags given explicitly override its values")
@click.option("--scenario", type=click.Choice(["cnot", "spinchain", "custom"]), default="cnot", help="Scenario to run")
@click.option("--channel", type=click.Choice([k.value for k in ChannelKind]), default="bit_flip", help="Noise channel")
@click.option("--gamma", type=float, multiple=True, help="Coupling constant; repeat once per channel component")
@click.option("--n-qubits", type=int, default=4, help="Spin chain length n (the chain uses n + 1 qubits)")
@click.option("--trajectories", type=int, default=10_000, help="Monte Carlo trajectories per row")
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=0, help="Master seed")
@click.option("--dt", type=float, help="SDE step for channels without a closed-form sampler")
@click.option("--lambda-steps", type=int, default=11, help="Points on the lambda axis (spin chain)")
@click.option("--time-steps", type=int, default=11, help="Points on the time axis")
@click.option("--time-max", type=float, help="End of the time axis (default: 5 for cnot, n for spinchain)")
@click.option("--profile", type=click.Choice(["uniform", "gaussian"]), default="uniform",
              help="Coupling profile along the chain")
@click.option("--circuit", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="Circuit file for the custom scenario")
@click.option("--output", "-o", type=click.Path(dir_okay=False, path_type=Path),
              help="Write results here instead of stdout")
@click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv", help="Result format")
@click.option("--no-qubit0-noise", is_flag=True, help="Keep the stationary qubit noiseless")
@click.option("--mc/--no-mc", default=True, help="Add Monte Carlo columns")
@click.option("--workers", type=int, default=1, help="Worker processes for the trajectory map")
@click.option("--timing", is_flag=True, help="Fill the wall_time_s column (output is no longer byte-stable)")
@click.option("--debug", is_flag=True, help="Print tracebacks on errors")
@click.pass_context
def run(ctx: click.Context, manifest_path: Path | None, debug: bool, **options: Any) -> None:
    """
    Run a scenario sweep and emit a result table.

    Examples:

        # CNOT fidelity under bit-flip noise, analytic and Monte Carlo
        noise-gates run --scenario cnot --gamma 0.1 --trajectories 100000

        # Depolarizing transfer surface over a 100-qubit chain
        noise-gates run --scenario spinchain --channel depolarizing --n-qubits 100 \\
            --profile gaussian --gamma 0.05 --gamma 0.05 --gamma 0.05 --no-mc

        # Custom circuit as JSON
        noise-gates run --scenario custom --circuit circuit.json --format json
    """
    try:
        manifest = RunManifest.from_dict(_merge_manifest(ctx, manifest_path, options))
        if manifest.mc:
            console.print(f"[dim]Sampling {manifest.ensemble.n_trajectories} trajectories per row...[/dim]")
        table = run_scenario(manifest)
        text = render(table)
    except (ManifestError, CircuitError) as e:
        console.print(f"[red]❌ Invalid manifest: {e}[/red]")
        _print_traceback(debug)
        sys.exit(EXIT_BAD_MANIFEST)
    except TrajectoryError as e:
        console.print(f"[red]❌ Trajectory failure: {e}[/red]")
        _print_traceback(debug)
        sys.exit(EXIT_TRAJECTORY_FAILED)

    if manifest.output is None:
        click.echo(text, nl=False)
        return
    try:
        manifest.output.write_text(text, encoding="utf-8", newline="")
    except OSError as e:
        console.print(f"[red]❌ Error writing {manifest.output}: {e}[/red]")
        sys.exit(EXIT_BAD_MANIFEST)
    console.print(_summary(table))
    console.print(Panel.fit(f"[bold green]✅ Results written to {manifest.output}[/bold green]", border_style="green"))


def _report_table(report: ValidationReport) -> Table:
    table = Table(title="Validation Report", show_header=True, header_style="bold magenta")
    table.add_column("Check", style="cyan")
    table.add_column("Measured", justify="right")
    table.add_column("Tolerance", justify="right")
    table.add_column("Result")
    for check in report.checks:
        verdict = "[green]pass[/green]" if check.passed else "[red]FAIL[/red]"
        table.add_row(check.name, f"{check.measured:.3e}", f"{check.tolerance:.3e}", verdict)
    return table


@main.command()
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=0, help="Master seed for every Monte Carlo check")
@click.option("--trajectories", type=int, default=20_000, help="Trajectories per Monte Carlo check")
@click.option("--workers", type=int, default=1, help="Worker processes for the trajectory map")
@click.option("--json-output", "-j", is_flag=True, help="Print the report as JSON on stdout")
@click.option("--inject-printed-moments", is_flag=True, hidden=True)
def validate(seed: int, trajectories: int, workers: int, json_output: bool, inject_printed_moments: bool) -> None:
    """
    Run the oracle and property checks; exits non-zero if any check fails.

    Examples:

        noise-gates validate
        noise-gates validate --seed 7 --trajectories 100000
    """
    console.print("[dim]Running validation checks...[/dim]")
    report = run_validation(seed, trajectories, workers, inject_printed_moments=inject_printed_moments)
    if json_output:
        click.echo(json.dumps({"passed": report.passed, "checks": [asdict(c) for c in report.checks]}, indent=2))
    else:
        console.print(_report_table(report))
    if not report.passed:
        names = ", ".join(check.name for check in report.failures)
        console.print(f"[red]❌ {len(report.failures)} check(s) failed: {names}[/red]")
        sys.exit(EXIT_VALIDATION_FAILED)
    console.print(Panel.fit("[bold green]✅ All checks passed[/bold green]", border_style="green"))


if __name__ == "__main__":
    main()  # pylint: disable=no-value-for-parameter
