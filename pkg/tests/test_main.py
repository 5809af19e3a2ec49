"""Test the __main__ module."""

from __future__ import annotations

import subprocess
import sys


def test_main_module_execution() -> None:
    """Test that the main module can be executed."""
    result = subprocess.run(  # noqa: S603
        [sys.executable, "-m", "noise_gate_sim", "--help"], capture_output=True, text=True, check=False
    )

    assert result.returncode == 0
    assert "Simulate Markovian noise" in result.stdout


def test_run_help_lists_flags() -> None:
    result = subprocess.run(  # noqa: S603
        [sys.executable, "-m", "noise_gate_sim", "run", "--help"], capture_output=True, text=True, check=False
    )

    assert result.returncode == 0
    for flag in ("--scenario", "--gamma", "--no-qubit0-noise", "--mc / --no-mc", "--format"):
        assert flag in result.stdout
