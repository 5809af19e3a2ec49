"""Noise Gate Simulator - Markovian decoherence as sampled stochastic gates on state vectors."""

__version__ = "0.1.0"
