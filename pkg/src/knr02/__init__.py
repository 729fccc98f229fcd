"""Pulse-level simulation of 02-code bosonic qubits on Kerr nonlinear resonators."""

__version__ = "0.1.0"
