"""Simulation and numerical verification of mimicking martingale diffusions."""
__version__ = "0.1.0"
