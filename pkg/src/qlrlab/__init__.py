"""Quantum linear response excited states with shot-noise simulation."""

__version__ = "0.1.0"

EV_PER_HARTREE = 27.211386245988
