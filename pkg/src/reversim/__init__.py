"""Generalized partial measurements on qubits and their probabilistic reversal."""
__version__ = "0.1.0"
