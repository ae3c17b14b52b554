"""Transverse Wen-plaquette model through its exact map onto Ising chains."""

__version__ = "0.1.0"
