"""Particle simulation and verification tools for McKean-Vlasov SDEs."""

__version__ = "0.1.0"
