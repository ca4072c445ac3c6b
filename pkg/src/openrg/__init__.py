"""Open Richardson-Gaudin chain: boundary transfer matrices, conserved operators and Bethe ansatz."""

__version__ = "0.1.0"
