"""Numerical laboratory for the psi-weighted Moser-Trudinger functional on closed surfaces."""

__version__ = "0.1.0"
