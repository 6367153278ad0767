"""Lattice statics and the homogenized quasicontinuum method."""

__version__ = "0.1.0"
