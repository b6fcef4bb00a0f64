"""Spectral solver and analysis toolkit for point-source scattering by
potentials made of a grid part and a delta-shell part."""

__version__ = "0.1.0"
