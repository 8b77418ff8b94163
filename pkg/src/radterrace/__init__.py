"""Radially symmetric reaction-diffusion gradient systems: fronts, energy diagnostics
and propagating terraces."""

__version__ = "0.1.0"
