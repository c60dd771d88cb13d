"""Nonadiabatic holonomic gates in a three-level Lambda system and an
electron-nuclear spin register: pulse-level propagation, connection
holonomies, tomography, and a photon-counting noise model."""

__version__ = "0.1.0"
