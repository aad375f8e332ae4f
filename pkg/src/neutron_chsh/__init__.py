"""Simulation and count-rate analysis of a spin-energy Bell test in neutron polarimetry."""

__version__ = "0.1.0"
