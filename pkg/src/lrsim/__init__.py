"""Reflecting-surface uplink simulation with hardware impairments."""

__version__ = "0.1.0"
