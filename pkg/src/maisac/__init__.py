"""Movable-antenna ISAC: joint beamforming and antenna position optimization."""

__version__ = "0.1.0"
