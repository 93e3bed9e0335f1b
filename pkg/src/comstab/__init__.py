"""Actuation-aware centroidal stability regions and stability-optimizing teleoperation."""

__version__ = "0.1.0"
