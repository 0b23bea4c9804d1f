"""Radar signatures of walking pedestrians from ray-traced RCS and a point-scatterer model."""

__version__ = "0.1.0"
