"""Stigmergy-driven multi-place foraging for urban waste collection."""

__version__ = "0.1.0"
