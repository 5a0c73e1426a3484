"""Offline embedding extraction for the village-morphology pipeline."""

__version__ = "0.1.0"
