"""Hierarchical graph network for multi-source fusion and joint
classification of village spatial morphology subtypes."""

__version__ = "0.1.0"
