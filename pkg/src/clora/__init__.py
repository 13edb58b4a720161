"""Continual low-rank adaptation for class-incremental segmentation, at desk scale."""

__version__ = "0.1.0"
