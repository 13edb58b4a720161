"""Synthetic data generation, PPM/PGM I/O and checkpoints."""

from .checkpoint import load_checkpoint, save_checkpoint
from .dataset import SegDataset, to_input
from .pnm import IGNORE, SegmentationSample, load_sample, read_pgm, read_ppm, write_pgm, write_ppm
from .synth import ShapeSpec, SynthSpec, class_histogram, generate, generate_arrays, prototype_distance

__all__ = [
    "IGNORE",
    "SegDataset",
    "SegmentationSample",
    "ShapeSpec",
    "SynthSpec",
    "class_histogram",
    "generate",
    "generate_arrays",
    "load_checkpoint",
    "load_sample",
    "prototype_distance",
    "read_pgm",
    "read_ppm",
    "save_checkpoint",
    "to_input",
    "write_pgm",
    "write_ppm",
]
