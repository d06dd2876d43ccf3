"""topseg: train-free image segmentation via cubical persistent homology."""

__version__ = "0.1.0"

from .grid import BinaryMask, GrayImage, LabelMap  # noqa: F401
