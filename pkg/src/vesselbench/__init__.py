"""Vessel segmentation workbench.

Phantom generation, interactive ground truth, balanced patch training of
2D/3D U-Nets built on a from-scratch differentiable engine, tiled
inference with post-processing, and overlap/surface-distance evaluation.
"""

from .volume import Volume, LabelMask, SliceImage, extract_slice, intensity_histogram
from .nifti import read_nifti, write_nifti
from .errors import VesselBenchError

__version__ = "0.1.0"

__all__ = [
    "Volume",
    "LabelMask",
    "SliceImage",
    "extract_slice",
    "intensity_histogram",
    "read_nifti",
    "write_nifti",
    "VesselBenchError",
    "__version__",
]
