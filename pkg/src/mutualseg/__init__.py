"""Online mutual foreground segmentation and registration for two-modality stereo video."""

from .core import DisparityLabeling, FramePair, IntegrityError, MutualSegError
from .inference import MutualSegmenter, SolverConfig
from .segm_model import SegmParams
from .stereo_model import StereoParams

__version__ = "0.1.0"

__all__ = [
    "DisparityLabeling",
    "FramePair",
    "IntegrityError",
    "MutualSegError",
    "MutualSegmenter",
    "SegmParams",
    "SolverConfig",
    "StereoParams",
]
