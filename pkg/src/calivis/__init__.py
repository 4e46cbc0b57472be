"""Box-calibrated instance masks and cross-frame tracking on precomputed head tensors."""
from .config import PipelineConfig
from .errors import TensorFormatError, ValidationError
from .geometry import Box, BoxDelta
from .pipeline import FrameInputs, decode_frame, run_video

__all__ = [
    "Box",
    "BoxDelta",
    "FrameInputs",
    "PipelineConfig",
    "TensorFormatError",
    "ValidationError",
    "decode_frame",
    "run_video",
]
