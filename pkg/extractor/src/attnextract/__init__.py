"""VGG16 activation/gradient tensor extraction for attention-guided frame association."""

from .tensor_files import write_tensor
from .tum import SequenceLayoutError, TumFrame, extract_sequence, read_rgb_index
from .vgg import ExtractionConfig, VggAttentionExtractor

__version__ = "0.1.0"

__all__ = [
    "ExtractionConfig",
    "SequenceLayoutError",
    "TumFrame",
    "VggAttentionExtractor",
    "extract_sequence",
    "read_rgb_index",
    "write_tensor",
]
