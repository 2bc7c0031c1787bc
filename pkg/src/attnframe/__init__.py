"""Attention-guided CNN feature fusion and loop-closure frame association toolkit."""

from .association import (
    AdaptiveGate,
    AssociationConfig,
    CandidateMatch,
    Keyframe,
    KeyframeStore,
    RetrievalReport,
    adaptive_filter,
    evaluate_retrieval,
    write_match_log,
)
from .encoder import (
    EncoderConfig,
    FrameDescriptor,
    RandomRnnWeights,
    channel_pair_pool,
    encode,
    make_weights,
    read_descriptor_set,
    regrid,
    write_descriptor_set,
)
from .evaluation import (
    AlignedPair,
    TrajectoryPose,
    associate,
    ate_rmse,
    parse_trajectory,
    rigid_align,
)
from .fusion import FusionStrategy, NormScope, channel_saliency, fuse, minmax_normalize
from .kmeans_index import IndexParams, KMeansTree, SearchResult
from .tensors import (
    FrameRecord,
    ManifestError,
    SequenceManifest,
    TensorFormatError,
    read_manifest,
    read_tensor,
    validate_tensor,
    write_tensor,
)

__version__ = "0.1.0"

__all__ = [
    "AdaptiveGate",
    "AlignedPair",
    "AssociationConfig",
    "CandidateMatch",
    "EncoderConfig",
    "FrameDescriptor",
    "FrameRecord",
    "FusionStrategy",
    "IndexParams",
    "Keyframe",
    "KeyframeStore",
    "KMeansTree",
    "ManifestError",
    "NormScope",
    "RandomRnnWeights",
    "RetrievalReport",
    "SearchResult",
    "SequenceManifest",
    "TensorFormatError",
    "TrajectoryPose",
    "adaptive_filter",
    "associate",
    "ate_rmse",
    "channel_pair_pool",
    "channel_saliency",
    "encode",
    "evaluate_retrieval",
    "fuse",
    "make_weights",
    "minmax_normalize",
    "parse_trajectory",
    "read_descriptor_set",
    "read_manifest",
    "read_tensor",
    "regrid",
    "rigid_align",
    "validate_tensor",
    "write_descriptor_set",
    "write_match_log",
    "write_tensor",
]
