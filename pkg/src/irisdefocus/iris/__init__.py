"""Iris authentication: segmentation, normalization, encoding, matching."""

from .encode import IrisCode, encode, log_gabor_response
from .match import (
    HD_AUTH,
    HDMatrix,
    MatchReport,
    NoComparableBitsError,
    ThresholdSelection,
    ThresholdSelectionError,
    UndefinedCRRError,
    crr,
    crr_from_hds,
    exclude_noisy,
    hamming_distance,
    mean_hd_matrix,
    pairwise_hd,
    select_threshold,
)
from .normalize import NormalizedIris, normalize
from .segment import (
    IrisBoundary,
    SegmentationError,
    SegmentParams,
    boundary_from_truth,
    segment_iris,
)

__all__ = [
    "HD_AUTH", "HDMatrix", "IrisBoundary", "IrisCode", "MatchReport",
    "NoComparableBitsError", "NormalizedIris", "SegmentParams", "SegmentationError",
    "ThresholdSelection", "ThresholdSelectionError", "UndefinedCRRError",
    "boundary_from_truth", "crr", "crr_from_hds", "encode", "exclude_noisy",
    "hamming_distance", "log_gabor_response", "mean_hd_matrix", "normalize",
    "pairwise_hd", "segment_iris", "select_threshold",
]
