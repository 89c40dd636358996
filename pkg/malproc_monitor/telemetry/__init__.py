"""Feature schema, trace storage, normalization and the live sampler."""

from .features import (
    FEATURE_COUNT,
    FEATURE_NAMES,
    Label,
    ProcessSnapshot,
    ProcessTrace,
    make_feature_vector,
)
from .normalization import NormalizationStats, compute_stats, denormalize, normalize
from .traces import read_traces, write_traces

__all__ = [
    "FEATURE_COUNT",
    "FEATURE_NAMES",
    "Label",
    "ProcessSnapshot",
    "ProcessTrace",
    "make_feature_vector",
    "NormalizationStats",
    "compute_stats",
    "denormalize",
    "normalize",
    "read_traces",
    "write_traces",
]
