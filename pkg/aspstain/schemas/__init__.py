from aspstain.schemas.records import (
    LossRecord,
    SimilarityHistogramRecord,
    SimilarityMapRecord,
    WeightSummary,
)
from aspstain.schemas.reports import MetricRow, SynthManifest, SynthPairRecord

__all__ = [
    "LossRecord",
    "MetricRow",
    "SimilarityHistogramRecord",
    "SimilarityMapRecord",
    "SynthManifest",
    "SynthPairRecord",
    "WeightSummary",
]
