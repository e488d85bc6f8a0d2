"""
Artifact schemas written during training and visualization
"""

from pydantic import BaseModel
from typing import List, Optional

SCHEMA_VERSION = 1


class WeightSummary(BaseModel):
    """Min/mean/max of the raw ASP weights of one layer"""
    layer_id: int
    min: float
    mean: float
    max: float


class LossRecord(BaseModel):
    """One line of the JSON-lines loss log"""
    schema_version: int = SCHEMA_VERSION
    step: int
    sample_id: Optional[str] = None
    lr: float
    adv_g: float
    adv_d: float
    patchnce: float
    asp: float
    gp: float
    total_g: float
    weights: List[WeightSummary] = []


class SimilarityMapRecord(BaseModel):
    """Anchor-positive similarities of one layer; `grid` is row-major with null at unsampled cells"""
    schema_version: int = SCHEMA_VERSION
    layer_id: int
    grid_shape: List[int]
    locations: List[int]
    values: List[float]
    grid: List[List[Optional[float]]]


class SimilarityHistogramRecord(BaseModel):
    """Histogram of anchor-positive similarities over [-1, 1]"""
    schema_version: int = SCHEMA_VERSION
    step: Optional[int] = None
    bins: int
    edges: List[float]
    counts: List[int]
