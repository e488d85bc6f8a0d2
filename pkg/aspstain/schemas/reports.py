"""
Report schemas: metric rows and dataset manifests
"""

from pydantic import BaseModel, Field
from typing import Any, Dict, List, Optional

from aspstain.schemas.records import SCHEMA_VERSION


class MetricRow(BaseModel):
    """One (dataset, method) row of the evaluation table"""
    dataset: str
    method: str
    ssim: float
    phv_layers: List[float] = Field(min_length=4, max_length=4)
    phv_avg: float = Field(ge=0.0, le=1.0)
    fid: float = Field(ge=0.0)
    kid_x1000: float
    num_images: int = 0


class SynthPairRecord(BaseModel):
    """Provenance of one synthetic pair"""
    id: str
    corrupted: bool
    corruption: Optional[str] = None


class SynthManifest(BaseModel):
    """Contents of a synthetic dataset's manifest.json"""
    schema_version: int = SCHEMA_VERSION
    config: Dict[str, Any]
    splits: Dict[str, List[SynthPairRecord]]
