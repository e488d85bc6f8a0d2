"""
Contrastive Losses - Patch-level InfoNCE objectives for paired translation.

Responsibilities:
- InfoNCE over one anchor, one positive and N negatives
- PatchNCE (generated vs input) and Supervised PatchNCE (generated vs groundtruth)
- Adaptive Supervised PatchNCE: per-location weights from anchor-positive
  similarity, phased in over training by a scheduling function
- Anchor-positive similarity heatmaps and histograms

Every function here is a pure function of its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Optional, Sequence, Union

import numpy as np
import torch
from pydantic import BaseModel, Field, model_validator

from aspstain.core.exceptions import (
    AlignmentError,
    ConfigurationError,
    DegenerateWeightsError,
    DomainError,
    EmptyInputError,
    InvalidEmbeddingError,
    RangeError,
    ShapeError,
)
from aspstain.schemas.records import SimilarityHistogramRecord, SimilarityMapRecord

Number = Union[float, torch.Tensor]

DOMAIN_SLACK = 1e-6
ZERO_NORM = 1e-12
UNIT_NORM_TOLERANCE = 1e-5


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EmbeddingLayer:
    """Unit-norm patch embeddings of one tapped layer at sampled grid locations"""
    layer_id: int
    locations: torch.Tensor
    embeddings: torch.Tensor
    grid_shape: tuple[int, int]

    def __post_init__(self):
        if self.embeddings.dim() != 2:
            raise ShapeError(f"Layer {self.layer_id}: embeddings must be S x D, got {tuple(self.embeddings.shape)}")
        if self.locations.dim() != 1 or self.locations.shape[0] != self.embeddings.shape[0]:
            raise ShapeError(f"Layer {self.layer_id}: one location index per embedding row is required")
        if self.embeddings.shape[0] < 2:
            raise ShapeError(f"Layer {self.layer_id}: at least two locations are needed so a negative exists")

    @property
    def num_locations(self) -> int:
        return int(self.embeddings.shape[0])

    def detach(self) -> "EmbeddingLayer":
        return EmbeddingLayer(self.layer_id, self.locations, self.embeddings.detach(), self.grid_shape)


@dataclass(frozen=True)
class EmbeddingStack:
    """Multi-layer set of patch embeddings sharing one location sampling"""
    layers: tuple[EmbeddingLayer, ...]

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ShapeError("An embedding stack needs at least one layer")

    @property
    def layer_ids(self) -> list[int]:
        return [layer.layer_id for layer in self.layers]

    def layer(self, layer_id: int) -> EmbeddingLayer:
        for layer in self.layers:
            if layer.layer_id == layer_id:
                return layer
        raise RangeError(f"Layer id {layer_id} not in stack (available: {self.layer_ids})")

    def detach(self) -> "EmbeddingStack":
        return EmbeddingStack(tuple(layer.detach() for layer in self.layers))

    def assert_unit_norm(self, tolerance: float = UNIT_NORM_TOLERANCE) -> None:
        """Raise InvalidEmbeddingError unless every row has unit Euclidean norm"""
        for layer in self.layers:
            norms = layer.embeddings.detach().norm(dim=1)
            worst = float((norms - 1.0).abs().max())
            if worst > tolerance:
                raise InvalidEmbeddingError(
                    f"Layer {layer.layer_id}: embedding norms deviate from 1 by {worst:.2e}"
                )


class ContrastiveConfig(BaseModel):
    """Temperature, negatives budget and per-layer sampling budget"""
    temperature: float = Field(0.07, gt=0)
    negatives_per_anchor: Optional[int] = Field(None, ge=1)
    num_locations: int = Field(256, ge=2)

    @model_validator(mode="after")
    def _check_negatives(self):
        if self.negatives_per_anchor is not None and self.negatives_per_anchor > self.num_locations - 1:
            raise ValueError("negatives_per_anchor must not exceed num_locations - 1")
        return self

    def resolve_negatives(self, num_locations: int) -> int:
        """Number of negatives per anchor for a layer with `num_locations` samples"""
        if self.negatives_per_anchor is None:
            return num_locations - 1
        if self.negatives_per_anchor > num_locations - 1:
            raise ConfigurationError(
                f"negatives_per_anchor={self.negatives_per_anchor} needs at least "
                f"{self.negatives_per_anchor + 1} locations, layer has {num_locations}"
            )
        return self.negatives_per_anchor


class WeightFamily(BaseModel):
    """Weight function h mapping anchor-positive similarity in [-1, 1] to [0, 1]"""
    name: Literal["zero", "linear", "sigmoid", "lambda"] = "lambda"
    sigmoid_k: float = Field(10.0, gt=0)
    lambda_low: float = 0.0
    lambda_high: float = 0.5

    @model_validator(mode="after")
    def _check_breakpoints(self):
        if self.lambda_high <= self.lambda_low:
            raise ValueError("lambda_high must be greater than lambda_low")
        return self


class ScheduleFamily(BaseModel):
    """Scheduling function g mapping training progress in [0, 1] to [0, 1]"""
    name: Literal["uniform", "linear", "top"] = "linear"
    top_start: float = Field(0.5, ge=0, lt=1)


class AdaptiveConfig(BaseModel):
    """Everything that determines an ASP variant at iteration t of T"""
    weight: WeightFamily = Field(default_factory=WeightFamily)
    schedule: ScheduleFamily = Field(default_factory=ScheduleFamily)
    current_iter: int = Field(0, ge=0)
    total_iters: int = Field(1, gt=0)
    normalization: Literal["sum", "count"] = "sum"

    @model_validator(mode="after")
    def _check_progress(self):
        if self.current_iter > self.total_iters:
            raise ValueError("current_iter must not exceed total_iters")
        return self

    @property
    def progress(self) -> float:
        return self.current_iter / self.total_iters

    @property
    def variant_name(self) -> str:
        if self.weight.name == "zero":
            return "sp"
        return f"asp({self.weight.name},{self.schedule.name})"

    def at(self, current_iter: int, total_iters: Optional[int] = None) -> "AdaptiveConfig":
        """Same variant at another point of training"""
        data = self.model_dump()
        data["current_iter"] = current_iter
        if total_iters is not None:
            data["total_iters"] = total_iters
        return AdaptiveConfig.model_validate(data)


@dataclass(frozen=True)
class SimilarityMap:
    """Anchor-positive cosine similarities of one layer at its sampled locations"""
    layer_id: int
    grid_shape: tuple[int, int]
    locations: np.ndarray
    values: np.ndarray

    def to_grid(self) -> np.ndarray:
        """Dense row-major grid with NaN at unsampled cells"""
        height, width = self.grid_shape
        grid = np.full(height * width, np.nan, dtype=np.float64)
        grid[self.locations] = self.values
        return grid.reshape(height, width)

    def to_record(self) -> SimilarityMapRecord:
        grid = [[None if np.isnan(v) else float(v) for v in row] for row in self.to_grid()]
        return SimilarityMapRecord(
            layer_id=self.layer_id,
            grid_shape=list(self.grid_shape),
            locations=[int(i) for i in self.locations],
            values=[float(v) for v in self.values],
            grid=grid,
        )


@dataclass(frozen=True)
class SimilarityHistogram:
    counts: np.ndarray
    edges: np.ndarray

    def to_record(self, step: Optional[int] = None) -> SimilarityHistogramRecord:
        return SimilarityHistogramRecord(
            step=step,
            bins=int(self.counts.shape[0]),
            edges=[float(e) for e in self.edges],
            counts=[int(c) for c in self.counts],
        )


# ---------------------------------------------------------------------------
# InfoNCE
# ---------------------------------------------------------------------------


def _check_nonzero(vectors: torch.Tensor, what: str) -> None:
    norms = vectors.detach().reshape(-1, vectors.shape[-1]).norm(dim=1)
    if bool((norms < ZERO_NORM).any()):
        raise InvalidEmbeddingError(f"{what} contains a zero-norm embedding")


def info_nce(
    anchor: torch.Tensor,
    positive: torch.Tensor,
    negatives: torch.Tensor,
    cfg: ContrastiveConfig,
) -> torch.Tensor:
    """
    InfoNCE loss of one anchor against one positive and N negatives.

    Args:
        anchor: D-vector
        positive: D-vector
        negatives: N x D matrix (a single D-vector counts as N = 1)
        cfg: Contrastive configuration (temperature)

    Returns:
        Scalar tensor -log softmax of the positive logit
    """
    if negatives.dim() == 1:
        negatives = negatives.unsqueeze(0)
    if negatives.shape[0] == 0:
        raise ConfigurationError("InfoNCE needs at least one negative")
    _check_nonzero(anchor, "anchor")
    _check_nonzero(positive, "positive")
    _check_nonzero(negatives, "negatives")

    logits = torch.cat([(anchor * positive).sum().reshape(1), negatives @ anchor]) / cfg.temperature
    return torch.logsumexp(logits, dim=0) - logits[0]


def _negative_index(num_locations: int, num_negatives: int, device: torch.device) -> torch.Tensor:
    # row s holds s+1, ..., s+N (mod S): all other locations when N = S - 1
    anchors = torch.arange(num_locations, device=device).unsqueeze(1)
    offsets = torch.arange(1, num_negatives + 1, device=device).unsqueeze(0)
    return (anchors + offsets) % num_locations


def per_location_nce(
    anchors: torch.Tensor,
    targets: torch.Tensor,
    cfg: ContrastiveConfig,
) -> torch.Tensor:
    """
    InfoNCE at every location of one layer with internal negatives.

    The positive of anchor s is target row s; its negatives are other target rows.

    Returns:
        S-vector of per-location losses
    """
    _check_nonzero(anchors, "anchor embeddings")
    _check_nonzero(targets, "target embeddings")
    num_locations = anchors.shape[0]
    num_negatives = cfg.resolve_negatives(num_locations)

    logits = anchors @ targets.t() / cfg.temperature
    positive = logits.diagonal()
    negatives = logits.gather(1, _negative_index(num_locations, num_negatives, logits.device))
    stacked = torch.cat([positive.unsqueeze(1), negatives], dim=1)
    return torch.logsumexp(stacked, dim=1) - positive


def _check_aligned(first: EmbeddingStack, second: EmbeddingStack) -> None:
    if len(first.layers) != len(second.layers):
        raise AlignmentError(f"Stacks have {len(first.layers)} and {len(second.layers)} layers")
    for a, b in zip(first.layers, second.layers):
        if a.layer_id != b.layer_id:
            raise AlignmentError(f"Layer ids differ: {a.layer_id} vs {b.layer_id}")
        if a.embeddings.shape != b.embeddings.shape:
            raise AlignmentError(
                f"Layer {a.layer_id}: shapes differ {tuple(a.embeddings.shape)} vs {tuple(b.embeddings.shape)}"
            )
        if not torch.equal(a.locations.cpu(), b.locations.cpu()):
            raise AlignmentError(f"Layer {a.layer_id}: sampled locations differ")


# ---------------------------------------------------------------------------
# Composite losses
# ---------------------------------------------------------------------------


def weighted_layer_mean(
    weights: torch.Tensor,
    losses: torch.Tensor,
    normalization: Literal["sum", "count"] = "sum",
) -> torch.Tensor:
    """
    Combine per-location losses of one layer with non-negative weights.

    With "sum" normalization the weights are rescaled to sum to 1, so uniform
    weights give the plain mean. With "count" they are rescaled to sum to the
    number of locations.
    """
    total = weights.sum()
    if not bool(total > 0):
        raise DegenerateWeightsError("All location weights of a layer are zero")
    normalized = weights / total
    if normalization == "count":
        normalized = normalized * weights.shape[0]
    return (normalized.detach() * losses).sum()


def weighted_nce_loss(
    output_embeds: EmbeddingStack,
    target_embeds: EmbeddingStack,
    weights: Optional[Sequence[torch.Tensor]],
    cfg: ContrastiveConfig,
    normalization: Literal["sum", "count"] = "sum",
) -> torch.Tensor:
    """
    Mean over layers of the weighted per-layer InfoNCE.

    Args:
        output_embeds: Anchors (embeddings of the generated image)
        target_embeds: Positives and negatives, aligned with the anchors
        weights: One S_l-vector per layer, or None for uniform weights.
                 Weights are constants: no gradient flows through them.
        cfg: Contrastive configuration
        normalization: "sum" or "count"

    Raises:
        InvalidEmbeddingError: If any embedding row is not unit-norm
    """
    _check_aligned(output_embeds, target_embeds)
    output_embeds.assert_unit_norm()
    target_embeds.assert_unit_norm()
    if weights is not None and len(weights) != len(output_embeds.layers):
        raise ShapeError(f"Expected {len(output_embeds.layers)} weight vectors, got {len(weights)}")

    layer_terms = []
    for index, (out_layer, tgt_layer) in enumerate(zip(output_embeds.layers, target_embeds.layers)):
        losses = per_location_nce(out_layer.embeddings, tgt_layer.embeddings, cfg)
        if weights is None:
            layer_weights = torch.ones_like(losses)
        else:
            layer_weights = weights[index].detach().to(losses)
            if layer_weights.shape != losses.shape:
                raise ShapeError(
                    f"Layer {out_layer.layer_id}: weights shape {tuple(layer_weights.shape)} "
                    f"does not match {tuple(losses.shape)}"
                )
        layer_terms.append(weighted_layer_mean(layer_weights, losses, normalization))
    return torch.stack(layer_terms).mean()


def patch_nce_loss(
    output_embeds: EmbeddingStack,
    input_embeds: EmbeddingStack,
    cfg: ContrastiveConfig,
) -> torch.Tensor:
    """PatchNCE: anchors from the generated image, positives/negatives from the input image"""
    return weighted_nce_loss(output_embeds, input_embeds, None, cfg)


def sp_loss(
    output_embeds: EmbeddingStack,
    gt_embeds: EmbeddingStack,
    cfg: ContrastiveConfig,
) -> torch.Tensor:
    """Supervised PatchNCE: positives/negatives from the groundtruth image"""
    return weighted_nce_loss(output_embeds, gt_embeds, None, cfg)


# ---------------------------------------------------------------------------
# Weighting and scheduling
# ---------------------------------------------------------------------------


def weight_fn(similarity: Number, family: WeightFamily) -> Number:
    """
    Weight h(C) of an anchor-positive similarity C.

    Families:
        zero    -> 1
        linear  -> (C + 1) / 2
        sigmoid -> 1 / (1 + exp(-k C))
        lambda  -> clamp((C - c0) / (c1 - c0), 0, 1)

    Accepts a float or a tensor and returns the same kind.
    """
    scalar = not isinstance(similarity, torch.Tensor)
    sim = torch.as_tensor(similarity, dtype=torch.float64 if scalar else None)
    if bool((sim < -1.0 - DOMAIN_SLACK).any()) or bool((sim > 1.0 + DOMAIN_SLACK).any()):
        raise DomainError(f"Similarity must lie in [-1, 1], got range [{float(sim.min())}, {float(sim.max())}]")
    sim = sim.clamp(-1.0, 1.0)

    if family.name == "zero":
        out = torch.ones_like(sim)
    elif family.name == "linear":
        out = (sim + 1.0) / 2.0
    elif family.name == "sigmoid":
        out = torch.sigmoid(family.sigmoid_k * sim)
    else:
        out = ((sim - family.lambda_low) / (family.lambda_high - family.lambda_low)).clamp(0.0, 1.0)
    return float(out) if scalar else out


def schedule_fn(progress: float, family: ScheduleFamily) -> float:
    """
    Scheduling value g(u) for training progress u = t / T.

    Families:
        uniform -> 0
        linear  -> u
        top     -> 0 below u0, then a linear ramp reaching 1 at u = 1
    """
    if progress < -DOMAIN_SLACK or progress > 1.0 + DOMAIN_SLACK:
        raise DomainError(f"Progress must lie in [0, 1], got {progress}")
    progress = min(max(float(progress), 0.0), 1.0)

    if family.name == "uniform":
        return 0.0
    if family.name == "linear":
        return progress
    if progress < family.top_start:
        return 0.0
    return (progress - family.top_start) / (1.0 - family.top_start)


def _blend(schedule_value: float, weight: Number) -> Number:
    # (1 - g) * 1 + g * h, written so that g = 0 or h = 1 gives exactly 1
    return 1.0 - schedule_value * (1.0 - weight)


def adaptive_weight(anchor: torch.Tensor, positive: torch.Tensor, adaptive: AdaptiveConfig) -> float:
    """
    Scheduled weight w_t(v, v+) of one anchor-positive pair.

    Returns:
        (1 - g(t/T)) + g(t/T) * h(v . v+)
    """
    similarity = float((anchor.detach() * positive.detach()).sum())
    similarity = min(max(similarity, -1.0), 1.0)
    g = schedule_fn(adaptive.progress, adaptive.schedule)
    return float(_blend(g, weight_fn(similarity, adaptive.weight)))


def asp_location_weights(
    output_embeds: EmbeddingStack,
    gt_embeds: EmbeddingStack,
    adaptive: AdaptiveConfig,
) -> list[torch.Tensor]:
    """Raw (unnormalized) scheduled weights w_t for every layer and location"""
    _check_aligned(output_embeds, gt_embeds)
    g = schedule_fn(adaptive.progress, adaptive.schedule)
    weights = []
    for out_layer, gt_layer in zip(output_embeds.layers, gt_embeds.layers):
        with torch.no_grad():
            similarity = (out_layer.embeddings * gt_layer.embeddings).sum(dim=1).clamp(-1.0, 1.0)
            weights.append(_blend(g, weight_fn(similarity, adaptive.weight)))
    return weights


def asp_loss(
    output_embeds: EmbeddingStack,
    gt_embeds: EmbeddingStack,
    cfg: ContrastiveConfig,
    adaptive: AdaptiveConfig,
) -> torch.Tensor:
    """
    Adaptive Supervised PatchNCE.

    Per layer, each location's InfoNCE is weighted by w_t / W_t where
    W_t = sum of w_t over the layer; the result is averaged over layers.
    With the zero weight family this equals sp_loss.
    """
    weights = asp_location_weights(output_embeds, gt_embeds, adaptive)
    return weighted_nce_loss(output_embeds, gt_embeds, weights, cfg, adaptive.normalization)


# ---------------------------------------------------------------------------
# Similarity diagnostics
# ---------------------------------------------------------------------------


def similarity_heatmap(output_embeds: EmbeddingStack, gt_embeds: EmbeddingStack, layer: int) -> SimilarityMap:
    """Anchor-positive cosine similarity C_s at every sampled location of layer `layer`"""
    _check_aligned(output_embeds, gt_embeds)
    out_layer = output_embeds.layer(layer)
    gt_layer = gt_embeds.layer(layer)
    with torch.no_grad():
        values = (out_layer.embeddings * gt_layer.embeddings).sum(dim=1).clamp(-1.0, 1.0)
    return SimilarityMap(
        layer_id=out_layer.layer_id,
        grid_shape=tuple(out_layer.grid_shape),
        locations=out_layer.locations.cpu().numpy().astype(np.int64),
        values=values.cpu().double().numpy(),
    )


def similarity_histogram(maps: Sequence[SimilarityMap], bins: int) -> SimilarityHistogram:
    """Histogram of all similarity values over uniform bins spanning [-1, 1]"""
    if bins < 1:
        raise ConfigurationError(f"bins must be >= 1, got {bins}")
    if not maps:
        raise EmptyInputError("No similarity maps given")
    values = np.concatenate([np.asarray(m.values, dtype=np.float64) for m in maps])
    if values.size == 0:
        raise EmptyInputError("Similarity maps hold no values")
    counts, edges = np.histogram(values, bins=bins, range=(-1.0, 1.0))
    return SimilarityHistogram(counts=counts, edges=edges)
