from aspstain.losses.auxiliary import (
    PyramidConfig,
    adversarial_d_loss,
    adversarial_g_loss,
    gaussian_pyramid,
    gp_loss,
)
from aspstain.losses.contrastive import (
    AdaptiveConfig,
    ContrastiveConfig,
    EmbeddingLayer,
    EmbeddingStack,
    ScheduleFamily,
    SimilarityHistogram,
    SimilarityMap,
    WeightFamily,
    adaptive_weight,
    asp_location_weights,
    asp_loss,
    info_nce,
    patch_nce_loss,
    schedule_fn,
    similarity_heatmap,
    similarity_histogram,
    sp_loss,
    weight_fn,
    weighted_nce_loss,
)

__all__ = [
    "AdaptiveConfig",
    "ContrastiveConfig",
    "EmbeddingLayer",
    "EmbeddingStack",
    "PyramidConfig",
    "ScheduleFamily",
    "SimilarityHistogram",
    "SimilarityMap",
    "WeightFamily",
    "adaptive_weight",
    "adversarial_d_loss",
    "adversarial_g_loss",
    "asp_location_weights",
    "asp_loss",
    "gaussian_pyramid",
    "gp_loss",
    "info_nce",
    "patch_nce_loss",
    "schedule_fn",
    "similarity_heatmap",
    "similarity_histogram",
    "sp_loss",
    "weight_fn",
    "weighted_nce_loss",
]
