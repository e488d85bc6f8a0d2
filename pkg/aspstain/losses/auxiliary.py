"""
Auxiliary losses completing the generator objective:
Gaussian-pyramid reconstruction and least-squares adversarial terms.
"""

from __future__ import annotations

import math
from typing import List, Optional

import torch
import torch.nn.functional as F
from pydantic import BaseModel, Field, model_validator

from aspstain.core.exceptions import NumericError, ShapeError

BINOMIAL_TAPS = (1.0, 4.0, 6.0, 4.0, 1.0)


class PyramidConfig(BaseModel):
    """Depth and per-level weights of the Gaussian-pyramid loss"""
    levels: int = Field(3, ge=1)
    weights: Optional[List[float]] = None

    @model_validator(mode="after")
    def _fill_weights(self):
        if self.weights is None:
            self.weights = [1.0] * self.levels
        if len(self.weights) != self.levels:
            raise ValueError(f"Expected {self.levels} level weights, got {len(self.weights)}")
        if any(w <= 0 for w in self.weights):
            raise ValueError("Level weights must be positive")
        return self


def binomial_kernel(channels: int, dtype: torch.dtype = torch.float32, device=None) -> torch.Tensor:
    """5x5 binomial kernel, one depthwise copy per channel"""
    taps = torch.tensor(BINOMIAL_TAPS, dtype=dtype, device=device)
    kernel = torch.outer(taps, taps) / 256.0
    return kernel.expand(channels, 1, 5, 5).contiguous()


def check_pyramid_size(height: int, width: int, levels: int) -> None:
    """Raise ShapeError unless a height x width image supports `levels` pyramid levels"""
    step = 2 ** (levels - 1)
    if height % step or width % step:
        raise ShapeError(f"Spatial size {height}x{width} is not divisible by {step} for {levels} levels")
    if levels > 1 and levels > math.log2(min(height, width)) - 2:
        raise ShapeError(f"{levels} levels are too many for a {height}x{width} image")


def _check_pyramid_shape(image: torch.Tensor, levels: int) -> None:
    if image.dim() != 4:
        raise ShapeError(f"Expected an N x C x H x W tensor, got {tuple(image.shape)}")
    check_pyramid_size(int(image.shape[-2]), int(image.shape[-1]), levels)


def gaussian_pyramid(image: torch.Tensor, cfg: PyramidConfig) -> list[torch.Tensor]:
    """
    Blur-and-decimate pyramid.

    Level 0 is the input; level k is level k-1 blurred with the 5x5 binomial
    kernel (reflect padding) and decimated by 2.
    """
    _check_pyramid_shape(image, cfg.levels)
    kernel = binomial_kernel(image.shape[1], image.dtype, image.device)
    pyramid = [image]
    for _ in range(cfg.levels - 1):
        blurred = F.conv2d(F.pad(pyramid[-1], (2, 2, 2, 2), mode="reflect"), kernel, groups=image.shape[1])
        pyramid.append(blurred[:, :, ::2, ::2])
    return pyramid


def gp_loss(generated: torch.Tensor, groundtruth: torch.Tensor, cfg: PyramidConfig) -> torch.Tensor:
    """Weighted sum over pyramid levels of the mean absolute difference"""
    if generated.shape != groundtruth.shape:
        raise ShapeError(f"Shape mismatch: {tuple(generated.shape)} vs {tuple(groundtruth.shape)}")
    total = generated.new_zeros(())
    for weight, gen_level, gt_level in zip(
        cfg.weights, gaussian_pyramid(generated, cfg), gaussian_pyramid(groundtruth, cfg)
    ):
        total = total + weight * (gen_level - gt_level).abs().mean()
    return total


def _check_logits(logits: torch.Tensor, name: str) -> None:
    if bool(torch.isnan(logits).any()):
        raise NumericError(f"{name} logits contain NaN")


def adversarial_g_loss(fake_logits: torch.Tensor) -> torch.Tensor:
    """Least-squares generator loss: mean (D(fake) - 1)^2"""
    _check_logits(fake_logits, "fake")
    return ((fake_logits - 1.0) ** 2).mean()


def adversarial_d_loss(real_logits: torch.Tensor, fake_logits: torch.Tensor) -> torch.Tensor:
    """Least-squares discriminator loss: 0.5 mean (D(real) - 1)^2 + 0.5 mean D(fake)^2"""
    _check_logits(real_logits, "real")
    _check_logits(fake_logits, "fake")
    return 0.5 * ((real_logits - 1.0) ** 2).mean() + 0.5 * (fake_logits ** 2).mean()
