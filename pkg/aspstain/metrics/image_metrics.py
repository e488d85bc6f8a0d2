"""
Paired image metrics: SSIM and the perceptual hash value (PHV)
"""

from dataclasses import dataclass
from typing import List, Optional, Union

import numpy as np
import torch
import torch.nn.functional as F

from aspstain.core.exceptions import ConfigurationError, ShapeError
from aspstain.metrics.features import Extractor, staged_features

ImageLike = Union[np.ndarray, torch.Tensor]

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
DATA_RANGE = 2.0
K1, K2 = 0.01, 0.03
PHV_THRESHOLD = 0.01
LUMA = (0.299, 0.587, 0.114)


def _luminance(image: ImageLike) -> torch.Tensor:
    """H x W float64 luminance of an H x W x 3 array, a (1 x) 3 x H x W tensor or an H x W map"""
    if isinstance(image, torch.Tensor):
        t = image.detach().cpu().double()
        if t.dim() == 4:
            t = t[0]
        if t.dim() == 3:
            t = t.permute(1, 2, 0)
    else:
        t = torch.from_numpy(np.asarray(image, dtype=np.float64))
    if t.dim() == 2:
        return t
    if t.dim() != 3 or t.shape[2] != 3:
        raise ShapeError(f"Expected an RGB or grayscale image, got shape {tuple(t.shape)}")
    return t @ torch.tensor(LUMA, dtype=torch.float64)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> torch.Tensor:
    coords = torch.arange(size, dtype=torch.float64) - (size - 1) / 2.0
    g = torch.exp(-(coords ** 2) / (2.0 * sigma ** 2))
    g = g / g.sum()
    return torch.outer(g, g)


def ssim(a: ImageLike, b: ImageLike, data_range: float = DATA_RANGE) -> float:
    """
    Mean SSIM over all 11x11 Gaussian windows (sigma 1.5) of the luminance.

    Images are expected in [-1, 1] (data range 2).
    """
    lum_a, lum_b = _luminance(a), _luminance(b)
    if lum_a.shape != lum_b.shape:
        raise ShapeError(f"Shape mismatch: {tuple(lum_a.shape)} vs {tuple(lum_b.shape)}")
    if min(lum_a.shape) < SSIM_WINDOW:
        raise ShapeError(f"Images must be at least {SSIM_WINDOW} pixels on each side")

    window = gaussian_window().reshape(1, 1, SSIM_WINDOW, SSIM_WINDOW)
    x = lum_a.reshape(1, 1, *lum_a.shape)
    y = lum_b.reshape(1, 1, *lum_b.shape)
    c1 = (K1 * data_range) ** 2
    c2 = (K2 * data_range) ** 2

    mu_x = F.conv2d(x, window)
    mu_y = F.conv2d(y, window)
    sigma_x = F.conv2d(x * x, window) - mu_x * mu_x
    sigma_y = F.conv2d(y * y, window) - mu_y * mu_y
    sigma_xy = F.conv2d(x * y, window) - mu_x * mu_y

    ssim_map = ((2 * mu_x * mu_y + c1) * (2 * sigma_xy + c2)) / (
        (mu_x * mu_x + mu_y * mu_y + c1) * (sigma_x + sigma_y + c2)
    )
    return float(ssim_map.mean())


@dataclass(frozen=True)
class PhvResult:
    layers: List[float]

    @property
    def average(self) -> float:
        return float(np.mean(self.layers))


def _channel_normalize(feat: torch.Tensor, eps: float = 1e-10) -> torch.Tensor:
    norm = torch.sqrt((feat.double() ** 2).sum(dim=1, keepdim=True))
    return feat.double() / (norm + eps)


def phv(
    a: ImageLike,
    b: ImageLike,
    threshold: float = PHV_THRESHOLD,
    extractor: Optional[Extractor] = None,
) -> PhvResult:
    """
    Perceptual hash value per extractor stage.

    Features of both images are normalized across channels at every
    position; PHV of a stage is the fraction of feature elements whose
    absolute difference exceeds `threshold`.
    """
    if extractor is None:
        raise ConfigurationError("PHV needs a feature extractor")
    if tuple(np.shape(a)) != tuple(np.shape(b)):
        raise ShapeError(f"Shape mismatch: {tuple(np.shape(a))} vs {tuple(np.shape(b))}")
    layers = []
    for feat_a, feat_b in zip(staged_features(a, extractor), staged_features(b, extractor)):
        diff = (_channel_normalize(feat_a) - _channel_normalize(feat_b)).abs()
        layers.append(float((diff > threshold).double().mean()))
    return PhvResult(layers)
