"""
Feature extractors for the distribution metrics (FID, KID) and for PHV.

Every extractor exposes four staged feature maps and one pooled feature
vector per image. Inputs are N x 3 x H x W tensors in [-1, 1].
"""

import math
from typing import List, Literal, Optional, Sequence, Union

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from aspstain.core.exceptions import ConfigurationError, EmptyInputError
from aspstain.utils.helpers import image_to_tensor
from aspstain.utils.logger import get_logger

logger = get_logger(__name__)

ExtractorKind = Literal["tiny", "pretrained"]
TINY_CHANNELS = (16, 32, 64, 64)
INCEPTION_SIZE = 299
NUM_STAGES = 4


class TinyRandomConv(nn.Module):
    """Fixed-seed untrained conv stack: four stride-2 stages, pooled last stage as the feature vector"""
    name = "tiny_random_conv"
    num_stages = NUM_STAGES
    input_size = None

    def __init__(self, seed: int = 0):
        super().__init__()
        layers = []
        in_channels = 3
        for out_channels in TINY_CHANNELS:
            layers.append(nn.Sequential(
                nn.Conv2d(in_channels, out_channels, kernel_size=3, stride=2, padding=1),
                nn.ReLU(),
            ))
            in_channels = out_channels
        self.blocks = nn.ModuleList(layers)
        self.feature_dim = TINY_CHANNELS[-1]

        gen = torch.Generator().manual_seed(seed)
        with torch.no_grad():
            for module in self.modules():
                if isinstance(module, nn.Conv2d):
                    fan_in = module.in_channels * module.kernel_size[0] * module.kernel_size[1]
                    module.weight.copy_(torch.randn(module.weight.shape, generator=gen) * math.sqrt(2.0 / fan_in))
                    module.bias.copy_(torch.randn(module.bias.shape, generator=gen) * 0.1)
        self.requires_grad_(False)
        self.eval()

    def stages(self, images: torch.Tensor) -> List[torch.Tensor]:
        outputs = []
        x = images
        for stage in self.blocks:
            x = stage(x)
            outputs.append(x)
        return outputs

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        return self.stages(images)[-1].mean(dim=(2, 3))


class InceptionExtractor(nn.Module):
    """torchvision Inception-v3: 2048-d pool features; stages after Conv4a, Mixed_5d, Mixed_6e, Mixed_7c"""
    name = "pretrained_inception_like"
    num_stages = NUM_STAGES
    input_size = INCEPTION_SIZE
    feature_dim = 2048

    def __init__(self, weights_path: Optional[str] = None):
        super().__init__()
        from torchvision.models import Inception_V3_Weights, inception_v3

        if weights_path:
            net = inception_v3(weights=None, aux_logits=True, init_weights=False)
            net.load_state_dict(torch.load(weights_path, map_location="cpu", weights_only=True))
        else:
            net = inception_v3(weights=Inception_V3_Weights.IMAGENET1K_V1)
        # inputs are already in [-1, 1]
        net.transform_input = False
        self.net = net
        self.requires_grad_(False)
        self.eval()

    def stages(self, images: torch.Tensor) -> List[torch.Tensor]:
        m = self.net
        x = F.interpolate(images, size=(INCEPTION_SIZE, INCEPTION_SIZE), mode="bilinear", align_corners=False)
        x = m.maxpool1(m.Conv2d_2b_3x3(m.Conv2d_2a_3x3(m.Conv2d_1a_3x3(x))))
        stage1 = m.Conv2d_4a_3x3(m.Conv2d_3b_1x1(x))
        stage2 = m.Mixed_5d(m.Mixed_5c(m.Mixed_5b(m.maxpool2(stage1))))
        stage3 = m.Mixed_6e(m.Mixed_6d(m.Mixed_6c(m.Mixed_6b(m.Mixed_6a(stage2)))))
        stage4 = m.Mixed_7c(m.Mixed_7b(m.Mixed_7a(stage3)))
        return [stage1, stage2, stage3, stage4]

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        return self.stages(images)[-1].mean(dim=(2, 3))


Extractor = Union[TinyRandomConv, InceptionExtractor]


def build_extractor(kind: ExtractorKind = "tiny", seed: int = 0, weights_path: Optional[str] = None) -> Extractor:
    """
    Create a feature extractor.

    The pretrained extractor needs torchvision and Inception-v3 weights (a
    local file or the torchvision download cache). If either is missing,
    the tiny random extractor is used instead and a warning is logged.
    """
    if kind == "tiny":
        return TinyRandomConv(seed)
    if kind != "pretrained":
        raise ConfigurationError(f"Unknown feature extractor '{kind}'")
    try:
        return InceptionExtractor(weights_path)
    except Exception as e:
        logger.warning(f"Pretrained Inception features unavailable ({e}); falling back to tiny_random_conv")
        return TinyRandomConv(seed)


def _as_batch(images: Union[torch.Tensor, Sequence[np.ndarray]]) -> torch.Tensor:
    if isinstance(images, torch.Tensor):
        return images if images.dim() == 4 else images.unsqueeze(0)
    if len(images) == 0:
        raise EmptyInputError("No images to extract features from")
    return torch.cat([image_to_tensor(np.asarray(img, dtype=np.float32)) for img in images], dim=0)


def feature_extract(
    images: Union[torch.Tensor, Sequence[np.ndarray]],
    extractor: Extractor,
) -> np.ndarray:
    """
    Pooled feature vectors, N x feature_dim float64.

    Images go through the extractor one at a time, so a vector depends only
    on its own image and never on the batch it arrived in.
    """
    batch = _as_batch(images).float()
    with torch.no_grad():
        rows = [extractor(batch[i:i + 1]).double().cpu().numpy() for i in range(batch.shape[0])]
    return np.concatenate(rows, axis=0)


def staged_features(image: Union[torch.Tensor, np.ndarray], extractor: Extractor) -> List[torch.Tensor]:
    """The four staged feature maps of a single image"""
    if extractor is None or not hasattr(extractor, "stages"):
        raise ConfigurationError("PHV needs an extractor exposing staged features")
    if isinstance(image, np.ndarray):
        image = image_to_tensor(image.astype(np.float32))
    with torch.no_grad():
        stages = extractor.stages(_as_batch(image).float())
    if len(stages) != NUM_STAGES:
        raise ConfigurationError(f"Extractor exposes {len(stages)} stages, {NUM_STAGES} are required")
    return stages
