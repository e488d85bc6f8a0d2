"""
Translation networks: ResNet generator G, PatchGAN discriminator, and the
projection heads H that turn generator-encoder features into patch embeddings.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Literal, Optional, Sequence

import numpy as np
import torch
import torch.nn as nn
from pydantic import BaseModel, Field, model_validator

from aspstain.core.exceptions import CapacityError, ConfigurationError, RangeError, ShapeError
from aspstain.losses.contrastive import EmbeddingLayer, EmbeddingStack
from aspstain.utils.helpers import derive_seed

NormName = Literal["instance", "batch", "none"]
NUM_DEFAULT_TAPS = 5
EMBEDDING_EPS = 1e-8


###############################################################################
# Specs
###############################################################################


class GeneratorSpec(BaseModel):
    """ResNet generator shape; `tap_layers` index encoder modules whose outputs feed the projector"""
    kind: Literal["resnet", "identity"] = "resnet"
    input_nc: int = 3
    output_nc: int = 3
    ngf: int = Field(64, ge=1)
    n_blocks: int = Field(6, ge=1)
    n_downsampling: int = Field(2, ge=0)
    norm: NormName = "instance"
    tap_layers: Optional[list[int]] = None

    @property
    def encoder_depth(self) -> int:
        # stem (pad, conv, norm, relu) + 3 modules per downsampling + residual blocks
        return 4 + 3 * self.n_downsampling + self.n_blocks

    @model_validator(mode="after")
    def _check_taps(self):
        if self.kind == "identity":
            return self
        if self.tap_layers is None:
            self.tap_layers = default_tap_layers(self)
        if not self.tap_layers:
            raise ValueError("tap_layers must not be empty")
        bad = [t for t in self.tap_layers if t < 0 or t >= self.encoder_depth]
        if bad:
            raise ValueError(f"tap_layers {bad} outside encoder depth 0..{self.encoder_depth - 1}")
        return self


class DiscriminatorSpec(BaseModel):
    """PatchGAN with `layers` convolutions in total"""
    input_nc: int = 3
    ndf: int = Field(64, ge=1)
    layers: int = Field(5, ge=1)
    norm: NormName = "instance"


class ProjectorSpec(BaseModel):
    """Per-tap two-layer perceptron heads mapping features to D-dim embeddings"""
    num_channels: int = Field(256, ge=1)
    use_mlp: bool = True


def default_tap_layers(spec: GeneratorSpec) -> list[int]:
    """
    Five evenly spaced encoder depths from the stem activation through the
    last residual block.
    """
    candidates = [3 + 3 * k for k in range(spec.n_downsampling + 1)]
    candidates += list(range(candidates[-1] + 1, spec.encoder_depth))
    picks = np.linspace(0, len(candidates) - 1, min(NUM_DEFAULT_TAPS, len(candidates)))
    return sorted({candidates[int(round(p))] for p in picks})


###############################################################################
# Helper Functions
###############################################################################


class Identity(nn.Module):
    def forward(self, x):
        return x


def get_norm_layer(norm_type: NormName = "instance"):
    """Return a normalization layer factory

    For InstanceNorm, we do not use learnable affine parameters nor track running statistics.
    """
    if norm_type == "batch":
        return functools.partial(nn.BatchNorm2d, affine=True, track_running_stats=True)
    if norm_type == "instance":
        return functools.partial(nn.InstanceNorm2d, affine=False, track_running_stats=False)
    if norm_type == "none":
        return lambda channels: Identity()
    raise ConfigurationError(f"normalization layer [{norm_type}] is not found")


def init_weights(net: nn.Module, seed: int, init_gain: float = 0.02) -> nn.Module:
    """Normal(0, init_gain) init of conv/linear weights from a private generator"""
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for module in net.modules():
            if isinstance(module, (nn.Conv2d, nn.ConvTranspose2d, nn.Linear)):
                module.weight.copy_(torch.randn(module.weight.shape, generator=gen) * init_gain)
                if module.bias is not None:
                    module.bias.zero_()
            elif isinstance(module, nn.BatchNorm2d):
                module.weight.copy_(1.0 + torch.randn(module.weight.shape, generator=gen) * init_gain)
                module.bias.zero_()
    return net


###############################################################################
# Generator
###############################################################################


class ResnetBlock(nn.Module):
    """Conv block with a skip connection"""

    def __init__(self, dim: int, norm_layer, use_bias: bool):
        super().__init__()
        self.conv_block = nn.Sequential(
            nn.ReflectionPad2d(1),
            nn.Conv2d(dim, dim, kernel_size=3, padding=0, bias=use_bias),
            norm_layer(dim),
            nn.ReLU(True),
            nn.ReflectionPad2d(1),
            nn.Conv2d(dim, dim, kernel_size=3, padding=0, bias=use_bias),
            norm_layer(dim),
        )

    def forward(self, x):
        return x + self.conv_block(x)


class ResnetGenerator(nn.Module):
    """Encoder (stem, strided downsampling, residual blocks) followed by a mirrored decoder"""

    def __init__(self, spec: GeneratorSpec):
        super().__init__()
        self.spec = spec
        norm_layer = get_norm_layer(spec.norm)
        use_bias = spec.norm != "batch"
        ngf = spec.ngf

        encoder = [
            nn.ReflectionPad2d(3),
            nn.Conv2d(spec.input_nc, ngf, kernel_size=7, padding=0, bias=use_bias),
            norm_layer(ngf),
            nn.ReLU(),
        ]
        channels = [spec.input_nc, ngf, ngf, ngf]
        for i in range(spec.n_downsampling):
            mult = 2 ** i
            encoder += [
                nn.Conv2d(ngf * mult, ngf * mult * 2, kernel_size=3, stride=2, padding=1, bias=use_bias),
                norm_layer(ngf * mult * 2),
                nn.ReLU(),
            ]
            channels += [ngf * mult * 2] * 3

        mult = 2 ** spec.n_downsampling
        for _ in range(spec.n_blocks):
            encoder.append(ResnetBlock(ngf * mult, norm_layer, use_bias))
            channels.append(ngf * mult)

        decoder = []
        for i in range(spec.n_downsampling):
            mult = 2 ** (spec.n_downsampling - i)
            decoder += [
                nn.ConvTranspose2d(ngf * mult, ngf * mult // 2, kernel_size=3, stride=2,
                                   padding=1, output_padding=1, bias=use_bias),
                norm_layer(ngf * mult // 2),
                nn.ReLU(True),
            ]
        decoder += [
            nn.ReflectionPad2d(3),
            nn.Conv2d(ngf, spec.output_nc, kernel_size=7, padding=0),
            nn.Tanh(),
        ]

        self.encoder = nn.Sequential(*encoder)
        self.decoder = nn.Sequential(*decoder)
        self.layer_channels = channels

    def _check_input(self, image: torch.Tensor) -> None:
        if image.dim() != 4 or image.shape[1] != self.spec.input_nc:
            raise ShapeError(f"Expected N x {self.spec.input_nc} x H x W input, got {tuple(image.shape)}")
        step = 2 ** self.spec.n_downsampling
        if image.shape[2] % step or image.shape[3] % step:
            raise ShapeError(f"Spatial size {tuple(image.shape[2:])} is not divisible by {step}")

    def _check_taps(self, tap_layers: Sequence[int]) -> None:
        if not tap_layers:
            raise RangeError("At least one tap layer is required")
        bad = [t for t in tap_layers if t < 0 or t >= len(self.encoder)]
        if bad:
            raise RangeError(f"Tap layers {bad} outside encoder depth 0..{len(self.encoder) - 1}")

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        self._check_input(image)
        return self.decoder(self.encoder(image))

    def encode(self, image: torch.Tensor, tap_layers: Optional[Sequence[int]] = None) -> list[torch.Tensor]:
        """Feature maps at the requested encoder depths, in the requested order"""
        tap_layers = list(self.spec.tap_layers if tap_layers is None else tap_layers)
        self._check_taps(tap_layers)
        self._check_input(image)
        wanted = set(tap_layers)
        captured = {}
        feat = image
        for layer_id, layer in enumerate(self.encoder):
            feat = layer(feat)
            if layer_id in wanted:
                captured[layer_id] = feat
            if layer_id >= max(wanted):
                break
        return [captured[t] for t in tap_layers]

    def tap_channels(self, tap_layers: Optional[Sequence[int]] = None) -> list[int]:
        tap_layers = list(self.spec.tap_layers if tap_layers is None else tap_layers)
        self._check_taps(tap_layers)
        return [self.layer_channels[t] for t in tap_layers]

    def tap_grid_shapes(self, height: int, width: int, tap_layers: Optional[Sequence[int]] = None) -> list[tuple[int, int]]:
        """Spatial size of each tapped feature map for an height x width input"""
        tap_layers = list(self.spec.tap_layers if tap_layers is None else tap_layers)
        self._check_taps(tap_layers)
        shapes = []
        for t in tap_layers:
            # the k-th downsampling conv sits at encoder index 4 + 3k
            halvings = sum(1 for k in range(self.spec.n_downsampling) if t >= 4 + 3 * k)
            shapes.append((height // 2 ** halvings, width // 2 ** halvings))
        return shapes


class IdentityGenerator(nn.Module):
    """Parameter-free passthrough generator"""

    def __init__(self, spec: GeneratorSpec):
        super().__init__()
        self.spec = spec

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        if image.dim() != 4 or image.shape[1] != self.spec.output_nc:
            raise ShapeError(f"Expected N x {self.spec.output_nc} x H x W input, got {tuple(image.shape)}")
        return image

    def encode(self, image, tap_layers=None):
        raise ConfigurationError("The identity generator has no encoder")


def build_generator(spec: GeneratorSpec, seed: int = 0) -> nn.Module:
    if spec.kind == "identity":
        return IdentityGenerator(spec)
    return init_weights(ResnetGenerator(spec), seed)


###############################################################################
# Discriminator
###############################################################################


def _discriminator_strides(spec: DiscriminatorSpec) -> list[int]:
    if spec.layers == 1:
        return [1]
    middle = spec.layers - 2
    return [2] + [2 if i < middle - 1 else 1 for i in range(middle)] + [1]


def discriminator_output_size(spec: DiscriminatorSpec, size: int) -> int:
    """Side length of the logit grid for a size x size input (4x4 kernels, padding 1)"""
    for stride in _discriminator_strides(spec):
        size = (size + 2 - 4) // stride + 1
    return size


class PatchDiscriminator(nn.Module):
    """PatchGAN: a grid of real/fake logits, each judging one receptive-field patch"""

    def __init__(self, spec: DiscriminatorSpec):
        super().__init__()
        self.spec = spec
        norm_layer = get_norm_layer(spec.norm)
        use_bias = spec.norm != "batch"
        strides = _discriminator_strides(spec)

        if spec.layers == 1:
            sequence = [nn.Conv2d(spec.input_nc, 1, kernel_size=4, stride=1, padding=1)]
        else:
            sequence = [nn.Conv2d(spec.input_nc, spec.ndf, kernel_size=4, stride=2, padding=1),
                        nn.LeakyReLU(0.2, True)]
            nf = spec.ndf
            for stride in strides[1:-1]:
                nf_prev, nf = nf, min(nf * 2, spec.ndf * 8)
                sequence += [
                    nn.Conv2d(nf_prev, nf, kernel_size=4, stride=stride, padding=1, bias=use_bias),
                    norm_layer(nf),
                    nn.LeakyReLU(0.2, True),
                ]
            sequence += [nn.Conv2d(nf, 1, kernel_size=4, stride=1, padding=1)]
        self.model = nn.Sequential(*sequence)

    def forward(self, image: torch.Tensor) -> torch.Tensor:
        if image.dim() != 4 or image.shape[1] != self.spec.input_nc:
            raise ShapeError(f"Expected N x {self.spec.input_nc} x H x W input, got {tuple(image.shape)}")
        if discriminator_output_size(self.spec, min(image.shape[2:])) < 1:
            raise ShapeError(f"Input {tuple(image.shape[2:])} is too small for {self.spec.layers} layers")
        return self.model(image)


###############################################################################
# Patch sampling and projection
###############################################################################


def sample_locations(grid_h: int, grid_w: int, count: int, seed: int) -> torch.Tensor:
    """Uniform sample of `count` distinct flat grid indices, deterministic in `seed`"""
    total = grid_h * grid_w
    if count < 1:
        raise ConfigurationError(f"count must be positive, got {count}")
    if count > total:
        raise CapacityError(f"Cannot sample {count} locations from a {grid_h}x{grid_w} grid")
    rng = np.random.default_rng(seed)
    return torch.from_numpy(rng.permutation(total)[:count].astype(np.int64))


def _unit_normalize(x: torch.Tensor, eps: float = EMBEDDING_EPS) -> torch.Tensor:
    norm = x.norm(dim=1, keepdim=True)
    x = torch.where(norm < eps, x + eps, x)
    return x / x.norm(dim=1, keepdim=True)


class PatchProjector(nn.Module):
    """One projection head per tapped layer (shared between generated, input and groundtruth images)"""

    def __init__(self, in_channels: Sequence[int], spec: ProjectorSpec):
        super().__init__()
        self.spec = spec
        self.in_channels = list(in_channels)
        heads = []
        for channels in self.in_channels:
            if spec.use_mlp:
                heads.append(nn.Sequential(
                    nn.Linear(channels, spec.num_channels),
                    nn.ReLU(),
                    nn.Linear(spec.num_channels, spec.num_channels),
                ))
            else:
                heads.append(Identity())
        self.heads = nn.ModuleList(heads)

    def forward(self, rows: torch.Tensor, head: int) -> torch.Tensor:
        return _unit_normalize(self.heads[head](rows))


def project_patches(
    features: Sequence[torch.Tensor],
    locations: Sequence[torch.Tensor],
    projector: PatchProjector,
    layer_ids: Optional[Sequence[int]] = None,
) -> EmbeddingStack:
    """
    Embed the feature column at every sampled location of every tapped layer.

    Args:
        features: One 1 x C x H x W map per tapped layer
        locations: One vector of flat indices into H x W per layer
        projector: Projection heads, one per layer
        layer_ids: Ids recorded in the stack (defaults to 0..L-1)

    Returns:
        EmbeddingStack of unit-norm rows
    """
    if len(features) != len(locations) or len(features) != len(projector.heads):
        raise ShapeError(
            f"{len(features)} feature maps, {len(locations)} location sets, {len(projector.heads)} heads"
        )
    layer_ids = list(range(len(features))) if layer_ids is None else list(layer_ids)

    layers = []
    for index, (feat, locs) in enumerate(zip(features, locations)):
        if feat.dim() != 4 or feat.shape[0] != 1:
            raise ShapeError(f"Expected a 1 x C x H x W feature map, got {tuple(feat.shape)}")
        _, channels, height, width = feat.shape
        locs = torch.as_tensor(locs, dtype=torch.long)
        if locs.numel() and (int(locs.min()) < 0 or int(locs.max()) >= height * width):
            raise RangeError(f"Location index out of bounds for a {height}x{width} grid")
        # C x HW column gather keeps the gradient into the encoder contiguous
        rows = feat[0].reshape(channels, height * width)[:, locs.to(feat.device)].t()
        layers.append(EmbeddingLayer(
            layer_id=layer_ids[index],
            locations=locs.cpu(),
            embeddings=projector(rows, index),
            grid_shape=(height, width),
        ))
    return EmbeddingStack(tuple(layers))


###############################################################################
# Network bundle
###############################################################################


@dataclass
class TranslationNetworks:
    generator: nn.Module
    discriminator: PatchDiscriminator
    projector: PatchProjector
    generator_spec: GeneratorSpec
    discriminator_spec: DiscriminatorSpec
    projector_spec: ProjectorSpec

    def to(self, *args, **kwargs) -> "TranslationNetworks":
        for net in (self.generator, self.discriminator, self.projector):
            net.to(*args, **kwargs)
        return self

    def modules(self) -> dict[str, nn.Module]:
        return {"generator": self.generator, "discriminator": self.discriminator, "projector": self.projector}


def build_networks(
    generator_spec: GeneratorSpec,
    discriminator_spec: DiscriminatorSpec,
    projector_spec: ProjectorSpec,
    init_seed: int,
    device: str = "cpu",
) -> TranslationNetworks:
    """Build G, D and H with deterministic, independent initializations"""
    if generator_spec.kind != "resnet":
        raise ConfigurationError("Training requires the resnet generator")
    generator = build_generator(generator_spec, derive_seed(init_seed, 0))
    discriminator = init_weights(PatchDiscriminator(discriminator_spec), derive_seed(init_seed, 1))
    projector = init_weights(
        PatchProjector(generator.tap_channels(), projector_spec), derive_seed(init_seed, 2)
    )
    return TranslationNetworks(
        generator, discriminator, projector, generator_spec, discriminator_spec, projector_spec
    ).to(device)
