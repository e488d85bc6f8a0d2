"""
Helper functions
"""

from pathlib import Path
from typing import Union

import numpy as np
import torch
from PIL import Image

PathLike = Union[str, Path]


def derive_seed(*keys: int) -> int:
    """
    Derive a 32-bit seed from a sequence of integer keys.

    The same keys always give the same seed, and distinct key tuples give
    statistically independent seeds.

    Example:
        derive_seed(crop_seed, step)
    """
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


def uint8_to_signed(image: np.ndarray) -> np.ndarray:
    """Map an 8-bit image to float32 values in [-1, 1]"""
    return image.astype(np.float32) / 127.5 - 1.0


def signed_to_uint8(image: np.ndarray) -> np.ndarray:
    """Map float values in [-1, 1] to an 8-bit image"""
    return np.clip(np.rint((image + 1.0) * 127.5), 0, 255).astype(np.uint8)


def read_png(path: PathLike) -> np.ndarray:
    """Read an RGB image as an H x W x 3 uint8 array"""
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8).copy()


def write_png(path: PathLike, image: np.ndarray) -> None:
    """Write an H x W x 3 (or H x W) uint8 array as PNG"""
    Image.fromarray(image).save(path, format="PNG")


def image_to_tensor(image: np.ndarray, device: str = "cpu") -> torch.Tensor:
    """Convert an H x W x 3 float image to a 1 x 3 x H x W tensor"""
    return torch.from_numpy(np.ascontiguousarray(image.transpose(2, 0, 1))).unsqueeze(0).to(device)


def tensor_to_image(tensor: torch.Tensor) -> np.ndarray:
    """Convert a 1 x 3 x H x W (or 3 x H x W) tensor to an H x W x 3 float32 array"""
    if tensor.dim() == 4:
        tensor = tensor[0]
    return tensor.detach().cpu().float().numpy().transpose(1, 2, 0)


def set_requires_grad(module: torch.nn.Module, requires_grad: bool) -> None:
    """Enable or disable gradients for every parameter of a module"""
    for param in module.parameters():
        param.requires_grad_(requires_grad)
