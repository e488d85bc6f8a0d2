"""
Checkpoint container: named parameter tensors, optimizer state and a JSON manifest
"""

import json
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

import torch
import torch.nn as nn

from aspstain.core.exceptions import CheckpointError
from aspstain.models.networks import (
    DiscriminatorSpec,
    GeneratorSpec,
    ProjectorSpec,
    TranslationNetworks,
    build_generator,
    build_networks,
)
from aspstain.utils.logger import get_logger

logger = get_logger(__name__)

CHECKPOINT_FORMAT_VERSION = 1


def save_checkpoint(
    path: Union[str, Path],
    manifest: Mapping[str, Any],
    modules: Mapping[str, nn.Module],
    optimizers: Optional[Mapping[str, torch.optim.Optimizer]] = None,
) -> Path:
    """
    Write a checkpoint and its `<name>.json` manifest sidecar.

    Args:
        path: Target `.pt` file
        manifest: JSON-serializable run description (specs, seeds, current_iter, ...)
        modules: Networks to store, by name
        optimizers: Optimizers to store, by name

    Returns:
        Path of the written checkpoint
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    tensors = {name: module.state_dict() for name, module in modules.items()}
    full_manifest = dict(manifest)
    full_manifest["format_version"] = CHECKPOINT_FORMAT_VERSION
    full_manifest["tensors"] = {
        name: {key: list(value.shape) for key, value in state.items()}
        for name, state in tensors.items()
    }

    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "manifest": full_manifest,
        "tensors": tensors,
        "optimizers": {name: opt.state_dict() for name, opt in (optimizers or {}).items()},
    }
    torch.save(payload, path)
    path.with_suffix(".json").write_text(json.dumps(full_manifest, indent=2, sort_keys=True))
    logger.info(f"Saved checkpoint {path}")
    return path


def load_checkpoint(path: Union[str, Path], map_location: str = "cpu") -> Dict[str, Any]:
    """Read a checkpoint written by save_checkpoint"""
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"Checkpoint not found: {path}")
    try:
        payload = torch.load(path, map_location=map_location, weights_only=True)
    except Exception as e:
        raise CheckpointError(f"Cannot read checkpoint {path}: {e}") from e

    if not isinstance(payload, dict) or "manifest" not in payload or "tensors" not in payload:
        raise CheckpointError(f"{path} is not an aspstain checkpoint")
    version = payload.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(
            f"Checkpoint format version {version} is not supported (expected {CHECKPOINT_FORMAT_VERSION})"
        )
    return payload


def restore_modules(payload: Mapping[str, Any], modules: Mapping[str, nn.Module]) -> None:
    """Load stored tensors into the given networks"""
    for name, module in modules.items():
        if name not in payload["tensors"]:
            raise CheckpointError(f"Checkpoint holds no tensors for '{name}'")
        try:
            module.load_state_dict(payload["tensors"][name])
        except RuntimeError as e:
            raise CheckpointError(f"Tensors for '{name}' do not fit the network: {e}") from e


def load_generator(path: Union[str, Path], device: str = "cpu") -> Tuple[nn.Module, Dict[str, Any]]:
    """Rebuild the generator stored in a checkpoint, in eval mode"""
    payload = load_checkpoint(path, map_location=device)
    manifest = payload["manifest"]
    if "generator_spec" not in manifest:
        raise CheckpointError(f"{path} has no generator_spec in its manifest")
    spec = GeneratorSpec.model_validate(manifest["generator_spec"])
    generator = build_generator(spec)
    restore_modules(payload, {"generator": generator})
    return generator.to(device).eval(), manifest


def load_networks(path: Union[str, Path], device: str = "cpu") -> Tuple[TranslationNetworks, Dict[str, Any]]:
    """Rebuild generator, discriminator and projector of a training checkpoint, in eval mode"""
    payload = load_checkpoint(path, map_location=device)
    manifest = payload["manifest"]
    missing = [k for k in ("generator_spec", "discriminator_spec", "projector_spec") if k not in manifest]
    if missing:
        raise CheckpointError(f"{path} is not a training checkpoint (missing {', '.join(missing)})")
    networks = build_networks(
        GeneratorSpec.model_validate(manifest["generator_spec"]),
        DiscriminatorSpec.model_validate(manifest["discriminator_spec"]),
        ProjectorSpec.model_validate(manifest["projector_spec"]),
        init_seed=0,
        device=device,
    )
    restore_modules(payload, networks.modules())
    for module in networks.modules().values():
        module.eval()
    return networks, manifest
