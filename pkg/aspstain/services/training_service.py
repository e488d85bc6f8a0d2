"""
Training Service - Generator/discriminator optimization for paired stain translation

Each step:
1. translate the H&E crop: fake = G(x)
2. least-squares discriminator update on (y real, fake)
3. generator + projector update on
   adv + lambda_patchnce * PatchNCE + lambda_asp * ASP + lambda_gp * GP
   with PatchNCE between fake and x, ASP between fake and y, all on one location sampling
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
import torch
from pydantic import BaseModel, Field
from tqdm import tqdm

from aspstain.config import ExperimentConfig, SeedLineage, settings
from aspstain.core.exceptions import ConfigurationError, DomainError, NumericAbortError
from aspstain.data.dataset import (
    PairedDataset,
    PairedSample,
    load_paired_dataset,
    epoch_order,
    random_crop_pair,
    random_flip_pair,
)
from aspstain.losses.auxiliary import PyramidConfig, adversarial_d_loss, adversarial_g_loss, gp_loss
from aspstain.losses.contrastive import (
    AdaptiveConfig,
    ContrastiveConfig,
    EmbeddingStack,
    asp_location_weights,
    patch_nce_loss,
    similarity_heatmap,
    similarity_histogram,
    sp_loss,
    weighted_nce_loss,
)
from aspstain.models.checkpoint import load_checkpoint, restore_modules, save_checkpoint
from aspstain.models.networks import TranslationNetworks, build_networks, project_patches, sample_locations
from aspstain.schemas.records import LossRecord, WeightSummary
from aspstain.utils.helpers import derive_seed, image_to_tensor, set_requires_grad
from aspstain.utils.logger import get_logger

logger = get_logger(__name__)

LOSS_LOG = "loss_log.jsonl"
SIMILARITY_DIR = "similarity"
CHECKPOINT_DIR = "checkpoints"
RESUME_IGNORED = ("run_name", "out_dir")


class HyperParams(BaseModel):
    """Loss weights and optimizer settings of the generator objective"""
    lambda_patchnce: float = Field(10.0, ge=0)
    lambda_asp: float = Field(10.0, ge=0)
    lambda_gp: float = Field(10.0, ge=0)
    learning_rate: float = Field(2e-4, gt=0)
    adam_betas: Tuple[float, float] = (0.5, 0.999)
    batch_size: int = Field(1, ge=1, le=1)
    crop: int = Field(512, ge=1)
    total_iters: int = Field(1000, ge=1)
    supervised_loss: Literal["asp", "sp", "none"] = "asp"

    @classmethod
    def from_config(cls, config: ExperimentConfig) -> "HyperParams":
        return cls(
            lambda_patchnce=config.lambda_patchnce,
            lambda_asp=config.lambda_asp,
            lambda_gp=config.lambda_gp,
            learning_rate=config.learning_rate,
            adam_betas=(config.beta1, config.beta2),
            batch_size=config.batch_size,
            crop=config.crop,
            total_iters=config.total_iters,
            supervised_loss=config.supervised_loss,
        )


@dataclass
class TrainState:
    """Networks, optimizers and the iteration counter t of T"""
    networks: TranslationNetworks
    optimizer_g: torch.optim.Optimizer
    optimizer_d: torch.optim.Optimizer
    current_iter: int
    total_iters: int
    seeds: SeedLineage


@dataclass
class ContrastiveTargets:
    """Embeddings of the input (PatchNCE side) and groundtruth (ASP side), held constant"""
    input_embeds: Optional[EmbeddingStack]
    gt_embeds: Optional[EmbeddingStack]


@dataclass
class ObjectiveTerms:
    adv_g: torch.Tensor
    patchnce: torch.Tensor
    asp: torch.Tensor
    gp: torch.Tensor
    total: torch.Tensor
    weights: Optional[List[torch.Tensor]] = None


def lr_schedule(t: int, total_iters: int, initial_lr: float) -> float:
    """Constant for the first half of training, then linear decay reaching 0 at t = T"""
    if t < 0 or t > total_iters:
        raise DomainError(f"t must lie in [0, {total_iters}], got {t}")
    half = total_iters / 2.0
    if t < half:
        return initial_lr
    return initial_lr * (total_iters - t) / (total_iters - half)


def create_state(
    config: ExperimentConfig,
    hp: HyperParams,
    device: str = "cpu",
    dtype: torch.dtype = torch.float32,
) -> TrainState:
    seeds = config.seeds()
    networks = build_networks(
        config.generator_spec(), config.discriminator_spec(), config.projector_spec(), seeds.init_seed, device
    ).to(dtype=dtype)
    g_params = list(networks.generator.parameters()) + list(networks.projector.parameters())
    return TrainState(
        networks=networks,
        optimizer_g=torch.optim.Adam(g_params, lr=hp.learning_rate, betas=hp.adam_betas),
        optimizer_d=torch.optim.Adam(networks.discriminator.parameters(), lr=hp.learning_rate, betas=hp.adam_betas),
        current_iter=0,
        total_iters=hp.total_iters,
        seeds=seeds,
    )


def draw_locations(
    networks: TranslationNetworks,
    height: int,
    width: int,
    num_locations: int,
    location_seed: int,
    step: int,
) -> List[torch.Tensor]:
    """One location sample per tapped layer, capped at the layer's grid size"""
    locations = []
    for index, (grid_h, grid_w) in enumerate(networks.generator.tap_grid_shapes(height, width)):
        count = min(num_locations, grid_h * grid_w)
        locations.append(sample_locations(grid_h, grid_w, count, derive_seed(location_seed, step, index)))
    return locations


def embed(networks: TranslationNetworks, image: torch.Tensor, locations: Sequence[torch.Tensor]) -> EmbeddingStack:
    """Patch embeddings of an image through the shared encoder and projection heads"""
    features = networks.generator.encode(image)
    return project_patches(features, locations, networks.projector, layer_ids=networks.generator_spec.tap_layers)


def _uses_supervised(hp: HyperParams) -> bool:
    return hp.supervised_loss != "none" and hp.lambda_asp > 0


def contrastive_targets(
    networks: TranslationNetworks,
    real_he: torch.Tensor,
    real_ihc: torch.Tensor,
    locations: Sequence[torch.Tensor],
    hp: HyperParams,
) -> ContrastiveTargets:
    with torch.no_grad():
        input_embeds = embed(networks, real_he, locations) if hp.lambda_patchnce > 0 else None
        gt_embeds = embed(networks, real_ihc, locations) if _uses_supervised(hp) else None
    return ContrastiveTargets(input_embeds, gt_embeds)


def generator_objective(
    networks: TranslationNetworks,
    fake: torch.Tensor,
    real_ihc: torch.Tensor,
    locations: Sequence[torch.Tensor],
    targets: ContrastiveTargets,
    hp: HyperParams,
    contrastive: ContrastiveConfig,
    adaptive: AdaptiveConfig,
    pyramid: PyramidConfig,
    weights: Optional[Sequence[torch.Tensor]] = None,
) -> ObjectiveTerms:
    """
    The generator loss and its components.

    Terms whose lambda is zero are skipped and reported as 0. ASP weights
    are derived from the detached anchors unless given. The total is
    accumulated in float64.
    """
    zero = fake.new_zeros(())
    adv_g = adversarial_g_loss(networks.discriminator(fake))

    fake_embeds = None
    if hp.lambda_patchnce > 0 or _uses_supervised(hp):
        fake_embeds = embed(networks, fake, locations)

    patchnce = patch_nce_loss(fake_embeds, targets.input_embeds, contrastive) if hp.lambda_patchnce > 0 else zero

    supervised = zero
    if _uses_supervised(hp):
        if hp.supervised_loss == "sp":
            supervised = sp_loss(fake_embeds, targets.gt_embeds, contrastive)
        else:
            if weights is None:
                weights = asp_location_weights(fake_embeds.detach(), targets.gt_embeds, adaptive)
            supervised = weighted_nce_loss(
                fake_embeds, targets.gt_embeds, weights, contrastive, adaptive.normalization
            )
    else:
        weights = None

    gp = gp_loss(fake, real_ihc, pyramid) if hp.lambda_gp > 0 else zero

    total = (
        adv_g.double()
        + hp.lambda_patchnce * patchnce.double()
        + hp.lambda_asp * supervised.double()
        + hp.lambda_gp * gp.double()
    )
    return ObjectiveTerms(adv_g, patchnce, supervised, gp, total, list(weights) if weights is not None else None)


def _weight_summaries(layer_ids: Sequence[int], weights: Optional[Sequence[torch.Tensor]]) -> List[WeightSummary]:
    if weights is None:
        return []
    return [
        WeightSummary(layer_id=layer_id, min=float(w.min()), mean=float(w.mean()), max=float(w.max()))
        for layer_id, w in zip(layer_ids, weights)
    ]


def _diagnostics(state: TrainState, pair: PairedSample, lr: float, losses: dict) -> dict:
    return {
        "step": state.current_iter,
        "sample_id": pair.sample_id,
        "lr": lr,
        "seeds": state.seeds.model_dump(),
        "losses": {k: repr(v) for k, v in losses.items()},
        "he_range": [float(pair.he_image.min()), float(pair.he_image.max())],
        "ihc_range": [float(pair.ihc_image.min()), float(pair.ihc_image.max())],
    }


def train_step(
    state: TrainState,
    pair: PairedSample,
    hp: HyperParams,
    contrastive: ContrastiveConfig,
    adaptive: AdaptiveConfig,
    pyramid: PyramidConfig,
) -> Tuple[TrainState, LossRecord]:
    """
    One discriminator update followed by one generator update.

    Args:
        state: Training state; mutated in place and returned
        pair: Cropped training pair
        hp: Hyperparameters
        contrastive: Contrastive configuration
        adaptive: ASP variant (its iteration counter is replaced by state.current_iter)
        pyramid: Gaussian pyramid configuration

    Returns:
        (state, loss record of this step)

    Raises:
        NumericAbortError: If any loss is not finite
    """
    t = state.current_iter
    if t >= state.total_iters:
        raise ConfigurationError(f"Training already finished ({t} of {state.total_iters} steps)")
    nets = state.networks
    lr = lr_schedule(t, state.total_iters, hp.learning_rate)
    for optimizer in (state.optimizer_g, state.optimizer_d):
        for group in optimizer.param_groups:
            group["lr"] = lr

    param = next(nets.generator.parameters())
    real_he = image_to_tensor(pair.he_image).to(device=param.device, dtype=param.dtype)
    real_ihc = image_to_tensor(pair.ihc_image).to(device=param.device, dtype=param.dtype)

    fake = nets.generator(real_he)

    # discriminator
    set_requires_grad(nets.discriminator, True)
    state.optimizer_d.zero_grad(set_to_none=True)
    loss_d = adversarial_d_loss(nets.discriminator(real_ihc), nets.discriminator(fake.detach()))
    adv_d = loss_d.item()
    if not np.isfinite(adv_d):
        raise NumericAbortError(
            f"Non-finite discriminator loss at step {t}",
            diagnostics=_diagnostics(state, pair, lr, {"adv_d": adv_d}),
        )
    loss_d.backward()
    state.optimizer_d.step()

    # generator and projector
    set_requires_grad(nets.discriminator, False)
    try:
        locations = draw_locations(nets, real_he.shape[2], real_he.shape[3], contrastive.num_locations,
                                   state.seeds.location_seed, t)
        targets = contrastive_targets(nets, real_he, real_ihc, locations, hp)
        terms = generator_objective(
            nets, fake, real_ihc, locations, targets, hp, contrastive, adaptive.at(t, state.total_iters), pyramid
        )
        values = {
            "adv_g": terms.adv_g.item(),
            "adv_d": adv_d,
            "patchnce": terms.patchnce.item(),
            "asp": terms.asp.item(),
            "gp": terms.gp.item(),
            "total_g": terms.total.item(),
        }
        if not all(np.isfinite(v) for v in values.values()):
            raise NumericAbortError(
                f"Non-finite generator loss at step {t}", diagnostics=_diagnostics(state, pair, lr, values)
            )
        state.optimizer_g.zero_grad(set_to_none=True)
        terms.total.backward()
        state.optimizer_g.step()
    finally:
        set_requires_grad(nets.discriminator, True)

    state.current_iter = t + 1
    record = LossRecord(
        step=t,
        sample_id=pair.sample_id,
        lr=lr,
        weights=_weight_summaries(nets.generator_spec.tap_layers, terms.weights),
        **values,
    )
    return state, record


@dataclass
class FitResult:
    checkpoint: Path
    loss_log: Path
    steps: int


def variant_label(config: ExperimentConfig) -> str:
    """Method label: asp(weight,schedule), sp, or baseline"""
    if config.supervised_loss == "none" or config.lambda_asp == 0:
        return "baseline"
    if config.supervised_loss == "sp":
        return "sp"
    return config.adaptive().variant_name


class TrainingService:
    """Runs training for one experiment config"""

    def __init__(self, config: ExperimentConfig, device: Optional[str] = None):
        self.config = config
        self.device = device or settings.DEVICE
        self.hp = HyperParams.from_config(config)
        self.contrastive = config.contrastive()
        self.adaptive = config.adaptive()
        self.pyramid = config.pyramid()
        self.run_dir = config.run_dir
        self.histogram_interval = config.histogram_interval or max(1, config.total_iters // 10)

    @property
    def variant_name(self) -> str:
        return variant_label(self.config)

    def load_data(self) -> PairedDataset:
        if not self.config.data_root:
            raise ConfigurationError("data_root is not set")
        manifest = load_paired_dataset(self.config.data_root, "train", self.config.dataset_layout)
        if self.hp.crop > manifest.patch_size:
            raise ConfigurationError(f"crop {self.hp.crop} exceeds the dataset patch size {manifest.patch_size}")
        return PairedDataset(manifest, self.config.brightness_target)

    def sample_for_step(self, dataset: PairedDataset, state: TrainState, t: int) -> PairedSample:
        """The augmented pair visited at step t"""
        epoch, position = divmod(t, len(dataset))
        index = int(epoch_order(len(dataset), state.seeds.data_seed, epoch)[position])
        pair = random_crop_pair(dataset[index], self.hp.crop, derive_seed(state.seeds.crop_seed, t))
        if self.config.flip_augment:
            pair = random_flip_pair(pair, derive_seed(state.seeds.crop_seed, t, 1))
        return pair

    def checkpoint_manifest(self, state: TrainState) -> dict:
        nets = state.networks
        return {
            "current_iter": state.current_iter,
            "total_iters": state.total_iters,
            "seeds": state.seeds.model_dump(),
            "config": self.config.model_dump(),
            "generator_spec": nets.generator_spec.model_dump(),
            "discriminator_spec": nets.discriminator_spec.model_dump(),
            "projector_spec": nets.projector_spec.model_dump(),
        }

    def save(self, state: TrainState, path: Path) -> Path:
        return save_checkpoint(
            path,
            self.checkpoint_manifest(state),
            state.networks.modules(),
            {"generator": state.optimizer_g, "discriminator": state.optimizer_d},
        )

    def restore(self, state: TrainState, path) -> TrainState:
        """Load a checkpoint into `state`; its config must match this run's"""
        payload = load_checkpoint(path, map_location=self.device)
        manifest = payload["manifest"]
        saved = ExperimentConfig.model_validate(manifest["config"])
        differences = self.config.diff(saved, ignore=RESUME_IGNORED)
        if differences:
            report = "; ".join(f"{k}: run={mine!r} checkpoint={theirs!r}" for k, (mine, theirs) in differences.items())
            raise ConfigurationError(f"Cannot resume, config differs from checkpoint: {report}")
        restore_modules(payload, state.networks.modules())
        state.optimizer_g.load_state_dict(payload["optimizers"]["generator"])
        state.optimizer_d.load_state_dict(payload["optimizers"]["discriminator"])
        state.current_iter = int(manifest["current_iter"])
        logger.info(f"Resumed from {path} at step {state.current_iter}")
        return state

    def write_similarity_artifacts(self, state: TrainState, pair: PairedSample, step: int) -> Path:
        """Heatmaps for every tapped layer and one histogram over all of them"""
        nets = state.networks
        param = next(nets.generator.parameters())
        real_ihc = image_to_tensor(pair.ihc_image).to(device=param.device, dtype=param.dtype)
        real_he = image_to_tensor(pair.he_image).to(device=param.device, dtype=param.dtype)
        with torch.no_grad():
            fake = nets.generator(real_he)
            locations = draw_locations(nets, real_he.shape[2], real_he.shape[3], self.contrastive.num_locations,
                                       state.seeds.location_seed, step)
            fake_embeds = embed(nets, fake, locations)
            gt_embeds = embed(nets, real_ihc, locations)

        out_dir = self.run_dir / SIMILARITY_DIR
        out_dir.mkdir(parents=True, exist_ok=True)
        maps = [similarity_heatmap(fake_embeds, gt_embeds, layer_id) for layer_id in fake_embeds.layer_ids]
        for sim_map in maps:
            path = out_dir / f"heatmap_step_{step + 1:06d}_layer{sim_map.layer_id}.json"
            path.write_text(sim_map.to_record().model_dump_json())
        histogram = similarity_histogram(maps, self.config.histogram_bins)
        hist_path = out_dir / f"histogram_step_{step + 1:06d}.json"
        hist_path.write_text(histogram.to_record(step + 1).model_dump_json())
        return hist_path

    def _open_log(self, resumed_steps: int):
        log_path = self.run_dir / LOSS_LOG
        kept = []
        if resumed_steps and log_path.is_file():
            kept = log_path.read_text().splitlines()[:resumed_steps]
        handle = open(log_path, "w")
        for line in kept:
            handle.write(line + "\n")
        return log_path, handle

    def fit(self, resume: Optional[str] = None) -> FitResult:
        """Train for total_iters steps, writing the loss log, similarity artifacts and checkpoints"""
        torch.use_deterministic_algorithms(True, warn_only=True)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        dataset = self.load_data()
        state = create_state(self.config, self.hp, self.device)
        if resume:
            self.restore(state, resume)

        log_path, handle = self._open_log(state.current_iter)
        logger.info(
            f"Training {self.config.run_name} ({self.variant_name}): "
            f"steps {state.current_iter}..{state.total_iters}, {len(dataset)} pairs"
        )
        try:
            for t in tqdm(range(state.current_iter, state.total_iters), desc=self.config.run_name, disable=None):
                pair = self.sample_for_step(dataset, state, t)
                try:
                    state, record = train_step(state, pair, self.hp, self.contrastive, self.adaptive, self.pyramid)
                except NumericAbortError as e:
                    dump = self.run_dir / f"abort_step_{t:06d}.json"
                    dump.write_text(json.dumps(e.diagnostics, indent=2, sort_keys=True))
                    logger.error(f"{e}; diagnostics written to {dump}")
                    raise
                handle.write(record.model_dump_json() + "\n")
                handle.flush()

                if (t + 1) % self.histogram_interval == 0:
                    self.write_similarity_artifacts(state, pair, t)
                if self.config.checkpoint_interval and (t + 1) % self.config.checkpoint_interval == 0:
                    self.save(state, self.run_dir / CHECKPOINT_DIR / f"step_{t + 1:06d}.pt")
                if (t + 1) % self.config.log_interval == 0:
                    logger.info(
                        f"step {t + 1}/{state.total_iters} lr={record.lr:.2e} total_g={record.total_g:.4f} "
                        f"adv_d={record.adv_d:.4f}"
                    )
        finally:
            handle.close()

        final = self.save(state, self.run_dir / CHECKPOINT_DIR / "final.pt")
        return FitResult(checkpoint=final, loss_log=log_path, steps=state.current_iter)
