"""
Evaluation Service - Metric rows for trained checkpoints and batch translation
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Literal, Optional, Sequence, Union

import numpy as np
import torch
import torch.nn as nn
from pydantic import BaseModel, Field

from aspstain.config import ExperimentConfig, settings
from aspstain.core.exceptions import AspStainError, DataError
from aspstain.data.dataset import DatasetManifest, load_pair
from aspstain.metrics.distribution import KID_SCALE, fid, kid
from aspstain.metrics.features import build_extractor, feature_extract
from aspstain.metrics.image_metrics import phv, ssim
from aspstain.models.checkpoint import load_generator
from aspstain.schemas.reports import MetricRow
from aspstain.services.training_service import variant_label
from aspstain.utils.helpers import image_to_tensor, read_png, signed_to_uint8, tensor_to_image, uint8_to_signed, write_png
from aspstain.utils.logger import get_logger

logger = get_logger(__name__)

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".tif", ".tiff")


class MetricSettings(BaseModel):
    """Feature extractor and metric parameters used by evaluate"""
    features: Literal["tiny", "pretrained"] = "tiny"
    phv_threshold: float = Field(0.01, ge=0)
    kid_subset_size: int = Field(100, ge=2)
    kid_subsets: int = Field(100, ge=1)
    seed: int = 0
    dataset_name: Optional[str] = None
    method: Optional[str] = None

    @classmethod
    def from_config(cls, config: ExperimentConfig, **overrides) -> "MetricSettings":
        values = dict(
            features=config.features,
            phv_threshold=config.phv_threshold,
            kid_subset_size=config.kid_subset_size,
            kid_subsets=config.kid_subsets,
            seed=config.seed,
            dataset_name=config.dataset_name,
        )
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


@dataclass
class TranslateReport:
    written: List[Path] = field(default_factory=list)
    failed: Dict[str, str] = field(default_factory=dict)


def translate_image(generator: nn.Module, image: np.ndarray) -> np.ndarray:
    """Run the generator on one H x W x 3 image in [-1, 1]"""
    params = list(generator.parameters())
    dtype = params[0].dtype if params else torch.float32
    device = params[0].device if params else torch.device("cpu")
    with torch.no_grad():
        return tensor_to_image(generator(image_to_tensor(image).to(device=device, dtype=dtype)))


def method_label(checkpoint_manifest: dict) -> str:
    if "config" in checkpoint_manifest:
        return variant_label(ExperimentConfig.model_validate(checkpoint_manifest["config"]))
    return checkpoint_manifest.get("generator_spec", {}).get("kind", "unknown")


class EvaluationService:
    """Computes SSIM/PHV against paired groundtruth and FID/KID between generated and groundtruth sets"""

    def __init__(self, metric_settings: Optional[MetricSettings] = None, device: Optional[str] = None):
        self.metric_settings = metric_settings or MetricSettings()
        self.device = device or settings.DEVICE
        self._extractor = None

    @property
    def extractor(self):
        if self._extractor is None:
            self._extractor = build_extractor(
                self.metric_settings.features, self.metric_settings.seed, settings.INCEPTION_WEIGHTS
            )
        return self._extractor

    def evaluate(self, checkpoint: Union[str, Path], manifest: DatasetManifest) -> MetricRow:
        """
        Translate every H&E image of the split and score it.

        Raises:
            DataError: If the split has fewer than two pairs
        """
        if len(manifest.sample_ids) == 0:
            raise DataError(f"No test pairs under {manifest.root}")
        if len(manifest.sample_ids) < 2:
            raise DataError("FID and KID need at least two test pairs")
        generator, ckpt_manifest = load_generator(checkpoint, self.device)
        cfg = self.metric_settings

        generated, groundtruth = [], []
        ssim_values, phv_values = [], []
        for sample_id in manifest.sample_ids:
            pair = load_pair(manifest, sample_id)
            fake = translate_image(generator, pair.he_image)
            ssim_values.append(ssim(fake, pair.ihc_image))
            phv_values.append(phv(fake, pair.ihc_image, cfg.phv_threshold, self.extractor).layers)
            generated.append(fake)
            groundtruth.append(pair.ihc_image)

        features_fake = feature_extract(generated, self.extractor)
        features_real = feature_extract(groundtruth, self.extractor)
        subset_size = cfg.kid_subset_size
        if subset_size > len(generated):
            logger.warning(f"KID subset size {subset_size} exceeds the {len(generated)} test images; using {len(generated)}")
            subset_size = len(generated)
        phv_layers = np.mean(np.asarray(phv_values), axis=0)

        row = MetricRow(
            dataset=cfg.dataset_name or Path(manifest.root).name,
            method=cfg.method or method_label(ckpt_manifest),
            ssim=float(np.mean(ssim_values)),
            phv_layers=[float(v) for v in phv_layers],
            phv_avg=float(np.mean(phv_layers)),
            fid=fid(features_fake, features_real),
            kid_x1000=KID_SCALE * kid(features_fake, features_real, subset_size, cfg.kid_subsets, cfg.seed),
            num_images=len(generated),
        )
        logger.info(
            f"{row.dataset}/{row.method}: SSIM={row.ssim:.4f} PHV={row.phv_avg:.4f} "
            f"FID={row.fid:.3f} KIDx1000={row.kid_x1000:.3f} ({row.num_images} images)"
        )
        return row

    def translate(
        self,
        checkpoint: Union[str, Path],
        inputs: Union[str, Path, Sequence[Union[str, Path]]],
        out_dir: Union[str, Path],
    ) -> TranslateReport:
        """Write one translated PNG per input image; failures are logged and skipped"""
        generator, _ = load_generator(checkpoint, self.device)
        if isinstance(inputs, (str, Path)) and Path(inputs).is_dir():
            paths = sorted(p for p in Path(inputs).iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        elif isinstance(inputs, (str, Path)):
            paths = [Path(inputs)]
        else:
            paths = [Path(p) for p in inputs]

        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        report = TranslateReport()
        for path in paths:
            try:
                fake = translate_image(generator, uint8_to_signed(read_png(path)))
                target = out_dir / f"{path.stem}.png"
                write_png(target, signed_to_uint8(fake))
                report.written.append(target)
            except (AspStainError, OSError) as e:
                logger.warning(f"Skipping {path.name}: {e}")
                report.failed[path.name] = str(e)
        logger.info(f"Translated {len(report.written)} images into {out_dir} ({len(report.failed)} failed)")
        return report
