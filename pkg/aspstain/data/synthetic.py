"""
Synthetic paired-stain generator.

Each pair shares one "tissue" structure field s in [0, 1] (blurred nuclei
blobs over a smooth background). The H&E image mixes a background and a
hematoxylin colour by s. The IHC image is a per-channel lookup on the H&E
red channel: s is recovered from it, bent by a monotone power curve and
mixed between an IHC background and a DAB-positive colour. A fraction of
the training pairs gets its IHC corrupted; H&E images are never touched.
"""

import json
from pathlib import Path
from typing import List, Literal, Tuple

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator
from scipy.ndimage import gaussian_filter

from aspstain.data.dataset import MASK_SUFFIX, HE_SUFFIX, IHC_SUFFIX, DatasetManifest, load_paired_dataset
from aspstain.schemas.reports import SynthManifest, SynthPairRecord
from aspstain.utils.helpers import derive_seed, write_png
from aspstain.utils.logger import get_logger

logger = get_logger(__name__)

Corruption = Literal["erase_half", "local_warp", "blotch"]
SPLIT_KEYS = {"train": 0, "test": 1}


class SynthConfig(BaseModel):
    """Size, seeds, stain mapping and corruption of a synthetic dataset"""
    num_pairs: int = Field(200, ge=1)
    test_pairs: int = Field(50, ge=0)
    image_size: int = Field(64, ge=16)
    structure_seed: int = 0
    corruption_seed: int = 1
    blob_count: int = Field(40, ge=1)
    blob_sigma: float = Field(1.5, gt=0)
    he_background: List[float] = [0.95, 0.78, 0.88]
    he_nuclei: List[float] = [0.30, 0.18, 0.50]
    ihc_background: List[float] = [0.88, 0.88, 0.92]
    ihc_positive: List[float] = [0.50, 0.30, 0.15]
    stain_gamma: float = Field(0.7, gt=0)
    inconsistency_rate: float = Field(0.0, ge=0.0, le=1.0)
    corruption: Corruption = "erase_half"

    @field_validator("he_background", "he_nuclei", "ihc_background", "ihc_positive")
    @classmethod
    def _rgb(cls, v: List[float]) -> List[float]:
        if len(v) != 3 or any(not 0.0 <= c <= 1.0 for c in v):
            raise ValueError("colours are three values in [0, 1]")
        return v

    @model_validator(mode="after")
    def _check(self):
        if self.image_size % 4:
            raise ValueError("image_size must be a multiple of 4")
        if abs(self.he_background[0] - self.he_nuclei[0]) < 0.1:
            raise ValueError("the H&E red channel must separate background from nuclei")
        return self


def render_structure(seed: int, cfg: SynthConfig) -> np.ndarray:
    """Structure field in [0, 1]: blurred nuclei over a low-frequency tissue texture"""
    rng = np.random.default_rng(seed)
    size = cfg.image_size
    points = np.zeros((size, size), dtype=np.float64)
    np.add.at(points, (rng.integers(0, size, cfg.blob_count), rng.integers(0, size, cfg.blob_count)), 1.0)
    nuclei = gaussian_filter(points, sigma=cfg.blob_sigma, mode="wrap")
    nuclei /= nuclei.max()

    tissue = gaussian_filter(rng.standard_normal((size, size)), sigma=size / 8.0, mode="wrap")
    tissue = (tissue - tissue.min()) / max(tissue.max() - tissue.min(), 1e-12)
    return np.clip(0.75 * nuclei + 0.25 * tissue, 0.0, 1.0)


def render_he(structure: np.ndarray, cfg: SynthConfig) -> np.ndarray:
    background = np.asarray(cfg.he_background)
    nuclei = np.asarray(cfg.he_nuclei)
    rgb = background + structure[..., None] * (nuclei - background)
    return np.clip(np.rint(rgb * 255.0), 0, 255).astype(np.uint8)


def stain_lut(cfg: SynthConfig) -> np.ndarray:
    """256 x 3 table mapping an H&E red value to the IHC colour"""
    red = np.arange(256, dtype=np.float64) / 255.0
    s = np.clip((cfg.he_background[0] - red) / (cfg.he_background[0] - cfg.he_nuclei[0]), 0.0, 1.0)
    s = s ** cfg.stain_gamma
    background = np.asarray(cfg.ihc_background)
    positive = np.asarray(cfg.ihc_positive)
    rgb = background + s[:, None] * (positive - background)
    return np.clip(np.rint(rgb * 255.0), 0, 255).astype(np.uint8)


def stain_map(he_image: np.ndarray, cfg: SynthConfig) -> np.ndarray:
    """Deterministic H&E -> IHC mapping of an H x W x 3 uint8 image"""
    return stain_lut(cfg)[he_image[..., 0]]


def corrupt_ihc(ihc: np.ndarray, cfg: SynthConfig, seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Apply the configured corruption to an IHC image.

    Returns:
        (corrupted image, H x W uint8 mask with 1 at corrupted pixels)
    """
    rng = np.random.default_rng(seed)
    size = cfg.image_size
    out = ihc.copy()
    mask = np.zeros((size, size), dtype=np.uint8)
    background = np.clip(np.rint(np.asarray(cfg.ihc_background) * 255.0), 0, 255).astype(np.uint8)

    if cfg.corruption == "erase_half":
        half = size // 2
        columns = slice(0, half) if rng.random() < 0.5 else slice(size - half, size)
        mask[:, columns] = 1
        out[:, columns] = background
    elif cfg.corruption == "local_warp":
        side = int(rng.integers(size // 4, size // 2 + 1))
        y0, x0 = (int(v) for v in rng.integers(0, size - side + 1, 2))
        shift = tuple(int(v) for v in rng.integers(side // 4, side // 2 + 1, 2))
        region = (slice(y0, y0 + side), slice(x0, x0 + side))
        out[region] = np.roll(ihc[region], shift, axis=(0, 1))
        mask[region] = 1
    else:
        cy, cx = rng.uniform(0, size, 2)
        ry, rx = rng.uniform(size / 8, size / 4, 2)
        yy, xx = np.mgrid[0:size, 0:size]
        inside = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
        mask[inside] = 1
        out[inside] = np.clip(np.rint(np.asarray(cfg.ihc_positive) * 0.6 * 255.0), 0, 255).astype(np.uint8)
    return out, mask


def _corrupted_indices(cfg: SynthConfig) -> set:
    count = int(round(cfg.inconsistency_rate * cfg.num_pairs))
    rng = np.random.default_rng(derive_seed(cfg.corruption_seed, 0))
    return set(int(i) for i in rng.permutation(cfg.num_pairs)[:count])


def synth_generate(cfg: SynthConfig, out_root) -> DatasetManifest:
    """
    Write a synthetic paired dataset under `out_root`.

    The train split holds cfg.num_pairs pairs, a fraction of them corrupted;
    the test split holds cfg.test_pairs clean pairs. Both use the suffix
    layout with a `<id>_MASK.png` per pair, plus a top-level manifest.json.

    Returns:
        Manifest of the train split
    """
    out_root = Path(out_root)
    corrupted = _corrupted_indices(cfg)
    splits = {}

    for split, count in (("train", cfg.num_pairs), ("test", cfg.test_pairs)):
        folder = out_root / split
        folder.mkdir(parents=True, exist_ok=True)
        records = []
        for index in range(count):
            sample_id = f"{split}_{index:05d}"
            he_image = render_he(render_structure(derive_seed(cfg.structure_seed, SPLIT_KEYS[split], index), cfg), cfg)
            ihc_image = stain_map(he_image, cfg)
            mask = np.zeros(he_image.shape[:2], dtype=np.uint8)
            is_corrupted = split == "train" and index in corrupted
            if is_corrupted:
                ihc_image, mask = corrupt_ihc(ihc_image, cfg, derive_seed(cfg.corruption_seed, 1, index))

            write_png(folder / f"{sample_id}{HE_SUFFIX}", he_image)
            write_png(folder / f"{sample_id}{IHC_SUFFIX}", ihc_image)
            write_png(folder / f"{sample_id}{MASK_SUFFIX}", mask * 255)
            records.append(SynthPairRecord(
                id=sample_id, corrupted=is_corrupted, corruption=cfg.corruption if is_corrupted else None
            ))
        splits[split] = records

    manifest = SynthManifest(config=cfg.model_dump(), splits=splits)
    (out_root / "manifest.json").write_text(json.dumps(manifest.model_dump(), indent=2, sort_keys=True))
    logger.info(
        f"Wrote synthetic dataset to {out_root}: {cfg.num_pairs} train ({len(corrupted)} corrupted), "
        f"{cfg.test_pairs} test"
    )
    return load_paired_dataset(out_root, "train", layout="suffix")
