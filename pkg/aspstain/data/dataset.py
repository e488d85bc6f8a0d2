"""
Paired H&E / IHC dataset ingestion and augmentation.

Two directory layouts are understood:
    suffix: <root>/<split>/<id>_HE.png and <root>/<split>/<id>_IHC.png
    bci:    <root>/HE/<split>/<id>.png and <root>/IHC/<split>/<id>.png
"""

from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from PIL import Image, UnidentifiedImageError
from pydantic import BaseModel
from torch.utils.data import Dataset

from aspstain.core.exceptions import DataError, DomainError, ShapeError
from aspstain.utils.helpers import derive_seed, read_png, uint8_to_signed
from aspstain.utils.logger import get_logger

logger = get_logger(__name__)

HE_SUFFIX = "_HE.png"
IHC_SUFFIX = "_IHC.png"
MASK_SUFFIX = "_MASK.png"
LUMA = np.array([0.299, 0.587, 0.114], dtype=np.float32)

Layout = Literal["suffix", "bci"]


@dataclass(frozen=True)
class PairedSample:
    """An H&E image and its IHC groundtruth, both H x W x 3 in [-1, 1]"""
    he_image: np.ndarray
    ihc_image: np.ndarray
    sample_id: str
    inconsistency_mask: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.he_image.shape != self.ihc_image.shape or self.he_image.ndim != 3:
            raise ShapeError(
                f"{self.sample_id}: H&E {self.he_image.shape} and IHC {self.ihc_image.shape} must match as H x W x 3"
            )
        if self.inconsistency_mask is not None and self.inconsistency_mask.shape != self.he_image.shape[:2]:
            raise ShapeError(f"{self.sample_id}: mask shape {self.inconsistency_mask.shape} does not match image")

    @property
    def size(self) -> Tuple[int, int]:
        return self.he_image.shape[0], self.he_image.shape[1]


class DatasetManifest(BaseModel):
    """Complete pairs of one split, sorted by id"""
    root: str
    split: Literal["train", "test"]
    layout: Layout = "suffix"
    sample_ids: List[str]
    patch_size: int
    skipped: List[str] = []
    warnings: List[str] = []

    def __len__(self) -> int:
        return len(self.sample_ids)

    def he_path(self, sample_id: str) -> Path:
        if self.layout == "bci":
            return Path(self.root) / "HE" / self.split / f"{sample_id}.png"
        return Path(self.root) / self.split / f"{sample_id}{HE_SUFFIX}"

    def ihc_path(self, sample_id: str) -> Path:
        if self.layout == "bci":
            return Path(self.root) / "IHC" / self.split / f"{sample_id}.png"
        return Path(self.root) / self.split / f"{sample_id}{IHC_SUFFIX}"

    def mask_path(self, sample_id: str) -> Path:
        return Path(self.root) / self.split / f"{sample_id}{MASK_SUFFIX}"


def _detect_layout(root: Path) -> Layout:
    return "bci" if (root / "HE").is_dir() and (root / "IHC").is_dir() else "suffix"


def _scan(root: Path, split: str, layout: Layout) -> Tuple[set, set]:
    if layout == "bci":
        he_ids = {p.stem for p in (root / "HE" / split).glob("*.png")}
        ihc_ids = {p.stem for p in (root / "IHC" / split).glob("*.png")}
    else:
        folder = root / split
        he_ids = {p.name[: -len(HE_SUFFIX)] for p in folder.glob(f"*{HE_SUFFIX}")}
        ihc_ids = {p.name[: -len(IHC_SUFFIX)] for p in folder.glob(f"*{IHC_SUFFIX}")}
    return he_ids, ihc_ids


def _image_size(path: Path) -> Tuple[int, int]:
    with Image.open(path) as img:
        img.verify()
    with Image.open(path) as img:
        return img.size


def load_paired_dataset(root, split: str, layout: Optional[Layout] = None) -> DatasetManifest:
    """
    Index the complete H&E/IHC pairs of a split.

    Orphans (one side missing), unreadable files and size mismatches are
    logged as warnings and skipped.

    Raises:
        DataError: If the split holds no complete pair
    """
    root = Path(root)
    if split not in ("train", "test"):
        raise DataError(f"Unknown split '{split}' (expected train or test)")
    layout = layout or _detect_layout(root)
    he_ids, ihc_ids = _scan(root, split, layout)

    warnings: List[str] = []
    skipped: List[str] = []
    for orphan in sorted(he_ids ^ ihc_ids):
        side = "IHC" if orphan in he_ids else "H&E"
        warnings.append(f"{orphan}: missing {side} image")
        skipped.append(orphan)

    lookup = DatasetManifest(root=str(root), split=split, layout=layout, sample_ids=[], patch_size=0)
    sample_ids: List[str] = []
    patch_size = 0
    for sample_id in sorted(he_ids & ihc_ids):
        try:
            he_size = _image_size(lookup.he_path(sample_id))
            ihc_size = _image_size(lookup.ihc_path(sample_id))
        except (OSError, UnidentifiedImageError) as e:
            warnings.append(f"{sample_id}: unreadable ({e})")
            skipped.append(sample_id)
            continue
        if he_size != ihc_size:
            warnings.append(f"{sample_id}: H&E size {he_size} differs from IHC size {ihc_size}")
            skipped.append(sample_id)
            continue
        patch_size = patch_size or min(he_size)
        sample_ids.append(sample_id)

    for message in warnings:
        logger.warning(f"[{split}] {message}")
    if not sample_ids:
        raise DataError(f"No complete H&E/IHC pairs found under {root} for split '{split}'")

    logger.info(f"Indexed {len(sample_ids)} pairs from {root} ({split}, {layout} layout)")
    return DatasetManifest(
        root=str(root),
        split=split,
        layout=layout,
        sample_ids=sample_ids,
        patch_size=patch_size,
        skipped=sorted(skipped),
        warnings=warnings,
    )


def brightness_normalize(image: np.ndarray, target_mean: float) -> np.ndarray:
    """Shift all channels equally so the mean luminance equals target_mean, then clip to [-1, 1]"""
    if not -1.0 < target_mean < 1.0:
        raise DomainError(f"target_mean must lie in (-1, 1), got {target_mean}")
    luminance = float((image.astype(np.float64) @ LUMA.astype(np.float64)).mean())
    return np.clip(image + (target_mean - luminance), -1.0, 1.0).astype(np.float32)


def load_pair(manifest: DatasetManifest, sample_id: str, brightness_target: Optional[float] = None) -> PairedSample:
    """Read one pair, scaled to [-1, 1], with its inconsistency mask if present"""
    try:
        he_image = uint8_to_signed(read_png(manifest.he_path(sample_id)))
        ihc_image = uint8_to_signed(read_png(manifest.ihc_path(sample_id)))
    except (OSError, UnidentifiedImageError) as e:
        raise DataError(f"Cannot read pair {sample_id}: {e}") from e

    mask = None
    mask_path = manifest.mask_path(sample_id)
    if manifest.layout == "suffix" and mask_path.is_file():
        with Image.open(mask_path) as img:
            mask = (np.asarray(img.convert("L")) > 127).astype(np.uint8)

    if brightness_target is not None:
        he_image = brightness_normalize(he_image, brightness_target)
        ihc_image = brightness_normalize(ihc_image, brightness_target)
    return PairedSample(he_image, ihc_image, sample_id, mask)


def crop_window(height: int, width: int, crop: int, seed: int) -> Tuple[int, int]:
    """Top-left corner (dy, dx) of a random crop x crop window"""
    if crop > min(height, width):
        raise ShapeError(f"Crop {crop} exceeds image size {height}x{width}")
    rng = np.random.default_rng(seed)
    dy = int(rng.integers(0, height - crop + 1))
    dx = int(rng.integers(0, width - crop + 1))
    return dy, dx


def random_crop_pair(pair: PairedSample, crop: int, seed: int) -> PairedSample:
    """Crop the same window out of both images (and the mask)"""
    dy, dx = crop_window(*pair.size, crop, seed)
    window = (slice(dy, dy + crop), slice(dx, dx + crop))
    mask = None if pair.inconsistency_mask is None else pair.inconsistency_mask[window]
    return replace(
        pair,
        he_image=np.ascontiguousarray(pair.he_image[window]),
        ihc_image=np.ascontiguousarray(pair.ihc_image[window]),
        inconsistency_mask=mask,
    )


def random_flip_pair(pair: PairedSample, seed: int, probability: float = 0.5) -> PairedSample:
    """Mirror both images horizontally with the given probability"""
    if np.random.default_rng(seed).random() >= probability:
        return pair
    mask = None if pair.inconsistency_mask is None else pair.inconsistency_mask[:, ::-1].copy()
    return replace(
        pair,
        he_image=pair.he_image[:, ::-1].copy(),
        ihc_image=pair.ihc_image[:, ::-1].copy(),
        inconsistency_mask=mask,
    )


def epoch_order(num_samples: int, seed: int, epoch: int) -> np.ndarray:
    """Deterministic visiting order of the samples in one epoch"""
    return np.random.default_rng(derive_seed(seed, epoch)).permutation(num_samples)


class PairedDataset(Dataset):
    """Map-style dataset over a manifest; items are PairedSample, read from disk once and kept"""

    def __init__(self, manifest: DatasetManifest, brightness_target: Optional[float] = None):
        self.manifest = manifest
        self.brightness_target = brightness_target
        self._loaded: Dict[int, PairedSample] = {}

    def __len__(self) -> int:
        return len(self.manifest.sample_ids)

    def __getitem__(self, idx: int) -> PairedSample:
        if not 0 <= idx < len(self):
            raise IndexError(f"Sample index {idx} out of range for {len(self)} pairs")
        if idx not in self._loaded:
            self._loaded[idx] = load_pair(self.manifest, self.manifest.sample_ids[idx], self.brightness_target)
        return self._loaded[idx]
