"""
Configuration management

Two layers:
- Settings: runtime environment (seed override, logging, device, weights paths)
- ExperimentConfig: one experiment, read from a flat `key = value` file
"""

from pathlib import Path
from typing import Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from aspstain.core.exceptions import ConfigurationError, ShapeError
from aspstain.data.synthetic import SynthConfig
from aspstain.losses.auxiliary import PyramidConfig, check_pyramid_size
from aspstain.losses.contrastive import AdaptiveConfig, ContrastiveConfig, ScheduleFamily, WeightFamily
from aspstain.models.networks import DiscriminatorSpec, GeneratorSpec, ProjectorSpec
from aspstain.utils.helpers import derive_seed


class Settings(BaseSettings):
    """Runtime settings loaded from environment variables"""

    # Reproducibility
    ASP_SEED: Optional[int] = None

    # Logging
    LOG_LEVEL: str = "INFO"
    LOG_FILE: Optional[str] = None

    # Compute
    DEVICE: str = "cpu"

    # Local Inception-v3 state dict for the pretrained extractor
    INCEPTION_WEIGHTS: Optional[str] = None

    model_config = SettingsConfigDict(env_file=".env", case_sensitive=True, extra="ignore")


settings = Settings()


PRESETS: Dict[str, Dict[str, int]] = {
    "tiny": {"ngf": 8, "n_blocks": 2, "ndf": 8, "projector_dim": 16},
    "default": {"ngf": 64, "n_blocks": 6, "ndf": 64, "projector_dim": 256},
}
LIST_FIELDS = {"tap_layers", "gp_weights"}
NONE_VALUES = {"", "none", "null"}


class SeedLineage(BaseModel):
    """Master seed and the four seeds derived from it"""
    seed: int
    data_seed: int
    crop_seed: int
    location_seed: int
    init_seed: int


class ExperimentConfig(BaseModel):
    """Flat experiment description; every key of a config file maps to one field"""
    model_config = ConfigDict(extra="forbid")

    # Run
    run_name: str = "run"
    out_dir: str = "runs"
    data_root: Optional[str] = None
    dataset_layout: Optional[Literal["suffix", "bci"]] = None
    dataset_name: Optional[str] = None
    brightness_target: Optional[float] = Field(None, gt=-1.0, lt=1.0)
    flip_augment: bool = True
    checkpoint_interval: int = Field(0, ge=0)
    histogram_interval: Optional[int] = Field(None, ge=1)
    histogram_bins: int = Field(50, ge=1)
    log_interval: int = Field(50, ge=1)

    # Seeds
    seed: int = 0
    data_seed: Optional[int] = None
    crop_seed: Optional[int] = None
    location_seed: Optional[int] = None
    init_seed: Optional[int] = None

    # Objective and optimization
    supervised_loss: Literal["asp", "sp", "none"] = "asp"
    lambda_patchnce: float = Field(10.0, ge=0)
    lambda_asp: float = Field(10.0, ge=0)
    lambda_gp: float = Field(10.0, ge=0)
    learning_rate: float = Field(2e-4, gt=0)
    beta1: float = Field(0.5, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    batch_size: int = Field(1, ge=1, le=1)
    crop: int = Field(512, ge=1)
    total_iters: int = Field(1000, ge=1)

    # Contrastive
    temperature: float = Field(0.07, gt=0)
    negatives_per_anchor: Optional[int] = Field(None, ge=1)
    num_locations: int = Field(256, ge=2)

    # Adaptive weighting
    weight_family: Literal["zero", "linear", "sigmoid", "lambda"] = "lambda"
    sigmoid_k: float = Field(10.0, gt=0)
    lambda_low: float = 0.0
    lambda_high: float = 0.5
    schedule_family: Literal["uniform", "linear", "top"] = "linear"
    top_start: float = Field(0.5, ge=0, lt=1)
    asp_normalization: Literal["sum", "count"] = "sum"

    # Gaussian pyramid
    gp_levels: int = Field(3, ge=1)
    gp_weights: Optional[List[float]] = None

    # Networks
    preset: Literal["tiny", "default"] = "default"
    generator_kind: Literal["resnet", "identity"] = "resnet"
    ngf: Optional[int] = Field(None, ge=1)
    n_blocks: Optional[int] = Field(None, ge=1)
    n_downsampling: int = Field(2, ge=0)
    norm: Literal["instance", "batch", "none"] = "instance"
    tap_layers: Optional[List[int]] = None
    ndf: Optional[int] = Field(None, ge=1)
    d_layers: int = Field(5, ge=1)
    projector_dim: Optional[int] = Field(None, ge=1)
    use_mlp: bool = True

    # Evaluation
    features: Literal["tiny", "pretrained"] = "tiny"
    phv_threshold: float = Field(0.01, ge=0)
    kid_subset_size: int = Field(100, ge=2)
    kid_subsets: int = Field(100, ge=1)

    # Synthetic data
    synth_num_pairs: int = Field(200, ge=1)
    synth_test_pairs: int = Field(50, ge=0)
    synth_image_size: int = Field(64, ge=16)
    synth_structure_seed: int = 0
    synth_corruption_seed: int = 1
    synth_blob_count: int = Field(40, ge=1)
    synth_blob_sigma: float = Field(1.5, gt=0)
    synth_stain_gamma: float = Field(0.7, gt=0)
    synth_inconsistency_rate: float = Field(0.0, ge=0, le=1)
    synth_corruption: Literal["erase_half", "local_warp", "blotch"] = "erase_half"

    @model_validator(mode="after")
    def _apply_preset(self):
        for key, value in PRESETS[self.preset].items():
            if getattr(self, key) is None:
                setattr(self, key, value)
        return self

    @model_validator(mode="after")
    def _check_pyramid_fits_crop(self):
        if self.lambda_gp > 0:
            try:
                check_pyramid_size(self.crop, self.crop, self.gp_levels)
            except ShapeError as e:
                raise ValueError(f"gp_levels {self.gp_levels} does not fit crop {self.crop} ({e})") from e
        return self

    def seeds(self) -> SeedLineage:
        """Explicit sub-seeds win; the others are derived from the master seed"""
        def pick(value: Optional[int], key: int) -> int:
            return derive_seed(self.seed, key) if value is None else value

        return SeedLineage(
            seed=self.seed,
            data_seed=pick(self.data_seed, 1),
            crop_seed=pick(self.crop_seed, 2),
            location_seed=pick(self.location_seed, 3),
            init_seed=pick(self.init_seed, 4),
        )

    def contrastive(self) -> ContrastiveConfig:
        return ContrastiveConfig(
            temperature=self.temperature,
            negatives_per_anchor=self.negatives_per_anchor,
            num_locations=self.num_locations,
        )

    def adaptive(self, current_iter: int = 0) -> AdaptiveConfig:
        return AdaptiveConfig(
            weight=WeightFamily(
                name=self.weight_family,
                sigmoid_k=self.sigmoid_k,
                lambda_low=self.lambda_low,
                lambda_high=self.lambda_high,
            ),
            schedule=ScheduleFamily(name=self.schedule_family, top_start=self.top_start),
            current_iter=current_iter,
            total_iters=self.total_iters,
            normalization=self.asp_normalization,
        )

    def pyramid(self) -> PyramidConfig:
        return PyramidConfig(levels=self.gp_levels, weights=self.gp_weights)

    def generator_spec(self) -> GeneratorSpec:
        return GeneratorSpec(
            kind=self.generator_kind,
            ngf=self.ngf,
            n_blocks=self.n_blocks,
            n_downsampling=self.n_downsampling,
            norm=self.norm,
            tap_layers=self.tap_layers,
        )

    def discriminator_spec(self) -> DiscriminatorSpec:
        return DiscriminatorSpec(ndf=self.ndf, layers=self.d_layers, norm=self.norm)

    def projector_spec(self) -> ProjectorSpec:
        return ProjectorSpec(num_channels=self.projector_dim, use_mlp=self.use_mlp)

    def synth(self) -> SynthConfig:
        return SynthConfig(
            num_pairs=self.synth_num_pairs,
            test_pairs=self.synth_test_pairs,
            image_size=self.synth_image_size,
            structure_seed=self.synth_structure_seed,
            corruption_seed=self.synth_corruption_seed,
            blob_count=self.synth_blob_count,
            blob_sigma=self.synth_blob_sigma,
            stain_gamma=self.synth_stain_gamma,
            inconsistency_rate=self.synth_inconsistency_rate,
            corruption=self.synth_corruption,
        )

    @property
    def run_dir(self) -> Path:
        return Path(self.out_dir) / self.run_name

    def diff(self, other: "ExperimentConfig", ignore: tuple = ("total_iters",)) -> Dict[str, tuple]:
        """Fields whose values differ, as {name: (self value, other value)}"""
        mine, theirs = self.model_dump(), other.model_dump()
        return {k: (mine[k], theirs[k]) for k in mine if k not in ignore and mine[k] != theirs[k]}

    def to_text(self) -> str:
        """Render as a config file that parses back to an equal config"""
        lines = []
        for key, value in self.model_dump().items():
            if value is None:
                continue
            if isinstance(value, list):
                value = ", ".join(str(v) for v in value)
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"


def parse_config_text(text: str) -> Dict[str, Union[str, List[str], None]]:
    """
    Parse flat `key = value` lines.

    `#` starts a comment, blank lines are skipped, list fields take comma
    separated values and `none` clears an optional field.
    """
    values: Dict[str, Union[str, List[str], None]] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"Line {number}: expected 'key = value', got '{raw.strip()}'")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigurationError(f"Line {number}: missing key")
        if key in values:
            raise ConfigurationError(f"Line {number}: duplicate key '{key}'")
        if value.lower() in NONE_VALUES:
            values[key] = None
        elif key in LIST_FIELDS:
            values[key] = [item.strip() for item in value.split(",") if item.strip()]
        else:
            values[key] = value
    return values


def build_experiment_config(values: dict, env: Optional[Settings] = None) -> ExperimentConfig:
    """Validate raw values into an ExperimentConfig, applying the ASP_SEED override"""
    values = dict(values)
    if env is None:
        try:
            env = Settings()
        except ValidationError as e:
            raise ConfigurationError(f"Invalid environment settings: {e}") from e
    if env.ASP_SEED is not None:
        values["seed"] = env.ASP_SEED
    try:
        return ExperimentConfig.model_validate(values)
    except ValidationError as e:
        problems = "; ".join(
            f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}" for err in e.errors()
        )
        raise ConfigurationError(f"Invalid experiment config: {problems}") from e


def load_experiment_config(path: Union[str, Path], env: Optional[Settings] = None) -> ExperimentConfig:
    """Read and validate an experiment config file"""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigurationError(f"Cannot read config file {path}: {e}") from e
    return build_experiment_config(parse_config_text(text), env)
