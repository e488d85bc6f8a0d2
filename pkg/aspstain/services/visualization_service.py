"""
Visualization Service - Similarity heatmaps and histograms for one training pair
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Union

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import torch  # noqa: E402

from aspstain.core.exceptions import DataError  # noqa: E402
from aspstain.data.dataset import DatasetManifest, load_pair  # noqa: E402
from aspstain.losses.contrastive import (  # noqa: E402
    SimilarityHistogram,
    SimilarityMap,
    similarity_heatmap,
    similarity_histogram,
)
from aspstain.models.checkpoint import load_networks  # noqa: E402
from aspstain.models.networks import sample_locations  # noqa: E402
from aspstain.services.training_service import embed  # noqa: E402
from aspstain.utils.helpers import derive_seed, image_to_tensor  # noqa: E402
from aspstain.utils.logger import get_logger  # noqa: E402

logger = get_logger(__name__)


@dataclass
class VisualizationArtifacts:
    heatmaps: List[Path] = field(default_factory=list)
    histogram: Optional[Path] = None


def render_heatmap(sim_map: SimilarityMap, path: Path, title: str = "") -> Path:
    grid = np.ma.masked_invalid(sim_map.to_grid())
    fig, ax = plt.subplots(figsize=(4, 4))
    im = ax.imshow(grid, cmap="viridis", vmin=-1.0, vmax=1.0, interpolation="nearest")
    ax.set_title(title or f"layer {sim_map.layer_id}")
    ax.set_xticks([])
    ax.set_yticks([])
    fig.colorbar(im, ax=ax, fraction=0.046, pad=0.04)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def render_histogram(histogram: SimilarityHistogram, path: Path, title: str = "") -> Path:
    edges = histogram.edges
    fig, ax = plt.subplots(figsize=(5, 3))
    ax.bar(edges[:-1], histogram.counts, width=np.diff(edges), align="edge", color="tab:blue", edgecolor="none")
    ax.set_xlim(-1.0, 1.0)
    ax.set_xlabel("cosine similarity")
    ax.set_ylabel("count")
    if title:
        ax.set_title(title)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


class VisualizationService:
    """Renders anchor-positive similarity of a generated image against its groundtruth"""

    def __init__(self, device: str = "cpu", bins: int = 50):
        self.device = device
        self.bins = bins

    def visualize(
        self,
        checkpoint: Union[str, Path],
        manifest: DatasetManifest,
        sample_id: str,
        out_dir: Union[str, Path],
        num_locations: Optional[int] = None,
        seed: int = 0,
    ) -> VisualizationArtifacts:
        """
        Write heatmap and histogram PNGs plus their JSON records.

        Every grid cell of each tapped layer is used unless num_locations caps it.
        """
        if sample_id not in manifest.sample_ids:
            raise DataError(f"Pair '{sample_id}' is not in {manifest.root} ({manifest.split})")
        networks, _ = load_networks(checkpoint, self.device)
        pair = load_pair(manifest, sample_id)
        param = next(networks.generator.parameters())
        real_he = image_to_tensor(pair.he_image).to(device=param.device, dtype=param.dtype)
        real_ihc = image_to_tensor(pair.ihc_image).to(device=param.device, dtype=param.dtype)

        with torch.no_grad():
            fake = networks.generator(real_he)
            locations = []
            for index, (grid_h, grid_w) in enumerate(networks.generator.tap_grid_shapes(*real_he.shape[2:])):
                count = grid_h * grid_w if num_locations is None else min(num_locations, grid_h * grid_w)
                locations.append(sample_locations(grid_h, grid_w, count, derive_seed(seed, index)))
            fake_embeds = embed(networks, fake, locations)
            gt_embeds = embed(networks, real_ihc, locations)

        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        artifacts = VisualizationArtifacts()
        maps = [similarity_heatmap(fake_embeds, gt_embeds, layer_id) for layer_id in fake_embeds.layer_ids]
        for sim_map in maps:
            stem = f"{sample_id}_heatmap_layer{sim_map.layer_id}"
            (out_dir / f"{stem}.json").write_text(sim_map.to_record().model_dump_json())
            artifacts.heatmaps.append(render_heatmap(sim_map, out_dir / f"{stem}.png", f"{sample_id} layer {sim_map.layer_id}"))

        histogram = similarity_histogram(maps, self.bins)
        (out_dir / f"{sample_id}_histogram.json").write_text(histogram.to_record().model_dump_json())
        artifacts.histogram = render_histogram(histogram, out_dir / f"{sample_id}_histogram.png", sample_id)
        logger.info(f"Wrote {len(artifacts.heatmaps)} heatmaps and a histogram for {sample_id} to {out_dir}")
        return artifacts
