"""
Shared fixtures
"""

from typing import Optional, Sequence

import numpy as np
import pytest
import torch

from aspstain.config import ExperimentConfig
from aspstain.data.dataset import PairedSample
from aspstain.data.synthetic import SynthConfig, synth_generate
from aspstain.losses.contrastive import EmbeddingLayer, EmbeddingStack


def random_stack(
    seed: int,
    sizes: Sequence[int],
    dim: int,
    dtype: torch.dtype = torch.float64,
    layer_ids: Optional[Sequence[int]] = None,
) -> EmbeddingStack:
    """Unit-norm random embeddings; layer l has sizes[l] locations 0..S_l-1"""
    gen = torch.Generator().manual_seed(seed)
    layer_ids = list(range(len(sizes))) if layer_ids is None else list(layer_ids)
    layers = []
    for layer_id, size in zip(layer_ids, sizes):
        emb = torch.randn(size, dim, generator=gen, dtype=dtype)
        emb = emb / emb.norm(dim=1, keepdim=True)
        layers.append(EmbeddingLayer(layer_id, torch.arange(size), emb, (1, size)))
    return EmbeddingStack(tuple(layers))


@pytest.fixture
def make_stack():
    return random_stack


@pytest.fixture
def random_pair():
    def _make(size: int = 32, seed: int = 0, sample_id: str = "pair") -> PairedSample:
        rng = np.random.default_rng(seed)
        he = rng.uniform(-1, 1, (size, size, 3)).astype(np.float32)
        ihc = rng.uniform(-1, 1, (size, size, 3)).astype(np.float32)
        return PairedSample(he, ihc, sample_id)
    return _make


@pytest.fixture(scope="session")
def synth_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth")
    synth_generate(SynthConfig(num_pairs=6, test_pairs=4, image_size=32, blob_count=10), root)
    return root


@pytest.fixture
def make_config(tmp_path, synth_root):
    def _make(**overrides) -> ExperimentConfig:
        values = dict(
            preset="tiny",
            out_dir=str(tmp_path / "runs"),
            data_root=str(synth_root),
            crop=32,
            total_iters=10,
            num_locations=16,
            log_interval=5,
        )
        values.update(overrides)
        return ExperimentConfig(**values)
    return _make
