import json

import numpy as np
import pytest

from aspstain.core.exceptions import DataError, DomainError, ShapeError
from aspstain.data.dataset import (
    LUMA,
    PairedDataset,
    PairedSample,
    brightness_normalize,
    crop_window,
    epoch_order,
    load_pair,
    load_paired_dataset,
    random_crop_pair,
    random_flip_pair,
)
from aspstain.data.synthetic import SynthConfig, corrupt_ihc, render_he, render_structure, stain_map, synth_generate
from aspstain.utils.helpers import read_png, write_png


def write_pair(folder, sample_id, size=16, value=100):
    folder.mkdir(parents=True, exist_ok=True)
    image = np.full((size, size, 3), value, dtype=np.uint8)
    write_png(folder / f"{sample_id}_HE.png", image)
    write_png(folder / f"{sample_id}_IHC.png", image)


class TestLoadPairedDataset:
    def test_orphans_are_skipped_with_a_warning(self, tmp_path):
        for sample_id in ("c", "a", "b"):
            write_pair(tmp_path / "train", sample_id)
        write_png(tmp_path / "train" / "d_HE.png", np.zeros((16, 16, 3), dtype=np.uint8))

        manifest = load_paired_dataset(tmp_path, "train")
        assert manifest.sample_ids == ["a", "b", "c"]
        assert manifest.skipped == ["d"]
        assert len(manifest.warnings) == 1
        assert manifest.patch_size == 16

    def test_unreadable_and_mismatched_pairs_are_skipped(self, tmp_path):
        write_pair(tmp_path / "train", "good")
        (tmp_path / "train" / "broken_HE.png").write_bytes(b"not a png")
        write_png(tmp_path / "train" / "broken_IHC.png", np.zeros((16, 16, 3), dtype=np.uint8))
        write_png(tmp_path / "train" / "odd_HE.png", np.zeros((16, 16, 3), dtype=np.uint8))
        write_png(tmp_path / "train" / "odd_IHC.png", np.zeros((8, 8, 3), dtype=np.uint8))

        manifest = load_paired_dataset(tmp_path, "train")
        assert manifest.sample_ids == ["good"]
        assert manifest.skipped == ["broken", "odd"]

    def test_empty_split(self, tmp_path):
        (tmp_path / "test").mkdir()
        with pytest.raises(DataError):
            load_paired_dataset(tmp_path, "test")

    def test_bci_layout_is_detected(self, tmp_path):
        image = np.full((16, 16, 3), 50, dtype=np.uint8)
        for stain in ("HE", "IHC"):
            (tmp_path / stain / "train").mkdir(parents=True)
            write_png(tmp_path / stain / "train" / "00001_train_1+.png", image)
        manifest = load_paired_dataset(tmp_path, "train")
        assert manifest.layout == "bci"
        assert manifest.sample_ids == ["00001_train_1+"]
        pair = load_pair(manifest, "00001_train_1+")
        assert pair.he_image.shape == (16, 16, 3)

    def test_load_pair_scales_to_signed_range(self, tmp_path):
        folder = tmp_path / "train"
        folder.mkdir()
        write_png(folder / "x_HE.png", np.zeros((8, 8, 3), dtype=np.uint8))
        write_png(folder / "x_IHC.png", np.full((8, 8, 3), 255, dtype=np.uint8))
        pair = load_pair(load_paired_dataset(tmp_path, "train"), "x")
        assert pair.he_image.dtype == np.float32
        assert float(pair.he_image.min()) == -1.0
        assert float(pair.ihc_image.max()) == 1.0
        assert pair.inconsistency_mask is None

    def test_paired_dataset_items(self, synth_root):
        dataset = PairedDataset(load_paired_dataset(synth_root, "train"))
        assert len(dataset) == 6
        assert dataset[0].sample_id == "train_00000"
        assert dataset[0].inconsistency_mask.shape == (32, 32)
        assert dataset[2] is dataset[2]
        with pytest.raises(IndexError):
            dataset[6]


class TestAugmentation:
    def test_pair_shapes_must_match(self):
        with pytest.raises(ShapeError):
            PairedSample(np.zeros((8, 8, 3)), np.zeros((8, 6, 3)), "bad")

    def test_full_size_crop_is_identity(self, random_pair):
        pair = random_pair(16)
        cropped = random_crop_pair(pair, 16, seed=4)
        np.testing.assert_array_equal(cropped.he_image, pair.he_image)

    def test_crop_uses_the_same_window(self, random_pair):
        pair = random_pair(32, seed=1)
        cropped = random_crop_pair(pair, 12, seed=7)
        dy, dx = crop_window(32, 32, 12, seed=7)
        np.testing.assert_array_equal(cropped.he_image, pair.he_image[dy:dy + 12, dx:dx + 12])
        np.testing.assert_array_equal(cropped.ihc_image, pair.ihc_image[dy:dy + 12, dx:dx + 12])
        np.testing.assert_array_equal(random_crop_pair(pair, 12, seed=7).he_image, cropped.he_image)

    def test_crop_larger_than_image(self, random_pair):
        with pytest.raises(ShapeError):
            random_crop_pair(random_pair(16), 17, seed=0)

    def test_flip_mirrors_both_images(self, random_pair):
        pair = random_pair(8)
        flipped = random_flip_pair(pair, seed=0, probability=1.0)
        np.testing.assert_array_equal(flipped.he_image, pair.he_image[:, ::-1])
        np.testing.assert_array_equal(flipped.ihc_image, pair.ihc_image[:, ::-1])
        assert random_flip_pair(pair, seed=0, probability=0.0) is pair

    def test_epoch_order(self):
        order = epoch_order(10, seed=3, epoch=2)
        assert sorted(order.tolist()) == list(range(10))
        np.testing.assert_array_equal(order, epoch_order(10, seed=3, epoch=2))


class TestBrightness:
    def test_mean_luminance_hits_target(self):
        image = np.full((8, 8, 3), -0.5, dtype=np.float32)
        out = brightness_normalize(image, 0.0)
        assert float((out.astype(np.float64) @ LUMA.astype(np.float64)).mean()) == pytest.approx(0.0, abs=1e-6)

    def test_output_stays_in_range(self):
        image = np.random.default_rng(0).uniform(-1, 1, (16, 16, 3)).astype(np.float32)
        out = brightness_normalize(image, 0.8)
        assert out.min() >= -1.0 and out.max() <= 1.0

    def test_target_outside_domain(self):
        with pytest.raises(DomainError):
            brightness_normalize(np.zeros((4, 4, 3), dtype=np.float32), 1.0)


class TestSynthetic:
    def test_clean_pairs_follow_the_stain_map(self, tmp_path):
        cfg = SynthConfig(num_pairs=4, test_pairs=2, image_size=32)
        manifest = synth_generate(cfg, tmp_path)
        assert manifest.sample_ids == [f"train_{i:05d}" for i in range(4)]
        for sample_id in manifest.sample_ids:
            he = read_png(manifest.he_path(sample_id))
            np.testing.assert_array_equal(read_png(manifest.ihc_path(sample_id)), stain_map(he, cfg))
            assert not read_png(manifest.mask_path(sample_id)).any()

    def test_erase_half_masks_cover_half_the_columns(self, tmp_path):
        cfg = SynthConfig(num_pairs=4, test_pairs=2, image_size=32, inconsistency_rate=1.0, corruption="erase_half")
        manifest = synth_generate(cfg, tmp_path)
        for sample_id in manifest.sample_ids:
            pair = load_pair(manifest, sample_id)
            mask = pair.inconsistency_mask
            assert int(mask.sum()) == 32 * 16
            columns = mask.all(axis=0)
            assert columns[:16].all() or columns[16:].all()

    def test_corruption_rate_is_exact_and_test_split_is_clean(self, tmp_path):
        cfg = SynthConfig(num_pairs=10, test_pairs=3, image_size=16, inconsistency_rate=0.3)
        synth_generate(cfg, tmp_path)
        record = json.loads((tmp_path / "manifest.json").read_text())
        assert sum(r["corrupted"] for r in record["splits"]["train"]) == 3
        assert not any(r["corrupted"] for r in record["splits"]["test"])

    def test_corruption_never_touches_he(self, tmp_path):
        clean = SynthConfig(num_pairs=3, test_pairs=0, image_size=16)
        corrupted = clean.model_copy(update={"inconsistency_rate": 1.0, "corruption": "blotch"})
        synth_generate(clean, tmp_path / "clean")
        synth_generate(corrupted, tmp_path / "corrupted")
        for index in range(3):
            name = f"train_{index:05d}_HE.png"
            assert (tmp_path / "clean" / "train" / name).read_bytes() == \
                (tmp_path / "corrupted" / "train" / name).read_bytes()

    def test_same_seeds_give_identical_files(self, tmp_path):
        cfg = SynthConfig(num_pairs=3, test_pairs=1, image_size=16, inconsistency_rate=0.5, corruption="local_warp")
        synth_generate(cfg, tmp_path / "a")
        synth_generate(cfg, tmp_path / "b")
        files = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
        assert len(files) == 3 * 3 + 1 * 3 + 1
        for rel in files:
            assert (tmp_path / "a" / rel).read_bytes() == (tmp_path / "b" / rel).read_bytes()

    @pytest.mark.parametrize("corruption", ["erase_half", "local_warp", "blotch"])
    def test_mask_marks_every_changed_pixel(self, corruption):
        cfg = SynthConfig(image_size=32, corruption=corruption)
        ihc = stain_map(render_he(render_structure(5, cfg), cfg), cfg)
        out, mask = corrupt_ihc(ihc, cfg, seed=2)
        changed = (out != ihc).any(axis=2)
        assert not (changed & (mask == 0)).any()
        assert mask.any()

    def test_structure_is_in_unit_range(self):
        structure = render_structure(0, SynthConfig(image_size=32))
        assert structure.min() >= 0.0 and structure.max() <= 1.0
