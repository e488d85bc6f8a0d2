import math

import numpy as np
import pytest
import torch
from pydantic import ValidationError
from scipy.stats import chisquare

from aspstain.core.exceptions import (
    AlignmentError,
    ConfigurationError,
    DegenerateWeightsError,
    DomainError,
    EmptyInputError,
    InvalidEmbeddingError,
    RangeError,
)
from aspstain.losses.contrastive import (
    AdaptiveConfig,
    ContrastiveConfig,
    EmbeddingLayer,
    EmbeddingStack,
    ScheduleFamily,
    SimilarityMap,
    WeightFamily,
    adaptive_weight,
    asp_location_weights,
    asp_loss,
    info_nce,
    patch_nce_loss,
    schedule_fn,
    similarity_heatmap,
    similarity_histogram,
    sp_loss,
    weight_fn,
    weighted_layer_mean,
)


def brute_force_nce(out, tgt, tau, num_negatives=None, weights=None):
    """Loop implementation: anchor s, positive tgt[s], negatives tgt[s+1..s+N] (mod S)"""
    total = 0.0
    for l, (a_layer, t_layer) in enumerate(zip(out.layers, tgt.layers)):
        a = a_layer.embeddings.double().numpy()
        t = t_layer.embeddings.double().numpy()
        size = a.shape[0]
        n = size - 1 if num_negatives is None else num_negatives
        losses = []
        for s in range(size):
            logits = [a[s] @ t[s] / tau] + [a[s] @ t[(s + k) % size] / tau for k in range(1, n + 1)]
            peak = max(logits)
            losses.append(peak + math.log(sum(math.exp(v - peak) for v in logits)) - logits[0])
        w = np.ones(size) if weights is None else np.asarray(weights[l], dtype=np.float64)
        total += float(np.sum(w / w.sum() * np.asarray(losses)))
    return total / len(out.layers)


def lambda_weight(c, low=0.0, high=0.5):
    return min(max((c - low) / (high - low), 0.0), 1.0)


def basis(*coords):
    return torch.tensor(coords, dtype=torch.float64)


def single_layer(rows, layer_id=0):
    emb = torch.stack([torch.as_tensor(r, dtype=torch.float64) for r in rows])
    return EmbeddingStack((EmbeddingLayer(layer_id, torch.arange(emb.shape[0]), emb, (1, emb.shape[0])),))


class TestInfoNce:
    def test_equal_logits_give_log_of_candidate_count(self):
        cfg = ContrastiveConfig(temperature=0.07)
        anchor = torch.tensor([1.0, 0.0], dtype=torch.float64)
        other = torch.tensor([0.0, 1.0], dtype=torch.float64)
        loss = info_nce(anchor, other, other.expand(255, 2), cfg)
        assert float(loss) == pytest.approx(math.log(256), abs=1e-6)

    def test_confident_positive_gives_small_loss(self):
        cfg = ContrastiveConfig(temperature=0.07)
        anchor = torch.tensor([1.0, 0.0], dtype=torch.float64)
        negatives = torch.tensor([[-1.0, 0.0], [0.0, 1.0]], dtype=torch.float64)
        assert float(info_nce(anchor, anchor, negatives, cfg)) < 1e-4

    def test_no_negatives_is_a_configuration_error(self):
        vec = torch.tensor([1.0, 0.0])
        with pytest.raises(ConfigurationError):
            info_nce(vec, vec, torch.empty(0, 2), ContrastiveConfig())

    def test_zero_vector_is_rejected(self):
        vec = torch.tensor([1.0, 0.0])
        with pytest.raises(InvalidEmbeddingError):
            info_nce(torch.zeros(2), vec, vec, ContrastiveConfig())

    def test_gradient_matches_finite_differences(self):
        gen = torch.Generator().manual_seed(3)
        anchor = torch.randn(8, dtype=torch.float64, generator=gen, requires_grad=True)
        positive = torch.randn(8, dtype=torch.float64, generator=gen)
        negatives = torch.randn(5, 8, dtype=torch.float64, generator=gen)
        cfg = ContrastiveConfig(temperature=0.5)
        assert torch.autograd.gradcheck(
            lambda a: info_nce(a, positive, negatives, cfg), (anchor,), eps=1e-6, atol=1e-6, rtol=1e-3
        )

    def test_scalar_values(self):
        cfg = ContrastiveConfig(temperature=1.0)
        e1, e2 = basis(1.0, 0.0), basis(0.0, 1.0)
        assert float(info_nce(e1, e1, e2, cfg)) == pytest.approx(-math.log(math.e / (math.e + 1)), abs=1e-9)
        assert float(info_nce(e1, e1, e2, cfg)) == pytest.approx(0.31326, abs=1e-5)
        assert float(info_nce(e1, e2, e1, cfg)) == pytest.approx(math.log(1 + math.e), abs=1e-9)
        assert float(info_nce(e1, e2, e1, cfg)) == pytest.approx(1.31326, abs=1e-5)

    def test_strictly_decreasing_in_positive_similarity(self):
        cfg = ContrastiveConfig(temperature=1.0)
        anchor = basis(1.0, 0.0, 0.0)
        negatives = torch.stack([basis(0.0, 1.0, 0.0), basis(0.6, 0.8, 0.0)])
        losses = [
            float(info_nce(anchor, basis(math.cos(theta), 0.0, math.sin(theta)), negatives, cfg))
            for theta in np.linspace(math.pi, 0.0, 9)
        ]
        assert all(later < earlier for earlier, later in zip(losses, losses[1:]))

    def test_strictly_increasing_in_negative_similarity(self):
        cfg = ContrastiveConfig(temperature=1.0)
        anchor = basis(1.0, 0.0, 0.0)
        positive = basis(0.0, 0.0, 1.0)
        losses = [
            float(info_nce(anchor, positive, basis(math.cos(phi), math.sin(phi), 0.0), cfg))
            for phi in np.linspace(math.pi, 0.0, 9)
        ]
        assert all(later > earlier for earlier, later in zip(losses, losses[1:]))

    def test_gradient_in_every_argument_matches_finite_differences(self):
        gen = torch.Generator().manual_seed(5)
        anchor = torch.randn(6, dtype=torch.float64, generator=gen, requires_grad=True)
        positive = torch.randn(6, dtype=torch.float64, generator=gen, requires_grad=True)
        negatives = torch.randn(4, 6, dtype=torch.float64, generator=gen, requires_grad=True)
        cfg = ContrastiveConfig(temperature=0.5)
        assert torch.autograd.gradcheck(
            lambda a, p, n: info_nce(a, p, n, cfg), (anchor, positive, negatives), eps=1e-6, atol=1e-6, rtol=1e-3
        )


class TestPatchLosses:
    def test_patch_nce_matches_loop_over_many_draws(self, make_stack):
        cfg = ContrastiveConfig(temperature=0.07, num_locations=16)
        for seed in range(100):
            out = make_stack(2 * seed, [16, 9, 5], 8)
            tgt = make_stack(2 * seed + 1, [16, 9, 5], 8)
            expected = brute_force_nce(out, tgt, 0.07)
            assert float(patch_nce_loss(out, tgt, cfg)) == pytest.approx(expected, abs=1e-6)

    def test_identical_embeddings_give_log_of_location_count(self):
        cfg = ContrastiveConfig(temperature=0.07, num_locations=16)
        same = single_layer([basis(0.6, 0.8)] * 16)
        assert float(patch_nce_loss(same, same, cfg)) == pytest.approx(math.log(16), abs=1e-9)

    def test_orthogonal_locations_give_tiny_loss(self):
        cfg = ContrastiveConfig(temperature=0.07, num_locations=2)
        stack = single_layer([basis(1.0, 0.0), basis(0.0, 1.0)])
        expected = math.log1p(math.exp(-1 / 0.07))
        assert float(patch_nce_loss(stack, stack, cfg)) == pytest.approx(expected, rel=1e-6)
        assert expected == pytest.approx(6.2e-7, rel=0.02)

    def test_negatives_budget_uses_cyclic_neighbours(self, make_stack):
        cfg = ContrastiveConfig(temperature=0.2, negatives_per_anchor=2, num_locations=6)
        out = make_stack(0, [6, 6], 4)
        tgt = make_stack(1, [6, 6], 4)
        expected = brute_force_nce(out, tgt, 0.2, num_negatives=2)
        assert float(sp_loss(out, tgt, cfg)) == pytest.approx(expected, abs=1e-6)

    def test_negatives_budget_larger_than_layer_is_rejected(self, make_stack):
        cfg = ContrastiveConfig(negatives_per_anchor=8, num_locations=16)
        with pytest.raises(ConfigurationError):
            sp_loss(make_stack(0, [4], 4), make_stack(1, [4], 4), cfg)

    def test_asp_matches_loop_with_lambda_weights(self, make_stack):
        cfg = ContrastiveConfig(temperature=0.07, num_locations=12)
        adaptive = AdaptiveConfig(weight=WeightFamily(name="lambda"), schedule=ScheduleFamily(name="linear"),
                                  current_iter=30, total_iters=40)
        g = 0.75
        for seed in range(20):
            out = make_stack(10 + seed, [12, 7], 3)
            # positives correlated with anchors so some weights are strictly between 0 and 1
            gt_layers = []
            gen = torch.Generator().manual_seed(seed)
            for layer in out.layers:
                noisy = layer.embeddings + 0.8 * torch.randn(layer.embeddings.shape, generator=gen, dtype=torch.float64)
                noisy = noisy / noisy.norm(dim=1, keepdim=True)
                gt_layers.append(EmbeddingLayer(layer.layer_id, layer.locations, noisy, layer.grid_shape))
            gt = EmbeddingStack(tuple(gt_layers))

            weights = []
            for a_layer, t_layer in zip(out.layers, gt.layers):
                sims = (a_layer.embeddings * t_layer.embeddings).sum(dim=1).numpy()
                weights.append([1 - g + g * lambda_weight(float(c)) for c in sims])
            expected = brute_force_nce(out, gt, 0.07, weights=weights)
            assert float(asp_loss(out, gt, cfg, adaptive)) == pytest.approx(expected, abs=1e-6)

    def test_sp_gradient_matches_finite_differences(self, make_stack):
        cfg = ContrastiveConfig(temperature=0.3, num_locations=6)
        gt = make_stack(1, [6], 5)
        layer = gt.layers[0]
        start = make_stack(2, [6], 5).layers[0].embeddings.clone().requires_grad_(True)

        def objective(emb):
            out = EmbeddingStack((EmbeddingLayer(layer.layer_id, layer.locations, emb, layer.grid_shape),))
            return sp_loss(out, gt, cfg)

        assert torch.autograd.gradcheck(objective, (start,), eps=1e-6, atol=1e-6, rtol=1e-3)

    def test_sp_gradient_in_targets_matches_finite_differences(self, make_stack):
        cfg = ContrastiveConfig(temperature=0.3, num_locations=6)
        out = make_stack(3, [6], 5)
        layer = out.layers[0]
        start = make_stack(4, [6], 5).layers[0].embeddings.clone().requires_grad_(True)

        def objective(emb):
            gt = EmbeddingStack((EmbeddingLayer(layer.layer_id, layer.locations, emb, layer.grid_shape),))
            return sp_loss(out, gt, cfg)

        assert torch.autograd.gradcheck(objective, (start,), eps=1e-6, atol=1e-6, rtol=1e-3)

    def test_asp_gradient_with_frozen_weights_matches_finite_differences(self, make_stack):
        from aspstain.losses.contrastive import weighted_nce_loss

        cfg = ContrastiveConfig(temperature=0.3, num_locations=6)
        adaptive = AdaptiveConfig(weight=WeightFamily(name="sigmoid"), current_iter=1, total_iters=2)
        gt = make_stack(1, [6], 5)
        out = make_stack(2, [6], 5)
        layer = out.layers[0]
        frozen = asp_location_weights(out, gt, adaptive)
        start = layer.embeddings.clone().requires_grad_(True)

        def objective(emb):
            stack = EmbeddingStack((EmbeddingLayer(layer.layer_id, layer.locations, emb, layer.grid_shape),))
            return weighted_nce_loss(stack, gt, frozen, cfg)

        assert torch.autograd.gradcheck(objective, (start,), eps=1e-6, atol=1e-6, rtol=1e-3)

    def test_asp_weights_carry_no_gradient(self, make_stack):
        out = make_stack(0, [8], 4)
        emb = out.layers[0].embeddings.clone().requires_grad_(True)
        stack = EmbeddingStack((EmbeddingLayer(0, out.layers[0].locations, emb, (1, 8)),))
        weights = asp_location_weights(stack, make_stack(1, [8], 4), AdaptiveConfig(current_iter=1, total_iters=1))
        assert not weights[0].requires_grad

    def test_misaligned_stacks_are_rejected(self, make_stack):
        cfg = ContrastiveConfig(num_locations=4)
        with pytest.raises(AlignmentError):
            sp_loss(make_stack(0, [4], 3, layer_ids=[1]), make_stack(1, [4], 3, layer_ids=[2]), cfg)
        shifted = make_stack(1, [4], 3)
        moved = EmbeddingStack((EmbeddingLayer(0, torch.arange(4) + 1, shifted.layers[0].embeddings, (1, 5)),))
        with pytest.raises(AlignmentError):
            sp_loss(make_stack(0, [4], 3), moved, cfg)

    def test_losses_reject_rows_off_the_unit_sphere(self, make_stack):
        cfg = ContrastiveConfig(num_locations=4)
        unit = make_stack(0, [4], 3)
        scaled = EmbeddingStack((EmbeddingLayer(0, torch.arange(4), 1.5 * unit.layers[0].embeddings, (1, 4)),))
        adaptive = AdaptiveConfig(current_iter=1, total_iters=2)
        with pytest.raises(InvalidEmbeddingError):
            sp_loss(scaled, unit, cfg)
        with pytest.raises(InvalidEmbeddingError):
            patch_nce_loss(unit, scaled, cfg)
        with pytest.raises(InvalidEmbeddingError):
            asp_loss(unit, scaled, cfg, adaptive)

    def test_unit_norm_check(self, make_stack):
        stack = make_stack(0, [4], 3)
        stack.assert_unit_norm()
        scaled = EmbeddingStack((EmbeddingLayer(0, torch.arange(4), 2 * stack.layers[0].embeddings, (1, 4)),))
        with pytest.raises(InvalidEmbeddingError):
            scaled.assert_unit_norm()


class TestSpAspDegeneracy:
    @pytest.mark.parametrize("schedule", ["uniform", "linear", "top"])
    def test_zero_family_equals_sp(self, make_stack, schedule):
        cfg = ContrastiveConfig(temperature=0.07, num_locations=10)
        rng = np.random.default_rng(0)
        for seed in range(10):
            out = make_stack(seed, [10, 6], 8, dtype=torch.float32)
            gt = make_stack(seed + 100, [10, 6], 8, dtype=torch.float32)
            total = int(rng.integers(1, 1000))
            adaptive = AdaptiveConfig(weight=WeightFamily(name="zero"), schedule=ScheduleFamily(name=schedule),
                                      current_iter=int(rng.integers(0, total + 1)), total_iters=total)
            assert torch.equal(asp_loss(out, gt, cfg, adaptive), sp_loss(out, gt, cfg))

    @pytest.mark.parametrize("family", ["linear", "sigmoid", "lambda"])
    def test_uniform_schedule_equals_sp(self, make_stack, family):
        cfg = ContrastiveConfig(temperature=0.07, num_locations=10)
        out = make_stack(0, [10], 8)
        gt = make_stack(1, [10], 8)
        adaptive = AdaptiveConfig(weight=WeightFamily(name=family), schedule=ScheduleFamily(name="uniform"),
                                  current_iter=90, total_iters=100)
        assert float(asp_loss(out, gt, cfg, adaptive)) == pytest.approx(float(sp_loss(out, gt, cfg)), abs=1e-6)

    def test_first_iteration_equals_sp(self, make_stack):
        cfg = ContrastiveConfig(num_locations=10)
        out = make_stack(0, [10], 8)
        gt = make_stack(1, [10], 8)
        adaptive = AdaptiveConfig(weight=WeightFamily(name="lambda"), current_iter=0, total_iters=100)
        assert float(asp_loss(out, gt, cfg, adaptive)) == pytest.approx(float(sp_loss(out, gt, cfg)), abs=1e-6)

    def test_all_zero_weights_are_degenerate(self, make_stack):
        out = make_stack(0, [6], 4)
        opposite = EmbeddingStack((EmbeddingLayer(0, torch.arange(6), -out.layers[0].embeddings, (1, 6)),))
        adaptive = AdaptiveConfig(weight=WeightFamily(name="lambda"), current_iter=10, total_iters=10)
        with pytest.raises(DegenerateWeightsError):
            asp_loss(out, opposite, ContrastiveConfig(num_locations=6), adaptive)


class TestWeightedLayerMean:
    def test_sum_normalization(self):
        result = weighted_layer_mean(torch.tensor([1.0, 3.0]), torch.tensor([2.0, 4.0]))
        assert float(result) == pytest.approx(3.5)

    def test_uniform_weights_give_plain_mean(self):
        losses = torch.tensor([1.0, 2.0, 6.0])
        assert float(weighted_layer_mean(torch.full((3,), 0.2), losses)) == pytest.approx(3.0)

    def test_count_normalization(self):
        losses = torch.tensor([1.0, 2.0, 6.0])
        assert float(weighted_layer_mean(torch.ones(3), losses, "count")) == pytest.approx(9.0)

    def test_normalized_asp_weights_sum_to_one(self, make_stack):
        adaptive = AdaptiveConfig(weight=WeightFamily(name="sigmoid"), current_iter=7, total_iters=10)
        for weights in asp_location_weights(make_stack(0, [12, 5], 4), make_stack(1, [12, 5], 4), adaptive):
            assert float((weights / weights.sum()).sum()) == pytest.approx(1.0, abs=1e-6)

    def test_zero_weights_raise(self):
        with pytest.raises(DegenerateWeightsError):
            weighted_layer_mean(torch.zeros(3), torch.ones(3))


class TestWeightFamilies:
    def test_family_values(self):
        assert weight_fn(0.3, WeightFamily(name="zero")) == 1.0
        assert weight_fn(0.0, WeightFamily(name="linear")) == pytest.approx(0.5)
        assert weight_fn(-1.0, WeightFamily(name="linear")) == pytest.approx(0.0)
        assert weight_fn(0.0, WeightFamily(name="sigmoid")) == pytest.approx(0.5)
        assert weight_fn(0.2, WeightFamily(name="sigmoid", sigmoid_k=10)) == pytest.approx(1 / (1 + math.exp(-2)))
        lam = WeightFamily(name="lambda", lambda_low=0.0, lambda_high=0.5)
        assert weight_fn(0.25, lam) == pytest.approx(0.5)
        assert weight_fn(-0.7, lam) == 0.0
        assert weight_fn(0.9, lam) == 1.0

    @pytest.mark.parametrize("family", ["linear", "sigmoid", "lambda"])
    def test_monotone_and_bounded(self, family):
        sims = torch.linspace(-1, 1, 201, dtype=torch.float64)
        values = weight_fn(sims, WeightFamily(name=family))
        assert bool((values >= 0).all()) and bool((values <= 1).all())
        assert bool((values[1:] >= values[:-1]).all())

    @pytest.mark.parametrize("family", ["linear", "sigmoid", "lambda"])
    def test_asp_weights_follow_similarity_order(self, make_stack, family):
        adaptive = AdaptiveConfig(weight=WeightFamily(name=family), current_iter=6, total_iters=10)
        for seed in range(10):
            out = make_stack(seed, [20], 3)
            gt = make_stack(seed + 50, [20], 3)
            sims = (out.layers[0].embeddings * gt.layers[0].embeddings).sum(dim=1)
            weights = asp_location_weights(out, gt, adaptive)[0]
            ordered = weights[torch.argsort(sims)]
            assert bool((ordered[1:] >= ordered[:-1]).all())

    def test_similarity_outside_domain(self):
        with pytest.raises(DomainError):
            weight_fn(1.5, WeightFamily(name="linear"))

    def test_lambda_breakpoints_must_be_ordered(self):
        with pytest.raises(ValidationError):
            WeightFamily(name="lambda", lambda_low=0.5, lambda_high=0.5)


class TestScheduleFamilies:
    def test_family_values(self):
        assert schedule_fn(0.8, ScheduleFamily(name="uniform")) == 0.0
        assert schedule_fn(0.3, ScheduleFamily(name="linear")) == pytest.approx(0.3)
        top = ScheduleFamily(name="top", top_start=0.5)
        assert schedule_fn(0.4, top) == 0.0
        assert schedule_fn(0.75, top) == pytest.approx(0.5)
        assert schedule_fn(1.0, top) == pytest.approx(1.0)

    def test_progress_outside_domain(self):
        with pytest.raises(DomainError):
            schedule_fn(1.2, ScheduleFamily(name="linear"))

    @pytest.mark.parametrize("family", ["zero", "linear", "sigmoid", "lambda"])
    @pytest.mark.parametrize("schedule", ["uniform", "linear", "top"])
    def test_weight_is_one_at_start(self, family, schedule):
        a = torch.tensor([1.0, 0.0])
        p = torch.tensor([0.0, 1.0])
        adaptive = AdaptiveConfig(weight=WeightFamily(name=family), schedule=ScheduleFamily(name=schedule),
                                  current_iter=0, total_iters=50)
        assert adaptive_weight(a, p, adaptive) == 1.0

    def test_top_schedule_is_one_before_start(self):
        a = torch.tensor([1.0, 0.0])
        p = torch.tensor([-1.0, 0.0])
        for t in range(50):
            adaptive = AdaptiveConfig(schedule=ScheduleFamily(name="top"), current_iter=t, total_iters=100)
            assert adaptive_weight(a, p, adaptive) == 1.0

    def test_weights_stay_in_unit_interval(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            a = torch.tensor(rng.normal(size=4))
            p = torch.tensor(rng.normal(size=4))
            a, p = a / a.norm(), p / p.norm()
            adaptive = AdaptiveConfig(weight=WeightFamily(name="sigmoid"), current_iter=int(rng.integers(0, 11)),
                                      total_iters=10)
            assert 0.0 <= adaptive_weight(a, p, adaptive) <= 1.0

    def test_variant_name(self):
        assert AdaptiveConfig(weight=WeightFamily(name="zero")).variant_name == "sp"
        adaptive = AdaptiveConfig(weight=WeightFamily(name="lambda"), schedule=ScheduleFamily(name="top"))
        assert adaptive.variant_name == "asp(lambda,top)"
        assert adaptive.at(5, 10).progress == pytest.approx(0.5)


class TestSimilarityDiagnostics:
    def test_heatmap_holds_diagonal_similarities(self, make_stack):
        out = make_stack(0, [6], 4)
        gt = make_stack(1, [6], 4)
        locations = torch.tensor([0, 2, 4, 5, 7, 8])
        out = EmbeddingStack((EmbeddingLayer(3, locations, out.layers[0].embeddings, (3, 3)),))
        gt = EmbeddingStack((EmbeddingLayer(3, locations, gt.layers[0].embeddings, (3, 3)),))
        sim_map = similarity_heatmap(out, gt, 3)
        expected = (out.layers[0].embeddings * gt.layers[0].embeddings).sum(dim=1).numpy()
        np.testing.assert_allclose(sim_map.values, expected, atol=1e-12)

        grid = sim_map.to_grid()
        assert grid.shape == (3, 3)
        assert np.isnan(grid.reshape(-1)[[1, 3, 6]]).all()
        assert grid[2, 2] == pytest.approx(expected[-1])
        record = sim_map.to_record()
        assert record.grid[0][1] is None

    def test_heatmap_values_of_known_pairs(self):
        e1 = basis(1.0, 0.0)
        out = single_layer([e1, e1, e1], layer_id=2)
        gt = single_layer([e1, -e1, basis(1 / math.sqrt(2), 1 / math.sqrt(2))], layer_id=2)
        values = similarity_heatmap(out, gt, 2).values
        np.testing.assert_allclose(values, [1.0, -1.0, 1 / math.sqrt(2)], atol=1e-12)

    def test_unknown_layer(self, make_stack):
        with pytest.raises(RangeError):
            similarity_heatmap(make_stack(0, [4], 3), make_stack(1, [4], 3), 9)

    def test_histogram_counts_every_value(self, make_stack):
        out = make_stack(0, [16, 9], 4)
        gt = make_stack(1, [16, 9], 4)
        maps = [similarity_heatmap(out, gt, layer_id) for layer_id in out.layer_ids]
        histogram = similarity_histogram(maps, 20)
        assert int(histogram.counts.sum()) == 25
        assert histogram.edges[0] == -1.0 and histogram.edges[-1] == 1.0
        assert histogram.to_record(step=7).bins == 20

    @staticmethod
    def flat_map(values):
        values = np.asarray(values, dtype=np.float64)
        return SimilarityMap(0, (1, values.size), np.arange(values.size), values)

    def test_histogram_edge_values(self):
        assert similarity_histogram([self.flat_map([-1.0, 1.0])], 2).counts.tolist() == [1, 1]
        assert similarity_histogram([self.flat_map([1.0] * 7)], 2).counts.tolist() == [0, 7]

    def test_histogram_of_uniform_values_is_flat(self):
        values = np.random.default_rng(0).uniform(-1.0, 1.0, 1000)
        counts = similarity_histogram([self.flat_map(values[:400]), self.flat_map(values[400:])], 10).counts
        assert int(counts.sum()) == 1000
        assert chisquare(counts).pvalue > 0.001

    def test_histogram_rejects_bad_input(self, make_stack):
        maps = [similarity_heatmap(make_stack(0, [4], 3), make_stack(1, [4], 3), 0)]
        with pytest.raises(ConfigurationError):
            similarity_histogram(maps, 0)
        with pytest.raises(EmptyInputError):
            similarity_histogram([], 10)
