#!/usr/bin/env python3
"""
Tests for the edge-aware attention model
"""

import numpy as np
import pytest
import torch
import torch.nn.functional as F

from ewgsl import (
    CheckpointError,
    DimensionMismatchError,
    EWGSLModel,
    GraphTensors,
    Hyperparameters,
    InvalidInputError,
    assign_self_loop_weights,
    attention_scores,
    describe_attention,
    forward,
    infer_labels,
    layer_forward,
    load_checkpoint,
    save_checkpoint,
    sparsify_attention,
    validate_graph,
)
from ewgsl.model import EWGSLLayer, aggregate, project


def _leaky(x: float) -> float:
    return x if x > 0 else 0.2 * x


def _dense_weights(graph, mode: str = "max") -> np.ndarray:
    """Adjacency with self-loop weights on the diagonal"""
    with_loops = assign_self_loop_weights(graph, mode)
    dense = with_loops.adjacency.toarray()
    np.fill_diagonal(dense, with_loops.self_loops)
    return dense


def _dense_rho(graph, mode: str = "max") -> np.ndarray:
    dense = _dense_weights(graph, mode)
    neighbor_sum = graph.adjacency.toarray().sum(axis=1)
    rho = np.zeros_like(dense)
    for i in range(graph.n):
        if neighbor_sum[i] == 0:
            rho[i, i] = 1.0
        else:
            rho[i] = dense[i] / neighbor_sum[i]
    return rho


def _layer(in_dim: int, out_dim: int, heads: int, activation: str = "elu", seed: int = 0) -> EWGSLLayer:
    layer = EWGSLLayer(in_dim, out_dim, heads, activation)
    layer.reset_parameters(torch.Generator().manual_seed(seed))
    return layer


# =============================================================================
# HYPERPARAMETERS AND GRAPH TENSORS
# =============================================================================


class TestHyperparameters:
    """Validated model settings"""

    def test_defaults(self):
        hyper = Hyperparameters()
        assert hyper.alpha == 1.5
        assert hyper.heads == 6
        assert hyper.hidden_dims == (256, 128)
        assert hyper.learning_rate == 0.005
        assert hyper.epochs == 100

    @pytest.mark.parametrize(
        "changes",
        [
            {"alpha": 2.5},
            {"alpha": 0.9},
            {"heads": 0},
            {"eta": -0.1},
            {"temperature": 0.0},
            {"learning_rate": 0.0},
            {"epochs": 0},
            {"hidden_dims": ()},
            {"hidden_dims": (4, 0)},
            {"self_loop_mode": "median"},
            {"impact_mode": "learned"},
            {"negatives_per_node": 0},
            {"entmax_tol": 0.0},
            {"attention_gain": -1.0},
        ],
    )
    def test_invalid(self, changes):
        with pytest.raises(InvalidInputError):
            Hyperparameters(**changes)

    def test_dict_round_trip(self, tiny_hyper):
        data = tiny_hyper.to_dict()
        assert data["hidden_dims"] == [4]
        assert Hyperparameters.from_dict(data) == tiny_hyper

    def test_unknown_keys(self):
        with pytest.raises(InvalidInputError):
            Hyperparameters.from_dict({"alpha": 1.5, "dropout": 0.5})

    def test_replace(self, tiny_hyper):
        changed = tiny_hyper.replace(alpha=2.0)
        assert changed.alpha == 2.0
        assert tiny_hyper.alpha == 1.5


class TestGraphTensors:
    """Directed pairs with rho and weights"""

    def test_pair_count(self, star_graph):
        tensors = GraphTensors.from_graph(star_graph)
        assert tensors.num_pairs == 2 * star_graph.num_edges + star_graph.n
        assert int(tensors.self_mask.sum()) == star_graph.n
        assert tensors.rho.dtype == torch.float64

    def test_rho_matches_dense(self, make_random_graph):
        graph = make_random_graph(9, 0.4, seed=3)
        tensors = GraphTensors.from_graph(graph, "avg")
        rho = _dense_rho(graph, "avg")
        for s, d, r in zip(tensors.src.tolist(), tensors.dst.tolist(), tensors.rho.tolist()):
            assert r == pytest.approx(rho[s, d], abs=1e-12)

    def test_for_hyperparameters(self, star_graph, tiny_hyper):
        tensors = GraphTensors.for_hyperparameters(star_graph, tiny_hyper.replace(impact_mode="uniform"))
        assert torch.all(tensors.rho == 1.0)


# =============================================================================
# LAYER
# =============================================================================


class TestAttentionScores:
    """e_ij = rho_ij * LeakyReLU(a^T [Wh_i || Wh_j])"""

    def test_zero_attention_vector(self, star_graph):
        tensors = GraphTensors.from_graph(star_graph)
        layer = _layer(4, 3, 2)
        with torch.no_grad():
            layer.attention.zero_()
        scores = attention_scores(layer, None, tensors)
        assert scores.shape == (2, tensors.num_pairs)
        assert torch.all(scores == 0)

    def test_dense_oracle(self, make_random_graph):
        graph = make_random_graph(6, 0.5, seed=5)
        tensors = GraphTensors.from_graph(graph)
        layer = _layer(5, 3, 2)
        H = torch.from_numpy(np.random.default_rng(0).normal(size=(6, 5)))
        scores = attention_scores(layer, H, tensors).detach().numpy()

        W = layer.weight.detach().numpy()
        a = layer.attention.detach().numpy()
        rho = _dense_rho(graph)
        X = H.numpy()
        for k in range(2):
            Wh = X @ W[k].T
            for p, (i, j) in enumerate(zip(tensors.src.tolist(), tensors.dst.tolist())):
                raw = a[k, :3] @ Wh[i] + a[k, 3:] @ Wh[j]
                assert scores[k, p] == pytest.approx(rho[i, j] * _leaky(raw), abs=1e-12)

    def test_single_head(self, star_graph):
        tensors = GraphTensors.from_graph(star_graph)
        layer = _layer(4, 3, 2)
        full = attention_scores(layer, None, tensors)
        assert torch.equal(attention_scores(layer, None, tensors, head=1), full[1])

    def test_scale_invariance(self, make_random_graph):
        graph = make_random_graph(8, 0.5, seed=6)
        u, v, w = graph.edges()
        scaled = validate_graph(graph.n, np.column_stack([u, v, 4.2 * w]))
        layer = _layer(8, 3, 2)
        first = attention_scores(layer, None, GraphTensors.from_graph(graph))
        second = attention_scores(layer, None, GraphTensors.from_graph(scaled))
        torch.testing.assert_close(first, second, rtol=1e-12, atol=1e-12)

    def test_identity_features(self):
        layer = _layer(4, 3, 2)
        torch.testing.assert_close(project(layer, None), project(layer, torch.eye(4, dtype=torch.float64)))

    def test_feature_width_checked(self):
        layer = _layer(4, 3, 2)
        with pytest.raises(DimensionMismatchError):
            project(layer, torch.zeros(4, 5, dtype=torch.float64))

    def test_node_count_checked(self, star_graph):
        layer = _layer(3, 2, 1)
        with pytest.raises(DimensionMismatchError):
            attention_scores(layer, None, GraphTensors.from_graph(star_graph))

    def test_unknown_activation(self):
        with pytest.raises(InvalidInputError):
            EWGSLLayer(3, 2, 1, activation="relu")


class TestSparsifyAttention:
    """Row-wise entmax of the scores"""

    def test_single_entry_row(self, graph_with_isolated):
        tensors = GraphTensors.from_graph(graph_with_isolated)
        scores = torch.randn(2, tensors.num_pairs, dtype=torch.float64, generator=torch.Generator().manual_seed(1))
        sparse, tau = sparsify_attention(scores, tensors, 1.5)
        isolated = tensors.src == 2
        assert torch.all(sparse[:, isolated] == 1.0)
        assert tau.shape == (2, 3)

    def test_alpha_one_is_softmax(self, make_random_graph):
        graph = make_random_graph(8, 0.5, seed=7)
        tensors = GraphTensors.from_graph(graph)
        scores = torch.randn(3, tensors.num_pairs, dtype=torch.float64, generator=torch.Generator().manual_seed(2))
        sparse, _ = sparsify_attention(scores, tensors, 1.0)
        for k in range(3):
            for i in range(graph.n):
                mask = tensors.src == i
                torch.testing.assert_close(sparse[k, mask], torch.softmax(scores[k, mask], dim=0))

    def test_rows_sum_to_one(self, small_tensors):
        scores = torch.randn(2, small_tensors.num_pairs, dtype=torch.float64, generator=torch.Generator().manual_seed(3))
        sparse, _ = sparsify_attention(scores, small_tensors, 2.0)
        sums = torch.zeros(2, small_tensors.n, dtype=torch.float64).index_add_(1, small_tensors.src, sparse)
        torch.testing.assert_close(sums, torch.ones_like(sums))

    def test_vector_input(self, star_graph):
        tensors = GraphTensors.from_graph(star_graph)
        scores = torch.linspace(-1, 1, tensors.num_pairs, dtype=torch.float64)
        sparse, tau = sparsify_attention(scores, tensors, 1.5)
        assert sparse.shape == (tensors.num_pairs,)
        assert tau.shape == (star_graph.n,)


class TestLayerForward:
    """Aggregation and head combination"""

    def test_isolated_node_keeps_own_projection(self, graph_with_isolated):
        tensors = GraphTensors.from_graph(graph_with_isolated)
        layer = _layer(4, 3, 2, activation="identity")
        H = torch.from_numpy(np.random.default_rng(1).normal(size=(3, 4)))
        with torch.no_grad():
            layer.beta.copy_(torch.tensor([0.5, 1.5], dtype=torch.float64))
        out, _ = layer_forward(layer, H, tensors, 1.5)
        Wh = project(layer, H)
        expected = (0.5 * Wh[0, 2] + 1.5 * Wh[1, 2]) / 2
        torch.testing.assert_close(out[2], expected)

    def test_beta_masks_second_head(self, small_tensors):
        layer = _layer(small_tensors.n, 4, 2)
        with torch.no_grad():
            layer.beta.copy_(torch.tensor([2.0, 0.0], dtype=torch.float64))
        out, _ = layer_forward(layer, None, small_tensors, 1.5)
        projected = project(layer, None)
        sparse, _ = sparsify_attention(attention_scores(layer, None, small_tensors), small_tensors, 1.5)
        expected = F.elu(aggregate(sparse, projected, small_tensors)[0])
        torch.testing.assert_close(out, expected)

    def test_single_head_update(self, small_tensors):
        layer = _layer(small_tensors.n, 4, 1, activation="identity")
        out, state = layer_forward(layer, None, small_tensors, 2.0)
        projected = project(layer, None)[0].detach()
        dense = torch.zeros(small_tensors.n, small_tensors.n, dtype=torch.float64)
        dense[small_tensors.src, small_tensors.dst] = state.sparse[0]
        torch.testing.assert_close(out.detach(), dense @ projected)

    def test_vanilla_softmax_reduction(self, make_random_graph):
        """Uniform rho with alpha = 1 is plain softmax attention"""
        graph = make_random_graph(10, 0.4, seed=8)
        tensors = GraphTensors.from_graph(graph, "max", "uniform")
        layer = _layer(6, 3, 2)
        H = torch.from_numpy(np.random.default_rng(2).normal(size=(10, 6)))
        out, _ = layer_forward(layer, H, tensors, 1.0)

        W = layer.weight.detach().numpy()
        a = layer.attention.detach().numpy()
        beta = layer.beta.detach().numpy()
        X = H.numpy()
        adjacency = graph.adjacency.toarray()
        expected = np.zeros((10, 3))
        for k in range(2):
            Wh = X @ W[k].T
            for i in range(10):
                neighbors = sorted(set(np.flatnonzero(adjacency[i]).tolist()) | {i})
                raw = np.array([_leaky(a[k, :3] @ Wh[i] + a[k, 3:] @ Wh[j]) for j in neighbors])
                weights = np.exp(raw - raw.max())
                weights /= weights.sum()
                h = weights @ Wh[neighbors]
                expected[i] += beta[k] * np.where(h > 0, h, np.expm1(h)) / 2
        np.testing.assert_allclose(out.detach().numpy(), expected, atol=1e-9)

    def test_state_is_detached(self, small_tensors):
        layer = _layer(small_tensors.n, 4, 2)
        _, state = layer_forward(layer, None, small_tensors, 1.5)
        assert not state.sparse.requires_grad
        assert state.heads == 2
        torch.testing.assert_close(state.row_sums(), torch.ones(2, small_tensors.n, dtype=torch.float64))
        assert state.head_mean().shape == (small_tensors.num_pairs,)


# =============================================================================
# MODEL
# =============================================================================


class TestModel:
    """Stacked layers and membership"""

    def test_layer_stack(self, tiny_hyper):
        model = EWGSLModel(30, 3, tiny_hyper.replace(hidden_dims=(8, 4)))
        assert [(l.in_dim, l.out_dim) for l in model.layers] == [(30, 8), (8, 4), (4, 3)]
        assert [l.activation for l in model.layers] == ["elu", "elu", "identity"]

    def test_membership_rows(self, small_dataset, small_tensors, tiny_hyper):
        _, labels = small_dataset
        model = EWGSLModel(small_tensors.n, labels.c, tiny_hyper)
        membership, states = forward(model, small_tensors)
        assert membership.M.shape == (30, 3)
        torch.testing.assert_close(membership.M.sum(dim=1), torch.ones(30, dtype=torch.float64))
        assert len(states) == 2
        np.testing.assert_array_equal(membership.y_hat, infer_labels(membership.M))

    def test_zero_logits_uniform(self, small_tensors, tiny_hyper):
        model = EWGSLModel(small_tensors.n, 3, tiny_hyper)
        with torch.no_grad():
            model.layers[-1].weight.zero_()
        membership, _ = forward(model, small_tensors)
        torch.testing.assert_close(membership.M, torch.full((30, 3), 1 / 3, dtype=torch.float64))

    def test_deterministic(self, small_tensors, tiny_hyper):
        first, _ = forward(EWGSLModel(small_tensors.n, 3, tiny_hyper), small_tensors)
        second, _ = forward(EWGSLModel(small_tensors.n, 3, tiny_hyper), small_tensors)
        assert torch.equal(first.M, second.M)
        other, _ = forward(EWGSLModel(small_tensors.n, 3, tiny_hyper.replace(seed=1)), small_tensors)
        assert not torch.equal(first.M, other.M)

    def test_permutation_equivariance(self, make_random_graph, tiny_hyper):
        graph = make_random_graph(10, 0.4, seed=1)
        perm = np.random.default_rng(0).permutation(10)
        model = EWGSLModel(10, 3, tiny_hyper)
        relabeled = EWGSLModel(10, 3, tiny_hyper)
        relabeled.load_state_dict(model.state_dict())
        with torch.no_grad():
            relabeled.layers[0].weight[:, :, torch.from_numpy(perm)] = model.layers[0].weight

        original, _ = forward(model, GraphTensors.from_graph(graph))
        permuted, _ = forward(relabeled, GraphTensors.from_graph(graph.permute(perm)))
        torch.testing.assert_close(permuted.M[torch.from_numpy(perm)], original.M, rtol=1e-8, atol=1e-10)

    def test_alpha_override(self, small_tensors, tiny_hyper):
        model = EWGSLModel(small_tensors.n, 3, tiny_hyper)
        _, sparse_states = model(small_tensors)
        _, dense_states = model(small_tensors, alpha=1.0)
        assert bool((dense_states[-1].sparse > 0).all())
        assert not torch.equal(sparse_states[-1].sparse, dense_states[-1].sparse)

    def test_wrong_graph_size(self, star_graph, tiny_hyper):
        model = EWGSLModel(5, 2, tiny_hyper)
        with pytest.raises(DimensionMismatchError):
            model(GraphTensors.from_graph(star_graph))

    def test_invalid_sizes(self, tiny_hyper):
        with pytest.raises(InvalidInputError):
            EWGSLModel(0, 2, tiny_hyper)

    def test_named_gradients_before_backward(self, tiny_hyper):
        grads = EWGSLModel(4, 2, tiny_hyper).named_gradients()
        assert set(grads) == {f"layers.{i}.{p}" for i in range(2) for p in ("weight", "attention", "beta")}
        assert all(g is None for g in grads.values())


class TestInitialization:
    """Seeded parameters and the attention gain"""

    def test_zero_gain_starts_uniform(self, small_tensors):
        model = EWGSLModel(small_tensors.n, 3, Hyperparameters(heads=2, hidden_dims=(4,), seed=0))
        assert all(torch.all(layer.attention == 0) for layer in model.layers)
        _, states = forward(model, small_tensors)
        degree = torch.bincount(small_tensors.src, minlength=small_tensors.n).to(torch.float64)
        for state in states:
            expected = (1.0 / degree[state.src]).expand_as(state.sparse)
            torch.testing.assert_close(state.sparse, expected, rtol=0, atol=1e-9)

    def test_gain_scales_attention_only(self, small_tensors):
        hyper = Hyperparameters(heads=2, hidden_dims=(4,), seed=0)
        flat = EWGSLModel(small_tensors.n, 3, hyper)
        glorot = EWGSLModel(small_tensors.n, 3, hyper.replace(attention_gain=1.0))
        halved = EWGSLModel(small_tensors.n, 3, hyper.replace(attention_gain=0.5))
        for a, b, c in zip(flat.layers, glorot.layers, halved.layers):
            assert torch.equal(a.weight, b.weight)
            bound = np.sqrt(6.0 / (2 * b.out_dim + 1))
            assert 0 < float(b.attention.abs().max()) <= bound
            torch.testing.assert_close(c.attention, 0.5 * b.attention)
            assert torch.all(b.beta == 1.0)


class TestInferLabels:
    """Row argmax with low-index tie-break"""

    def test_argmax(self):
        assert infer_labels(torch.tensor([[0.1, 0.7, 0.2]])).tolist() == [1]

    def test_tie(self):
        assert infer_labels(torch.tensor([[0.5, 0.5]])).tolist() == [0]

    def test_identity(self):
        assert infer_labels(torch.eye(4)).tolist() == [0, 1, 2, 3]


class TestDescribeAttention:
    """Pruning statistics"""

    def test_sparsemax_prunes(self, small_dataset, small_tensors, tiny_hyper):
        _, labels = small_dataset
        model = EWGSLModel(small_tensors.n, labels.c, tiny_hyper.replace(alpha=2.0))
        with torch.no_grad():
            model.layers[-1].attention.mul_(1000.0)
        _, states = forward(model, small_tensors)
        stats = describe_attention(states[-1], labels.labels)
        assert 0.0 < stats["pruned_fraction"] <= 1.0
        assert 1.0 <= stats["mean_support"]
        assert 0.0 <= stats["intra_pruned_fraction"] <= 1.0
        assert 0.0 <= stats["inter_pruned_fraction"] <= 1.0

    def test_softmax_prunes_nothing(self, small_tensors, tiny_hyper):
        model = EWGSLModel(small_tensors.n, 3, tiny_hyper.replace(alpha=1.0))
        _, states = forward(model, small_tensors)
        assert describe_attention(states[-1])["pruned_fraction"] == 0.0


# =============================================================================
# CHECKPOINTS
# =============================================================================


class TestCheckpoints:
    """Versioned parameter files"""

    def test_round_trip(self, tmp_path, small_tensors, tiny_hyper):
        model = EWGSLModel(small_tensors.n, 3, tiny_hyper)
        save_checkpoint(tmp_path / "model.pt", model)
        loaded = load_checkpoint(tmp_path / "model.pt")
        assert loaded.hyper == tiny_hyper
        for name, tensor in model.state_dict().items():
            assert torch.equal(loaded.state_dict()[name], tensor)
        assert torch.equal(forward(loaded, small_tensors)[0].M, forward(model, small_tensors)[0].M)

    def test_missing(self, tmp_path):
        with pytest.raises(CheckpointError) as exc_info:
            load_checkpoint(tmp_path / "missing.pt")
        assert "not found" in exc_info.value.issue

    def test_bad_version(self, tmp_path):
        torch.save({"format_version": 99}, tmp_path / "old.pt")
        with pytest.raises(CheckpointError) as exc_info:
            load_checkpoint(tmp_path / "old.pt")
        assert "99" in exc_info.value.issue

    def test_garbage(self, tmp_path):
        (tmp_path / "junk.pt").write_bytes(b"not a checkpoint")
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "junk.pt")

    def test_invalid_contents(self, tmp_path, tiny_hyper):
        torch.save({"format_version": 1, "hyperparameters": tiny_hyper.to_dict()}, tmp_path / "partial.pt")
        with pytest.raises(CheckpointError):
            load_checkpoint(tmp_path / "partial.pt")
