#!/usr/bin/env python3
"""
Tests for the losses, gradients and training loop
"""

import math

import numpy as np
import pandas as pd
import pytest
import torch

import ewgsl.training as training
from ewgsl import (
    AttentionState,
    ContrastiveSample,
    DimensionMismatchError,
    EWGSLModel,
    GraphTensors,
    Hyperparameters,
    InvalidInputError,
    LabelSet,
    NonFiniteGradientError,
    SyntheticSpec,
    TrainingDivergenceError,
    backward,
    compute_lambda,
    cross_entropy_loss,
    forward,
    generate_synthetic_graph,
    info_nce_loss,
    sample_contrastive,
    split_labels,
    total_loss,
    train,
)
from ewgsl.training import ContrastiveBatch, Trainer, check_gradients, objective, read_history, write_history


def _labels(values, labeled, c=3) -> LabelSet:
    mask = np.zeros(len(values), dtype=bool)
    mask[list(labeled)] = True
    return LabelSet(labels=np.array(values), c=c, labeled_mask=mask)


def _state(src, dst, sparse, n) -> AttentionState:
    sparse = torch.tensor(sparse, dtype=torch.float64)
    return AttentionState(
        src=torch.tensor(src),
        dst=torch.tensor(dst),
        raw=sparse.clone(),
        sparse=sparse,
        tau=torch.zeros(sparse.shape[0], n, dtype=torch.float64),
    )


def _info_nce_reference(H, samples, lambda_p, lambda_n, t, include_positive=False) -> float:
    Z = H / np.linalg.norm(H, axis=1, keepdims=True)
    terms = []
    for s in samples:
        numerator = lambda_p * math.exp(Z[s.anchor] @ Z[s.positive] / t)
        denominator = sum(lambda_n * math.exp(Z[s.anchor] @ Z[k] / t) for k in s.negatives)
        if include_positive:
            denominator += numerator
        terms.append(-math.log(numerator / denominator))
    return float(np.mean(terms))


@pytest.fixture
def gradient_problem():
    """12 nodes, 3 classes, half labeled, with a fixed contrastive batch"""
    graph, labels = generate_synthetic_graph(SyntheticSpec(n=12, c=3, intra_p=0.6, inter_p=0.1, seed=2))
    labels = split_labels(labels, 0.5, seed=0)
    rng = np.random.default_rng(0)
    batch = ContrastiveBatch(
        anchors=np.arange(12),
        positives=(np.arange(12) + 1) % 12,
        negatives=rng.integers(0, 12, size=(12, 3)),
    )
    return graph, labels, batch


# =============================================================================
# CROSS-ENTROPY
# =============================================================================


class TestCrossEntropy:
    """-sum over labeled nodes of log m_{i, y_i}"""

    def test_perfect_prediction(self):
        labels = _labels([0, 2, 1, 1], [0, 1, 2])
        M = torch.nn.functional.one_hot(torch.tensor([0, 2, 1, 0]), 3).to(torch.float64)
        assert float(cross_entropy_loss(M, labels)) == 0.0

    def test_uniform(self):
        labels = _labels([0, 2, 1, 1], [0, 1, 3])
        M = torch.full((4, 3), 1 / 3, dtype=torch.float64)
        assert float(cross_entropy_loss(M, labels)) == pytest.approx(3 * math.log(3))

    def test_matches_reference(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            logits = rng.normal(size=(10, 4))
            M = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
            values = rng.integers(0, 4, size=10)
            labeled = rng.choice(10, size=4, replace=False)
            expected = -sum(math.log(M[i, values[i]]) for i in labeled)
            got = cross_entropy_loss(torch.from_numpy(M), _labels(values, labeled, c=4))
            assert float(got) == pytest.approx(expected, rel=1e-12)

    def test_zero_probability_clamped(self):
        labels = _labels([1, 0], [0])
        M = torch.tensor([[1.0, 0.0], [0.5, 0.5]], dtype=torch.float64)
        assert float(cross_entropy_loss(M, labels)) == pytest.approx(-math.log(1e-12))

    def test_needs_labeled_nodes(self):
        with pytest.raises(InvalidInputError):
            cross_entropy_loss(torch.full((2, 3), 1 / 3), _labels([0, 1], []))

    def test_row_count_checked(self):
        with pytest.raises(DimensionMismatchError):
            cross_entropy_loss(torch.full((3, 3), 1 / 3), _labels([0, 1], [0]))


# =============================================================================
# ATTENTION WEIGHTS FOR THE CONTRASTIVE TERM
# =============================================================================


class TestComputeLambda:
    """Mean retained attention on intra/inter predicted-class pairs"""

    SRC = [0, 0, 0, 1, 1, 2, 2]
    DST = [0, 1, 2, 0, 1, 0, 2]

    def test_example(self):
        state = _state(
            self.SRC,
            self.DST,
            [
                [0.6, 0.4, 0.0, 0.2, 0.8, 0.0, 1.0],
                [0.8, 0.2, 0.0, 0.4, 0.6, 0.0, 1.0],
            ],
            n=3,
        )
        lambda_p, lambda_n = compute_lambda(state, np.array([0, 0, 1]))
        assert lambda_p == pytest.approx(0.3)
        assert lambda_n == 1.0

    def test_self_pairs_ignored(self):
        state = _state([0, 1], [0, 1], [[1.0, 1.0]], n=2)
        assert compute_lambda(state, np.array([0, 1])) == (1.0, 1.0)

    def test_matches_brute_force(self, make_random_graph):
        rng = np.random.default_rng(1)
        for trial in range(100):
            graph = make_random_graph(8, 0.5, seed=trial)
            tensors = GraphTensors.from_graph(graph)
            weights = rng.uniform(0, 1, size=(2, tensors.num_pairs))
            weights[rng.random(weights.shape) < 0.3] = 0.0
            state = _state(tensors.src.tolist(), tensors.dst.tolist(), weights.tolist(), n=8)
            y_hat = rng.integers(0, 3, size=8)

            same, cross = [], []
            mean = weights.mean(axis=0)
            for p, (i, j) in enumerate(zip(tensors.src.tolist(), tensors.dst.tolist())):
                if i == j or mean[p] <= 0:
                    continue
                (same if y_hat[i] == y_hat[j] else cross).append(mean[p])
            expected = (np.mean(same) if same else 1.0, np.mean(cross) if cross else 1.0)
            assert compute_lambda(state, y_hat) == pytest.approx(expected, rel=1e-12)


# =============================================================================
# CONTRASTIVE SAMPLING AND INFONCE
# =============================================================================


class TestSampleContrastive:
    """Positives share the anchor's class, negatives do not"""

    def test_properties(self):
        y_hat = np.array([0, 0, 0, 1, 1, 2, 2, 2, 2, 1])
        batch = sample_contrastive(y_hat, 4, np.random.default_rng(0))
        assert sorted(batch.anchors.tolist()) == list(range(10))
        assert batch.negatives.shape == (10, 4)
        for sample in batch.samples():
            assert sample.positive != sample.anchor
            assert y_hat[sample.positive] == y_hat[sample.anchor]
            assert all(y_hat[k] != y_hat[sample.anchor] for k in sample.negatives)

    def test_negatives_distinct(self):
        y_hat = np.repeat([0, 1, 2], 4)
        batch = sample_contrastive(y_hat, 8, np.random.default_rng(1))
        for row in batch.negatives:
            assert len(set(row.tolist())) == 8

    def test_negatives_repeat_when_scarce(self):
        batch = sample_contrastive(np.array([0, 0, 0, 1]), 3, np.random.default_rng(0))
        assert batch.negatives.tolist() == [[3, 3, 3]] * 3

    def test_singleton_class_skipped(self):
        batch = sample_contrastive(np.array([0, 0, 1]), 2, np.random.default_rng(0))
        assert sorted(batch.anchors.tolist()) == [0, 1]

    def test_single_class_is_empty(self):
        assert len(sample_contrastive(np.zeros(5, dtype=int), 2, np.random.default_rng(0))) == 0

    def test_deterministic(self):
        y_hat = np.random.default_rng(3).integers(0, 3, size=40)
        first = sample_contrastive(y_hat, 5, np.random.default_rng(7))
        second = sample_contrastive(y_hat, 5, np.random.default_rng(7))
        assert first.samples() == second.samples()

    def test_positive_covers_other_members(self):
        y_hat = np.array([0, 0, 0, 1])
        rng = np.random.default_rng(0)
        seen = {sample_contrastive(y_hat, 1, rng).samples()[0].positive for _ in range(200)}
        assert seen == {1, 2}


class TestInfoNCE:
    """Lambda-weighted InfoNCE over cosine similarities"""

    def test_single_pair(self):
        H = torch.tensor([[1.0, 0.0], [1.0, 1.0], [0.0, 1.0]], dtype=torch.float64)
        loss = info_nce_loss(H, [ContrastiveSample(0, 1, (2,))], 1.0, 1.0, 0.5)
        assert float(loss) == pytest.approx((0.0 - 1 / math.sqrt(2)) / 0.5)

    def test_identical_embeddings(self):
        H = torch.ones(6, 3, dtype=torch.float64)
        samples = [ContrastiveSample(i, (i + 1) % 6, (2, 3, 4, 5)) for i in range(3)]
        assert float(info_nce_loss(H, samples, 1.0, 1.0, 0.5)) == pytest.approx(math.log(4))
        assert float(info_nce_loss(H, samples, 1.0, 1.0, 0.5, include_positive=True)) == pytest.approx(math.log(5))

    def test_lambda_ratio_shift(self):
        H = torch.from_numpy(np.random.default_rng(0).normal(size=(5, 4)))
        samples = [ContrastiveSample(0, 1, (2, 3)), ContrastiveSample(4, 2, (0, 1))]
        plain = float(info_nce_loss(H, samples, 1.0, 1.0, 0.5))
        weighted = float(info_nce_loss(H, samples, 0.3, 0.6, 0.5))
        assert weighted == pytest.approx(plain + math.log(2))

    def test_matches_reference(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            n, m = int(rng.integers(3, 12)), int(rng.integers(1, 5))
            H = rng.normal(size=(n, 5))
            samples = [
                ContrastiveSample(int(a), int(rng.integers(0, n)), tuple(int(k) for k in rng.integers(0, n, size=m)))
                for a in rng.choice(n, size=int(rng.integers(1, n + 1)), replace=False)
            ]
            lambda_p, lambda_n = rng.uniform(0.05, 1.0, size=2)
            t = float(rng.uniform(0.2, 2.0))
            include = bool(rng.integers(0, 2))
            got = float(info_nce_loss(torch.from_numpy(H), samples, lambda_p, lambda_n, t, include))
            expected = _info_nce_reference(H, samples, lambda_p, lambda_n, t, include)
            assert got == pytest.approx(expected, rel=1e-9, abs=1e-12)

    def test_empty_batch(self):
        assert float(info_nce_loss(torch.ones(3, 2, dtype=torch.float64), [], 1.0, 1.0, 0.5)) == 0.0

    def test_batch_accepted(self):
        H = torch.from_numpy(np.random.default_rng(2).normal(size=(4, 3)))
        samples = [ContrastiveSample(0, 1, (2, 3)), ContrastiveSample(3, 2, (1, 0))]
        batch = ContrastiveBatch.from_samples(samples)
        assert batch.samples() == samples
        assert float(info_nce_loss(H, batch, 0.5, 0.5, 0.5)) == float(info_nce_loss(H, samples, 0.5, 0.5, 0.5))

    def test_uneven_negatives(self):
        with pytest.raises(InvalidInputError):
            ContrastiveBatch.from_samples([ContrastiveSample(0, 1, (2,)), ContrastiveSample(1, 0, (2, 3))])

    def test_temperature_checked(self):
        with pytest.raises(InvalidInputError):
            info_nce_loss(torch.ones(3, 2), [ContrastiveSample(0, 1, (2,))], 1.0, 1.0, 0.0)

    def test_total_loss(self):
        assert total_loss(1.0, 2.0, 0.1) == pytest.approx(1.2)


# =============================================================================
# GRADIENTS
# =============================================================================


class TestGradients:
    """Autograd against central finite differences"""

    @pytest.mark.parametrize("alpha", [1.2, 1.5, 2.0])
    @pytest.mark.parametrize("eta", [0.0, 0.1])
    def test_finite_differences(self, gradient_problem, tiny_hyper, alpha, eta):
        graph, labels, batch = gradient_problem
        hyper = tiny_hyper.replace(alpha=alpha, eta=eta, entmax_tol=1e-12, entmax_max_iter=200)
        tensors = GraphTensors.for_hyperparameters(graph, hyper)
        model = EWGSLModel(graph.n, labels.c, hyper)
        lambdas = (0.4, 0.2)

        grads, _ = backward(model, tensors, labels, hyper, batch=batch, lambdas=lambdas)

        def loss() -> float:
            with torch.no_grad():
                value, *_ = objective(model, tensors, labels, hyper, np.random.default_rng(0), batch, lambdas)
            return float(value)

        step = 1e-4
        agree = total = 0
        for name, parameter in model.named_parameters():
            flat = parameter.data.view(-1)
            analytic = grads[name].view(-1)
            for idx in range(flat.numel()):
                original = float(flat[idx])
                flat[idx] = original + step
                plus = loss()
                flat[idx] = original - step
                minus = loss()
                flat[idx] = original
                numeric = (plus - minus) / (2 * step)
                a = float(analytic[idx])
                total += 1
                agree += abs(a - numeric) <= 1e-3 * max(abs(a), abs(numeric)) + 1e-7
        assert agree / total >= 0.95

    def test_eta_zero_is_cross_entropy(self, gradient_problem, tiny_hyper):
        graph, labels, batch = gradient_problem
        hyper = tiny_hyper.replace(eta=0.0)
        tensors = GraphTensors.for_hyperparameters(graph, hyper)
        model = EWGSLModel(graph.n, labels.c, hyper)

        grads, breakdown = backward(model, tensors, labels, hyper, batch=batch, lambdas=(0.4, 0.2))
        assert breakdown.L == breakdown.L_C
        assert breakdown.L_I != 0.0

        model.zero_grad()
        membership, _ = forward(model, tensors)
        cross_entropy_loss(membership.M, labels).backward()
        for name, parameter in model.named_parameters():
            torch.testing.assert_close(grads[name], parameter.grad, rtol=1e-12, atol=1e-14)

    def test_non_finite_gradient(self, tiny_hyper):
        model = EWGSLModel(4, 2, tiny_hyper)
        for parameter in model.parameters():
            parameter.grad = torch.zeros_like(parameter)
        model.layers[1].attention.grad[0, 2] = float("nan")
        with pytest.raises(NonFiniteGradientError) as exc_info:
            check_gradients(model)
        assert exc_info.value.parameter == "layers.1.attention"
        assert exc_info.value.index == (0, 2)


# =============================================================================
# TRAINING LOOP
# =============================================================================


class TestTrainer:
    """Adam training, history and stopping"""

    def test_history_columns(self, small_dataset, tiny_hyper):
        graph, labels = small_dataset
        result = train(graph, labels, tiny_hyper)
        assert list(result.history.columns) == training.HISTORY_COLUMNS
        assert result.history["epoch"].tolist() == [1, 2, 3, 4, 5]
        assert result.epochs_run == 5
        assert not result.stopped_early
        assert result.predictions.shape == (30,)
        assert len(result.states) == len(tiny_hyper.hidden_dims) + 1

    def test_deterministic(self, small_dataset, tiny_hyper):
        graph, labels = small_dataset
        first = train(graph, labels, tiny_hyper)
        second = train(graph, labels, tiny_hyper)
        pd.testing.assert_frame_equal(first.history, second.history)
        np.testing.assert_array_equal(first.predictions, second.predictions)

    def test_eta_zero_history(self, small_dataset, tiny_hyper):
        graph, labels = small_dataset
        history = train(graph, labels, tiny_hyper.replace(eta=0.0)).history
        assert history["L"].tolist() == history["L_C"].tolist()

    def test_learns_labeled_nodes(self):
        """Default settings fit every labeled node of a 30-node, 4-class graph while the loss falls"""
        graph, labels = generate_synthetic_graph(SyntheticSpec(n=30, c=4, seed=0))
        labels = split_labels(labels, 0.1, seed=0)
        result = train(graph, labels, Hyperparameters(seed=0))
        ids = labels.labeled_ids
        assert result.epochs_run <= 100
        assert np.all(result.predictions[ids] == labels.labels[ids])
        losses = result.history["L"]
        assert losses.tail(10).median() < losses.head(10).median()

    def test_early_stop(self, small_dataset, tiny_hyper):
        graph, labels = small_dataset
        result = train(graph, labels, tiny_hyper.replace(learning_rate=1e-12, eta=0.0, epochs=50))
        assert result.stopped_early
        assert result.epochs_run == 11
        assert len(result.history) == 11

    def test_divergence(self, small_dataset, tiny_hyper, monkeypatch):
        graph, labels = small_dataset
        monkeypatch.setattr(training, "cross_entropy_loss", lambda M, labels: M.sum() * float("nan"))
        with pytest.raises(TrainingDivergenceError) as exc_info:
            train(graph, labels, tiny_hyper)
        assert exc_info.value.epoch == 1

    def test_requires_labels(self, small_dataset, tiny_hyper):
        graph, labels = small_dataset
        with pytest.raises(InvalidInputError):
            Trainer(graph, labels.with_labeled([]), tiny_hyper)

    def test_size_mismatch(self, star_graph, small_dataset, tiny_hyper):
        _, labels = small_dataset
        with pytest.raises(DimensionMismatchError):
            Trainer(star_graph, labels, tiny_hyper)

    def test_history_file(self, tmp_path, small_dataset, tiny_hyper):
        graph, labels = small_dataset
        history = train(graph, labels, tiny_hyper).history
        write_history(tmp_path / "runs" / "loss_history_seed0.csv", history)
        loaded = read_history(tmp_path / "runs" / "loss_history_seed0.csv")
        pd.testing.assert_frame_equal(loaded, history, check_exact=False, rtol=1e-12)
