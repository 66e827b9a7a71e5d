#!/usr/bin/env python3
"""
EWGSL: Objectives and training loop

L = L_C + eta * L_I, where L_C is the cross-entropy over labeled nodes and
L_I an InfoNCE term whose positive and negative pairs are scaled by the mean
intra-class (lambda_p) and inter-class (lambda_n) attention of the last layer.
Predicted labels, lambdas and contrastive samples are refreshed every epoch
and held constant inside its gradient.
"""

import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import torch
import torch.nn.functional as F

from .constants import (
    ADAM_BETAS,
    ADAM_EPS,
    EARLY_STOP_PATIENCE,
    EARLY_STOP_TOL,
    HISTORY_COLUMNS,
    LOG_CLAMP,
)
from .datasets import LabelSet
from .exceptions import (
    DimensionMismatchError,
    InvalidInputError,
    NonFiniteGradientError,
    TrainingDivergenceError,
)
from .graph import WeightedGraph
from .model import (
    AttentionState,
    EWGSLModel,
    GraphTensors,
    Hyperparameters,
    Membership,
    describe_attention,
    forward,
)
from .utils import PathLike, get_logger

logger = get_logger("training")

Scalar = Union[float, torch.Tensor]


@dataclass
class LossBreakdown:
    L_C: float
    L_I: float
    lambda_p: float
    lambda_n: float
    L: float

    def to_dict(self) -> Dict[str, float]:
        return asdict(self)

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in self.to_dict().values())


@dataclass(frozen=True)
class ContrastiveSample:
    anchor: int
    positive: int
    negatives: Tuple[int, ...]


@dataclass(frozen=True)
class ContrastiveBatch:
    """Anchors, one positive each and an (anchors x m) negative table"""

    anchors: np.ndarray
    positives: np.ndarray
    negatives: np.ndarray

    def __len__(self) -> int:
        return int(self.anchors.size)

    def samples(self) -> List[ContrastiveSample]:
        return [
            ContrastiveSample(int(a), int(p), tuple(int(k) for k in negs))
            for a, p, negs in zip(self.anchors, self.positives, self.negatives)
        ]

    @classmethod
    def from_samples(cls, samples: Sequence[ContrastiveSample]) -> "ContrastiveBatch":
        if not samples:
            empty = np.zeros(0, dtype=np.int64)
            return cls(empty, empty, np.zeros((0, 1), dtype=np.int64))
        sizes = {len(s.negatives) for s in samples}
        if len(sizes) != 1 or 0 in sizes:
            raise InvalidInputError("every sample needs the same non-zero negative count", sizes)
        return cls(
            anchors=np.array([s.anchor for s in samples], dtype=np.int64),
            positives=np.array([s.positive for s in samples], dtype=np.int64),
            negatives=np.array([s.negatives for s in samples], dtype=np.int64),
        )


# =============================================================================
# LOSS COMPONENTS
# =============================================================================


def cross_entropy_loss(M: torch.Tensor, labels: LabelSet) -> torch.Tensor:
    """
    L_C = -sum_{i in V_L} log m_{i, y_i}, log argument clamped at 1e-12

    Raises:
        InvalidInputError: no labeled nodes
    """
    ids = labels.labeled_ids
    if ids.size == 0:
        raise InvalidInputError("cross-entropy needs at least one labeled node")
    if M.shape[0] != labels.n:
        raise DimensionMismatchError("cross_entropy_loss", labels.n, M.shape[0])
    index = torch.from_numpy(ids)
    target = torch.from_numpy(labels.labels[ids])
    picked = M[index, target]
    return -torch.log(torch.clamp(picked, min=LOG_CLAMP)).sum()


def compute_lambda(state: AttentionState, y_hat: np.ndarray) -> Tuple[float, float]:
    """
    Mean head-averaged e'_ij over retained off-diagonal pairs, split by
    whether i and j share a predicted class; an empty side yields 1.0
    """
    weights = state.head_mean().numpy()
    src = state.src.numpy()
    dst = state.dst.numpy()
    y_hat = np.asarray(y_hat)
    retained = (src != dst) & (weights > 0)
    same = y_hat[src] == y_hat[dst]

    def mean_or_one(mask: np.ndarray) -> float:
        return float(weights[mask].mean()) if mask.any() else 1.0

    return mean_or_one(retained & same), mean_or_one(retained & ~same)


def sample_contrastive(
    y_hat: np.ndarray, negatives_per_node: int, rng: np.random.Generator
) -> ContrastiveBatch:
    """
    One same-class positive and ``negatives_per_node`` distinct other-class
    negatives per anchor; anchors lacking either are skipped. When fewer
    other-class nodes exist than requested, negatives repeat.
    """
    y_hat = np.asarray(y_hat)
    anchors, positives, negatives = [], [], []
    for cls in np.unique(y_hat):
        members = np.flatnonzero(y_hat == cls)
        others = np.flatnonzero(y_hat != cls)
        if members.size < 2 or others.size == 0:
            continue
        # uniform over members without the anchor itself
        offset = rng.integers(0, members.size - 1, size=members.size)
        offset += offset >= np.arange(members.size)
        anchors.append(members)
        positives.append(members[offset])
        if others.size >= negatives_per_node:
            drawn = rng.permuted(np.tile(others, (members.size, 1)), axis=1)[:, :negatives_per_node]
        else:
            drawn = rng.choice(others, size=(members.size, negatives_per_node))
        negatives.append(drawn)

    if not anchors:
        return ContrastiveBatch.from_samples([])
    return ContrastiveBatch(
        anchors=np.concatenate(anchors),
        positives=np.concatenate(positives),
        negatives=np.concatenate(negatives),
    )


def info_nce_loss(
    H: torch.Tensor,
    samples: Union[ContrastiveBatch, Sequence[ContrastiveSample]],
    lambda_p: float,
    lambda_n: float,
    temperature: float,
    include_positive: bool = False,
) -> torch.Tensor:
    """
    Mean over anchors of
    -log[ lambda_p e^{sim(i,p)/t} / sum_k lambda_n e^{sim(i,k)/t} ]
    with cosine sim; ``include_positive`` adds the positive to the denominator
    """
    if temperature <= 0:
        raise InvalidInputError("temperature must be positive", temperature)
    batch = samples if isinstance(samples, ContrastiveBatch) else ContrastiveBatch.from_samples(samples)
    if len(batch) == 0:
        return torch.zeros((), dtype=H.dtype)

    Z = F.normalize(H, dim=1)
    anchors = Z[torch.from_numpy(batch.anchors)]
    positive = (anchors * Z[torch.from_numpy(batch.positives)]).sum(dim=1) / temperature
    negative = torch.einsum("ad,amd->am", anchors, Z[torch.from_numpy(batch.negatives)]) / temperature

    log_p, log_n = math.log(lambda_p), math.log(lambda_n)
    denominator = log_n + negative
    if include_positive:
        denominator = torch.cat([(log_p + positive).unsqueeze(1), denominator], dim=1)
    terms = -(log_p + positive - torch.logsumexp(denominator, dim=1))
    return terms.mean()


def total_loss(L_C: Scalar, L_I: Scalar, eta: float) -> Scalar:
    return L_C + eta * L_I


# =============================================================================
# OBJECTIVE AND GRADIENTS
# =============================================================================


def objective(
    model: EWGSLModel,
    graph: GraphTensors,
    labels: LabelSet,
    hyper: Hyperparameters,
    rng: np.random.Generator,
    batch: Optional[ContrastiveBatch] = None,
    lambdas: Optional[Tuple[float, float]] = None,
) -> Tuple[torch.Tensor, LossBreakdown, Membership, List[AttentionState]]:
    """
    One forward pass and the total loss

    ``batch`` and ``lambdas`` default to fresh values derived from this pass;
    passing them pins the contrastive term (used by finite differences).
    With eta = 0 the contrastive term is still reported but kept out of the graph.
    """
    membership, states = forward(model, graph)
    if lambdas is None:
        lambdas = compute_lambda(states[-1], membership.y_hat)
    if batch is None:
        batch = sample_contrastive(membership.y_hat, hyper.negatives_per_node, rng)

    l_c = cross_entropy_loss(membership.M, labels)
    if hyper.eta > 0:
        l_i = info_nce_loss(membership.H, batch, *lambdas, hyper.temperature, hyper.include_positive)
        loss = total_loss(l_c, l_i, hyper.eta)
    else:
        with torch.no_grad():
            l_i = info_nce_loss(membership.H, batch, *lambdas, hyper.temperature, hyper.include_positive)
        loss = l_c

    breakdown = LossBreakdown(
        L_C=float(l_c.detach()),
        L_I=float(l_i.detach()),
        lambda_p=lambdas[0],
        lambda_n=lambdas[1],
        L=float(loss.detach()),
    )
    return loss, breakdown, membership, states


def check_gradients(model: EWGSLModel) -> None:
    """Raises NonFiniteGradientError naming the first offending parameter"""
    for name, parameter in model.named_parameters():
        if parameter.grad is None:
            continue
        bad = ~torch.isfinite(parameter.grad)
        if bool(bad.any()):
            index = tuple(int(i) for i in torch.nonzero(bad)[0])
            raise NonFiniteGradientError(name, index)


def backward(
    model: EWGSLModel,
    graph: GraphTensors,
    labels: LabelSet,
    hyper: Hyperparameters,
    rng: Optional[np.random.Generator] = None,
    batch: Optional[ContrastiveBatch] = None,
    lambdas: Optional[Tuple[float, float]] = None,
) -> Tuple[Dict[str, torch.Tensor], LossBreakdown]:
    """Gradient of L with respect to every W, a and beta"""
    rng = np.random.default_rng(hyper.seed) if rng is None else rng
    model.zero_grad()
    loss, breakdown, _, _ = objective(model, graph, labels, hyper, rng, batch, lambdas)
    loss.backward()
    check_gradients(model)
    grads = {
        name: (p.grad.detach().clone() if p.grad is not None else torch.zeros_like(p))
        for name, p in model.named_parameters()
    }
    return grads, breakdown


# =============================================================================
# TRAINING LOOP
# =============================================================================


@dataclass
class TrainResult:
    model: EWGSLModel
    history: pd.DataFrame
    predictions: np.ndarray
    membership: Membership
    states: List[AttentionState]
    epochs_run: int
    stopped_early: bool


class Trainer:
    """Full-graph Adam training of one model"""

    def __init__(
        self,
        graph: WeightedGraph,
        labels: LabelSet,
        hyper: Hyperparameters,
        tensors: Optional[GraphTensors] = None,
    ):
        if graph.n != labels.n:
            raise DimensionMismatchError("Trainer", graph.n, labels.n)
        if labels.labeled_ids.size == 0:
            raise InvalidInputError("training needs labeled nodes")
        self.graph = graph
        self.labels = labels
        self.hyper = hyper
        self.tensors = tensors or GraphTensors.for_hyperparameters(graph, hyper)
        self.model = EWGSLModel(graph.n, labels.c, hyper)
        self.optimizer = torch.optim.Adam(
            self.model.parameters(),
            lr=hyper.learning_rate,
            betas=ADAM_BETAS,
            eps=ADAM_EPS,
        )
        self.rng = np.random.default_rng(hyper.seed)
        self.history: List[Dict[str, float]] = []

    def step(self, epoch: int) -> LossBreakdown:
        """Forward, refresh labels/lambdas/samples, backpropagate, update"""
        self.model.train()
        self.optimizer.zero_grad()
        loss, breakdown, membership, _ = objective(
            self.model, self.tensors, self.labels, self.hyper, self.rng
        )
        if not breakdown.is_finite():
            raise TrainingDivergenceError(epoch, breakdown.to_dict())
        loss.backward()
        check_gradients(self.model)
        self.optimizer.step()

        ids = self.labels.labeled_ids
        train_acc = float(np.mean(membership.y_hat[ids] == self.labels.labels[ids]))
        record = {"epoch": epoch, **breakdown.to_dict(), "train_acc": train_acc}
        self.history.append(record)
        logger.debug("epoch %d: L=%.6f", epoch, breakdown.L, extra=record)
        return breakdown

    def fit(self) -> TrainResult:
        previous: Optional[float] = None
        calm = 0
        stopped_early = False
        epoch = 0
        for epoch in range(1, self.hyper.epochs + 1):
            breakdown = self.step(epoch)
            if previous is not None and abs(breakdown.L - previous) < EARLY_STOP_TOL:
                calm += 1
            else:
                calm = 0
            previous = breakdown.L
            if calm >= EARLY_STOP_PATIENCE:
                stopped_early = True
                logger.info("loss stable for %d epochs, stopping at epoch %d", calm, epoch)
                break

        self.model.eval()
        with torch.no_grad():
            membership, states = forward(self.model, self.tensors)
        logger.info(
            "trained %d epochs, final L=%.6f",
            epoch,
            self.history[-1]["L"],
            extra=describe_attention(states[-1], membership.y_hat),
        )
        return TrainResult(
            model=self.model,
            history=pd.DataFrame(self.history, columns=HISTORY_COLUMNS),
            predictions=membership.y_hat,
            membership=membership,
            states=states,
            epochs_run=epoch,
            stopped_early=stopped_early,
        )


def train(
    graph: WeightedGraph,
    labels: LabelSet,
    hyper: Hyperparameters,
    tensors: Optional[GraphTensors] = None,
) -> TrainResult:
    """Train a fresh model; deterministic for a given ``hyper.seed``"""
    return Trainer(graph, labels, hyper, tensors).fit()


def write_history(path: PathLike, history: pd.DataFrame) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    history.to_csv(path, index=False, columns=HISTORY_COLUMNS)


def read_history(path: PathLike) -> pd.DataFrame:
    return pd.read_csv(path)
