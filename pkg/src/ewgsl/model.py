#!/usr/bin/env python3
"""
EWGSL: Edge-weight-aware sparse graph attention network

Each layer scores every directed pair (i, j), j in N(i) + {i}, as
rho_ij * LeakyReLU(a_k^T [W_k h_i || W_k h_j]), normalizes every row with
alpha-entmax, aggregates W_k h_j with the resulting weights and averages the
heads with learnable weights beta. Input features are one-hot node ids.
"""

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .constants import (
    CHECKPOINT_FORMAT_VERSION,
    DEFAULT_ALPHA,
    DEFAULT_ATTENTION_GAIN,
    DEFAULT_EPOCHS,
    DEFAULT_ETA,
    DEFAULT_HEADS,
    DEFAULT_HIDDEN_DIMS,
    DEFAULT_IMPACT_MODE,
    DEFAULT_LEARNING_RATE,
    DEFAULT_NEGATIVES_PER_NODE,
    DEFAULT_SEED,
    DEFAULT_SELF_LOOP_MODE,
    DEFAULT_TEMPERATURE,
    ENTMAX_MAX_ALPHA,
    ENTMAX_MAX_ITER,
    ENTMAX_MIN_ALPHA,
    ENTMAX_TOL,
    IMPACT_MODES,
    LEAKY_RELU_SLOPE,
    SELF_LOOP_MODES,
)
from .entmax import entmax_rows
from .exceptions import CheckpointError, DimensionMismatchError, InvalidInputError
from .graph import WeightedGraph, assign_self_loop_weights, build_impact_factors
from .utils import PathLike, get_logger

logger = get_logger("model")

DTYPE = torch.float64
ACTIVATIONS = ("elu", "identity")


@dataclass(frozen=True)
class Hyperparameters:
    """Model and training settings"""

    alpha: float = DEFAULT_ALPHA
    heads: int = DEFAULT_HEADS
    eta: float = DEFAULT_ETA
    temperature: float = DEFAULT_TEMPERATURE
    learning_rate: float = DEFAULT_LEARNING_RATE
    epochs: int = DEFAULT_EPOCHS
    hidden_dims: Tuple[int, ...] = DEFAULT_HIDDEN_DIMS
    self_loop_mode: str = DEFAULT_SELF_LOOP_MODE
    impact_mode: str = DEFAULT_IMPACT_MODE
    negatives_per_node: int = DEFAULT_NEGATIVES_PER_NODE
    include_positive: bool = False
    attention_gain: float = DEFAULT_ATTENTION_GAIN
    seed: int = DEFAULT_SEED
    entmax_tol: float = ENTMAX_TOL
    entmax_max_iter: int = ENTMAX_MAX_ITER

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden_dims", tuple(int(d) for d in self.hidden_dims))
        if not ENTMAX_MIN_ALPHA <= self.alpha <= ENTMAX_MAX_ALPHA:
            raise InvalidInputError("alpha must be in [1, 2]", self.alpha)
        if self.heads < 1:
            raise InvalidInputError("heads must be at least 1", self.heads)
        if self.eta < 0:
            raise InvalidInputError("eta must be non-negative", self.eta)
        if self.temperature <= 0:
            raise InvalidInputError("temperature must be positive", self.temperature)
        if self.learning_rate <= 0:
            raise InvalidInputError("learning_rate must be positive", self.learning_rate)
        if self.epochs < 1:
            raise InvalidInputError("epochs must be at least 1", self.epochs)
        if not self.hidden_dims or min(self.hidden_dims) < 1:
            raise InvalidInputError("hidden_dims must be non-empty and positive", self.hidden_dims)
        if self.self_loop_mode not in SELF_LOOP_MODES:
            raise InvalidInputError(f"self_loop_mode must be one of {SELF_LOOP_MODES}", self.self_loop_mode)
        if self.impact_mode not in IMPACT_MODES:
            raise InvalidInputError(f"impact_mode must be one of {IMPACT_MODES}", self.impact_mode)
        if self.negatives_per_node < 1:
            raise InvalidInputError("negatives_per_node must be at least 1", self.negatives_per_node)
        if self.attention_gain < 0:
            raise InvalidInputError("attention_gain must be non-negative", self.attention_gain)
        if self.entmax_tol <= 0 or self.entmax_max_iter < 1:
            raise InvalidInputError("entmax solver settings must be positive")

    def replace(self, **changes: Any) -> "Hyperparameters":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        data = dataclasses.asdict(self)
        data["hidden_dims"] = list(self.hidden_dims)
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Hyperparameters":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise InvalidInputError("unknown hyperparameters", sorted(unknown))
        return cls(**data)


@dataclass(frozen=True)
class GraphTensors:
    """Directed pairs (self included) of a graph with their rho and weights"""

    n: int
    src: torch.Tensor
    dst: torch.Tensor
    rho: torch.Tensor
    weight: torch.Tensor

    @classmethod
    def from_graph(
        cls,
        graph: WeightedGraph,
        self_loop_mode: str = DEFAULT_SELF_LOOP_MODE,
        impact_mode: str = DEFAULT_IMPACT_MODE,
    ) -> "GraphTensors":
        with_loops = assign_self_loop_weights(graph, self_loop_mode)
        impact = build_impact_factors(with_loops, impact_mode)
        return cls(
            n=graph.n,
            src=torch.from_numpy(impact.src),
            dst=torch.from_numpy(impact.dst),
            rho=torch.from_numpy(impact.rho).to(DTYPE),
            weight=torch.from_numpy(impact.weight).to(DTYPE),
        )

    @classmethod
    def for_hyperparameters(cls, graph: WeightedGraph, hyper: Hyperparameters) -> "GraphTensors":
        return cls.from_graph(graph, hyper.self_loop_mode, hyper.impact_mode)

    @property
    def num_pairs(self) -> int:
        return int(self.src.shape[0])

    @property
    def self_mask(self) -> torch.Tensor:
        return self.src == self.dst


@dataclass
class AttentionState:
    """Per-head raw and sparsified scores of one layer (detached)"""

    src: torch.Tensor
    dst: torch.Tensor
    raw: torch.Tensor
    sparse: torch.Tensor
    tau: torch.Tensor

    @property
    def heads(self) -> int:
        return int(self.sparse.shape[0])

    def head_mean(self) -> torch.Tensor:
        return self.sparse.mean(dim=0)

    def row_sums(self) -> torch.Tensor:
        n = self.tau.shape[1]
        out = torch.zeros(self.heads, n, dtype=self.sparse.dtype)
        return out.index_add_(1, self.src, self.sparse)


@dataclass
class Membership:
    """Row-stochastic class memberships M = softmax(H) and argmax labels"""

    M: torch.Tensor
    H: torch.Tensor
    y_hat: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))


# =============================================================================
# LAYER
# =============================================================================


class EWGSLLayer(nn.Module):
    """One multi-head edge-aware attention layer"""

    def __init__(self, in_dim: int, out_dim: int, heads: int, activation: str = "elu"):
        super().__init__()
        if activation not in ACTIVATIONS:
            raise InvalidInputError(f"activation must be one of {ACTIVATIONS}", activation)
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.heads = heads
        self.activation = activation
        self.weight = nn.Parameter(torch.empty(heads, out_dim, in_dim, dtype=DTYPE))
        self.attention = nn.Parameter(torch.empty(heads, 2 * out_dim, dtype=DTYPE))
        self.beta = nn.Parameter(torch.ones(heads, dtype=DTYPE))

    def reset_parameters(self, generator: torch.Generator, attention_gain: float = 1.0) -> None:
        """
        Glorot-uniform W, a drawn from the Glorot range scaled by attention_gain, beta back to ones

        A zero gain gives e = 0 on every pair, so entmax starts from uniform rows
        and prunes only once the scores have been trained.
        """
        with torch.no_grad():
            bound = math.sqrt(6.0 / (self.in_dim + self.out_dim))
            self.weight.uniform_(-bound, bound, generator=generator)
            bound = math.sqrt(6.0 / (2 * self.out_dim + 1))
            self.attention.uniform_(-bound, bound, generator=generator).mul_(attention_gain)
            self.beta.fill_(1.0)

    def forward(  # type: ignore[override]
        self,
        H: Optional[torch.Tensor],
        graph: GraphTensors,
        alpha: float,
        tol: float = ENTMAX_TOL,
        max_iter: int = ENTMAX_MAX_ITER,
    ) -> Tuple[torch.Tensor, AttentionState]:
        return layer_forward(self, H, graph, alpha, tol, max_iter)

    def extra_repr(self) -> str:
        return f"{self.in_dim} -> {self.out_dim}, heads={self.heads}, activation={self.activation}"


def project(layer: EWGSLLayer, H: Optional[torch.Tensor]) -> torch.Tensor:
    """W_k h_j for every head, shape (K, n, out); ``H=None`` means identity features"""
    if H is None:
        return layer.weight.transpose(1, 2)
    if H.shape[1] != layer.in_dim:
        raise DimensionMismatchError("project", layer.in_dim, H.shape[1])
    return torch.einsum("ni,koi->kno", H, layer.weight)


def attention_scores(
    layer: EWGSLLayer,
    H: Optional[torch.Tensor],
    graph: GraphTensors,
    head: Optional[int] = None,
    projected: Optional[torch.Tensor] = None,
) -> torch.Tensor:
    """
    e_ij = rho_ij * LeakyReLU(a_k^T [W_k h_i || W_k h_j]) over the graph's pairs

    Returns:
        (K, P) scores, or (P,) when ``head`` is given
    """
    Wh = project(layer, H) if projected is None else projected
    if Wh.shape[1] != graph.n:
        raise DimensionMismatchError("attention_scores", graph.n, Wh.shape[1])
    out = layer.out_dim
    left = torch.einsum("kno,ko->kn", Wh, layer.attention[:, :out])
    right = torch.einsum("kno,ko->kn", Wh, layer.attention[:, out:])
    raw = F.leaky_relu(left[:, graph.src] + right[:, graph.dst], LEAKY_RELU_SLOPE)
    scores = graph.rho * raw
    return scores if head is None else scores[head]


def sparsify_attention(
    scores: torch.Tensor,
    graph: GraphTensors,
    alpha: float,
    tol: float = ENTMAX_TOL,
    max_iter: int = ENTMAX_MAX_ITER,
) -> Tuple[torch.Tensor, torch.Tensor]:
    """Entmax every (head, node) row; returns e' (K, P) and tau (K, n)"""
    squeeze = scores.dim() == 1
    if squeeze:
        scores = scores.unsqueeze(0)
    heads = scores.shape[0]
    offsets = torch.arange(heads, dtype=graph.src.dtype).unsqueeze(1) * graph.n
    rows = (graph.src.unsqueeze(0) + offsets).reshape(-1)
    p, tau = entmax_rows(scores.reshape(-1), rows, heads * graph.n, alpha, tol, max_iter)
    p, tau = p.reshape(heads, -1), tau.reshape(heads, graph.n)
    return (p[0], tau[0]) if squeeze else (p, tau)


class PairAggregate(torch.autograd.Function):
    """out_i = sum_j values_ij X_j over COO pairs, differentiable in values and X"""

    @staticmethod
    def forward(  # type: ignore[override]
        ctx,
        values: torch.Tensor,
        projected: torch.Tensor,
        src: torch.Tensor,
        dst: torch.Tensor,
        n: int,
    ) -> torch.Tensor:
        matrix = torch.sparse_coo_tensor(torch.stack([src, dst]), values, (n, n))
        ctx.save_for_backward(values, projected, src, dst)
        ctx.n = n
        return torch.sparse.mm(matrix, projected)

    @staticmethod
    def backward(ctx, grad_out: torch.Tensor):  # type: ignore[override]
        values, projected, src, dst = ctx.saved_tensors
        grad_values = grad_projected = None
        if ctx.needs_input_grad[0]:
            grad_values = (grad_out[src] * projected[dst]).sum(dim=1)
        if ctx.needs_input_grad[1]:
            transposed = torch.sparse_coo_tensor(torch.stack([dst, src]), values, (ctx.n, ctx.n))
            grad_projected = torch.sparse.mm(transposed, grad_out)
        return grad_values, grad_projected, None, None, None


def aggregate(attention: torch.Tensor, projected: torch.Tensor, graph: GraphTensors) -> torch.Tensor:
    """sum_j e'_ij W_k h_j per head"""
    return torch.stack(
        [
            PairAggregate.apply(attention[k], projected[k], graph.src, graph.dst, graph.n)
            for k in range(attention.shape[0])
        ]
    )


def layer_forward(
    layer: EWGSLLayer,
    H: Optional[torch.Tensor],
    graph: GraphTensors,
    alpha: float,
    tol: float = ENTMAX_TOL,
    max_iter: int = ENTMAX_MAX_ITER,
) -> Tuple[torch.Tensor, AttentionState]:
    """h'_i = (1/K) sum_k beta_k sigma(sum_j e'_ij W_k h_j)"""
    projected = project(layer, H)
    scores = attention_scores(layer, H, graph, projected=projected)
    sparse, tau = sparsify_attention(scores, graph, alpha, tol, max_iter)
    heads = aggregate(sparse, projected, graph)
    if layer.activation == "elu":
        heads = F.elu(heads)
    combined = (layer.beta.view(-1, 1, 1) * heads).sum(dim=0) / layer.heads
    state = AttentionState(
        src=graph.src,
        dst=graph.dst,
        raw=scores.detach(),
        sparse=sparse.detach(),
        tau=tau.detach(),
    )
    return combined, state


# =============================================================================
# MODEL
# =============================================================================


class EWGSLModel(nn.Module):
    """Stacked layers n -> hidden_dims -> c"""

    def __init__(self, n_nodes: int, n_classes: int, hyper: Hyperparameters):
        super().__init__()
        if n_nodes < 1 or n_classes < 1:
            raise InvalidInputError("model needs nodes and classes", (n_nodes, n_classes))
        self.n_nodes = n_nodes
        self.n_classes = n_classes
        self.hyper = hyper
        dims = [n_nodes, *hyper.hidden_dims, n_classes]
        self.layers = nn.ModuleList(
            EWGSLLayer(
                dims[i],
                dims[i + 1],
                hyper.heads,
                activation="elu" if i < len(dims) - 2 else "identity",
            )
            for i in range(len(dims) - 1)
        )
        self.reset_parameters(hyper.seed)

    def reset_parameters(self, seed: int) -> None:
        generator = torch.Generator().manual_seed(int(seed))
        for layer in self.layers:
            layer.reset_parameters(generator, self.hyper.attention_gain)

    def forward(  # type: ignore[override]
        self, graph: GraphTensors, alpha: Optional[float] = None
    ) -> Tuple[torch.Tensor, List[AttentionState]]:
        """Final embeddings H (n x c) and every layer's attention"""
        if graph.n != self.n_nodes:
            raise DimensionMismatchError("forward", self.n_nodes, graph.n)
        alpha = self.hyper.alpha if alpha is None else alpha
        H: Optional[torch.Tensor] = None
        states = []
        for layer in self.layers:
            H, state = layer(H, graph, alpha, self.hyper.entmax_tol, self.hyper.entmax_max_iter)
            states.append(state)
        assert H is not None
        return H, states

    def named_gradients(self) -> Dict[str, Optional[torch.Tensor]]:
        return {name: p.grad for name, p in self.named_parameters()}


def forward(
    model: EWGSLModel, graph: GraphTensors, alpha: Optional[float] = None
) -> Tuple[Membership, List[AttentionState]]:
    """Membership M = row softmax of the final embeddings, plus attention"""
    H, states = model(graph, alpha)
    M = torch.softmax(H, dim=1)
    return Membership(M=M, H=H, y_hat=infer_labels(M)), states


def infer_labels(M: torch.Tensor) -> np.ndarray:
    """Row argmax; ties resolve to the lowest class index"""
    return np.argmax(M.detach().cpu().numpy(), axis=1).astype(np.int64)


# =============================================================================
# ANALYSIS
# =============================================================================


def describe_attention(state: AttentionState, labels: Optional[np.ndarray] = None) -> Dict[str, float]:
    """Pruning statistics over non-self pairs of one layer"""
    src = state.src.numpy()
    dst = state.dst.numpy()
    sparse = state.sparse.numpy()
    off_diagonal = src != dst
    kept = sparse[:, off_diagonal] > 0
    n = state.tau.shape[1]

    support = np.zeros((state.heads, n))
    for k in range(state.heads):
        support[k] = np.bincount(src, weights=(sparse[k] > 0).astype(float), minlength=n)

    stats: Dict[str, float] = {
        "pruned_fraction": float(1.0 - kept.mean()) if kept.size else 0.0,
        "mean_support": float(support.mean()),
    }
    if labels is not None:
        labels = np.asarray(labels)
        same = labels[src[off_diagonal]] == labels[dst[off_diagonal]]
        for name, mask in (("intra", same), ("inter", ~same)):
            chosen = kept[:, mask]
            stats[f"{name}_pruned_fraction"] = float(1.0 - chosen.mean()) if chosen.size else 0.0
    return stats


# =============================================================================
# CHECKPOINTS
# =============================================================================


def save_checkpoint(path: PathLike, model: EWGSLModel) -> None:
    """Write parameters and hyperparameters with a format version"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "hyperparameters": model.hyper.to_dict(),
        "n_nodes": model.n_nodes,
        "n_classes": model.n_classes,
        "state_dict": model.state_dict(),
    }
    try:
        torch.save(payload, path)
    except OSError as e:
        raise CheckpointError(str(path), str(e))


def load_checkpoint(path: PathLike) -> EWGSLModel:
    """
    Rebuild a model from ``save_checkpoint`` output

    Raises:
        CheckpointError: missing file, unreadable payload or unknown version
    """
    path = Path(path)
    if not path.exists():
        raise CheckpointError(str(path), "file not found")
    try:
        payload = torch.load(path, map_location="cpu")
    except Exception as e:
        raise CheckpointError(str(path), f"unreadable checkpoint: {e}")

    if not isinstance(payload, dict) or payload.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        version = payload.get("format_version") if isinstance(payload, dict) else None
        raise CheckpointError(str(path), f"unsupported format version {version}")

    try:
        hyper = Hyperparameters.from_dict(payload["hyperparameters"])
        model = EWGSLModel(payload["n_nodes"], payload["n_classes"], hyper)
        model.load_state_dict(payload["state_dict"])
    except (KeyError, RuntimeError, InvalidInputError) as e:
        raise CheckpointError(str(path), f"invalid contents: {e}")
    return model
