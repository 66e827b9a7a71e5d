#!/usr/bin/env python3
"""
EWGSL: Weighted graph data model

Undirected weighted graphs are stored as a symmetric scipy CSR matrix with
sorted column indices, which doubles as the per-node neighbor index.
Self-loop weights live beside the adjacency so that the original edge set
stays untouched.
"""

import dataclasses
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Dict, Iterable, Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp

from .constants import (
    DEFAULT_IMPACT_MODE,
    DEFAULT_SELF_LOOP_MODE,
    IMPACT_MODES,
    ISOLATED_SELF_LOOP_WEIGHT,
    SELF_LOOP_MODES,
)
from .exceptions import (
    GraphValidationError,
    ImpactFactorError,
    InvalidInputError,
    NoiseInjectionError,
)
from .utils import get_logger

logger = get_logger("graph")

EdgeInput = Union[np.ndarray, Iterable[Tuple[int, int, float]]]


@dataclass(frozen=True)
class WeightedGraph:
    """Validated undirected weighted graph

    Attributes:
        n: node count
        adjacency: symmetric n x n CSR matrix, zero diagonal, positive weights
        self_loops: per-node w_ii once assigned, else None
        self_loop_mode: mode used to derive ``self_loops``
    """

    n: int
    adjacency: sp.csr_matrix
    self_loops: Optional[np.ndarray] = None
    self_loop_mode: Optional[str] = None

    @classmethod
    def from_edges(cls, n: int, edges: EdgeInput) -> "WeightedGraph":
        return validate_graph(n, edges)

    @property
    def num_edges(self) -> int:
        """Undirected edge count |E|"""
        return int(self.adjacency.nnz // 2)

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.adjacency.indptr)

    @property
    def isolated(self) -> np.ndarray:
        """Ids of nodes without neighbors"""
        return np.flatnonzero(self.degrees == 0)

    def neighbors(self, i: int) -> Tuple[np.ndarray, np.ndarray]:
        """Sorted neighbor ids of ``i`` and the matching weights"""
        start, end = self.adjacency.indptr[i], self.adjacency.indptr[i + 1]
        return self.adjacency.indices[start:end], self.adjacency.data[start:end]

    def edges(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Undirected edges (u < v) as (u, v, w) arrays in canonical order"""
        coo = self.adjacency.tocoo()
        mask = coo.row < coo.col
        u, v, w = coo.row[mask], coo.col[mask], coo.data[mask]
        order = np.lexsort((v, u))
        return (
            u[order].astype(np.int64),
            v[order].astype(np.int64),
            w[order].astype(np.float64),
        )

    def weight(self, i: int, j: int) -> float:
        """w_ij, with w_ii taken from the assigned self-loops"""
        if i == j:
            return float(self.self_loops[i]) if self.self_loops is not None else 0.0
        return float(self.adjacency[i, j])

    def permute(self, perm: np.ndarray) -> "WeightedGraph":
        """Relabel node ``i`` as ``perm[i]``"""
        perm = np.asarray(perm, dtype=np.int64)
        inverse = np.empty_like(perm)
        inverse[perm] = np.arange(self.n)
        adjacency = self.adjacency[inverse][:, inverse].tocsr()
        adjacency.sort_indices()
        self_loops = None if self.self_loops is None else self.self_loops[inverse]
        return dataclasses.replace(self, adjacency=adjacency, self_loops=self_loops)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, WeightedGraph):
            return NotImplemented
        if self.n != other.n or self.num_edges != other.num_edges:
            return False
        mine, theirs = self.edges(), other.edges()
        return all(np.array_equal(a, b) for a, b in zip(mine, theirs))

    def __hash__(self) -> int:
        return hash((self.n, self.num_edges))

    def __repr__(self) -> str:
        return f"WeightedGraph(n={self.n}, edges={self.num_edges})"


@dataclass(frozen=True)
class ImpactFactors:
    """Per-directed-pair rho over j in N(i) + {i}, stored row-major

    ``row_ptr`` delimits the pairs of each source node; within a row the
    target ids are sorted and the self pair sits at its sorted position.
    """

    n: int
    row_ptr: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    rho: np.ndarray
    weight: np.ndarray
    self_mode: Optional[str]
    mode: str = DEFAULT_IMPACT_MODE

    @property
    def num_pairs(self) -> int:
        return int(self.rho.shape[0])

    def row(self, i: int) -> Tuple[np.ndarray, np.ndarray]:
        start, end = self.row_ptr[i], self.row_ptr[i + 1]
        return self.dst[start:end], self.rho[start:end]

    def as_dict(self) -> Dict[Tuple[int, int], float]:
        return {
            (int(i), int(j)): float(r) for i, j, r in zip(self.src, self.dst, self.rho)
        }


# =============================================================================
# VALIDATION
# =============================================================================


def _as_edge_array(edges: EdgeInput) -> np.ndarray:
    array = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges)
    if array.size == 0:
        return np.zeros((0, 3), dtype=np.float64)
    array = array.astype(np.float64)
    if array.ndim != 2 or array.shape[1] != 3:
        raise GraphValidationError(
            "edges must be (src, dst, weight) triples", array.shape
        )
    return array


def validate_graph(n: int, edges: EdgeInput) -> WeightedGraph:
    """
    Build a symmetric, deduplicated, positive-weight graph

    Directed or repeated input pairs collapse to one undirected edge carrying
    the maximum weight seen for that pair.

    Raises:
        GraphValidationError: empty graph, id out of range, self-pair,
            non-positive or non-finite weight
    """
    if not isinstance(n, (int, np.integer)) or n <= 0:
        raise GraphValidationError("empty graph: node count must be positive", n)

    array = _as_edge_array(edges)
    ids, weights = array[:, :2], array[:, 2]

    if np.any(ids != np.floor(ids)):
        bad = int(np.flatnonzero(np.any(ids != np.floor(ids), axis=1))[0])
        raise GraphValidationError("node id is not an integer", tuple(array[bad]))
    out_of_range = (ids < 0) | (ids >= n)
    if np.any(out_of_range):
        bad = int(np.flatnonzero(np.any(out_of_range, axis=1))[0])
        raise GraphValidationError("node id out of range", tuple(array[bad]))
    bad_weight = ~np.isfinite(weights) | (weights <= 0)
    if np.any(bad_weight):
        bad = int(np.flatnonzero(bad_weight)[0])
        raise GraphValidationError("non-positive weight", tuple(array[bad]))

    src = ids[:, 0].astype(np.int64)
    dst = ids[:, 1].astype(np.int64)
    if np.any(src == dst):
        bad = int(np.flatnonzero(src == dst)[0])
        raise GraphValidationError(
            "self-loop in input edges (self-loops are derived)", tuple(array[bad])
        )

    u, v = np.minimum(src, dst), np.maximum(src, dst)
    if u.size:
        order = np.lexsort((v, u))
        u, v, weights = u[order], v[order], weights[order]
        starts = np.flatnonzero(np.r_[True, (u[1:] != u[:-1]) | (v[1:] != v[:-1])])
        weights = np.maximum.reduceat(weights, starts)
        u, v = u[starts], v[starts]

    rows = np.concatenate([u, v])
    cols = np.concatenate([v, u])
    data = np.concatenate([weights, weights])
    adjacency = sp.csr_matrix((data, (rows, cols)), shape=(n, n), dtype=np.float64)
    adjacency.sort_indices()

    graph = WeightedGraph(n=int(n), adjacency=adjacency)
    isolated = graph.isolated
    if isolated.size:
        logger.warning(
            "graph has %d isolated node(s)",
            isolated.size,
            extra={"isolated": isolated[:20].tolist()},
        )
    return graph


# =============================================================================
# SELF-LOOPS AND IMPACT FACTORS
# =============================================================================


def assign_self_loop_weights(
    graph: WeightedGraph, mode: str = DEFAULT_SELF_LOOP_MODE
) -> WeightedGraph:
    """w_ii = max/min/avg of the node's neighbor weights; isolated nodes get 1"""
    if mode not in SELF_LOOP_MODES:
        raise InvalidInputError(f"self-loop mode must be one of {SELF_LOOP_MODES}", mode)

    adjacency = graph.adjacency
    degrees = graph.degrees
    self_loops = np.full(graph.n, ISOLATED_SELF_LOOP_WEIGHT, dtype=np.float64)
    has_neighbors = degrees > 0
    if np.any(has_neighbors):
        starts = adjacency.indptr[:-1][has_neighbors]
        if mode == "max":
            values = np.maximum.reduceat(adjacency.data, starts)
        elif mode == "min":
            values = np.minimum.reduceat(adjacency.data, starts)
        else:
            values = np.add.reduceat(adjacency.data, starts) / degrees[has_neighbors]
        self_loops[has_neighbors] = values

    return dataclasses.replace(graph, self_loops=self_loops, self_loop_mode=mode)


def build_impact_factors(
    graph: WeightedGraph, mode: str = DEFAULT_IMPACT_MODE
) -> ImpactFactors:
    """
    rho_ij = w_ij / sum_{k in N(i)} w_ik, the self term included as a pair

    The denominator never contains w_ii, so a full row (self included) can
    sum above one. ``mode="uniform"`` sets every rho to 1 (no edge weighting).

    Raises:
        ImpactFactorError: an isolated node without an assigned self-loop
    """
    if mode not in IMPACT_MODES:
        raise InvalidInputError(f"impact mode must be one of {IMPACT_MODES}", mode)

    n = graph.n
    degrees = graph.degrees
    if graph.self_loops is None:
        isolated = graph.isolated
        if isolated.size:
            raise ImpactFactorError(int(isolated[0]))
        full = graph.adjacency.copy()
    else:
        full = (graph.adjacency + sp.diags(graph.self_loops, format="csr")).tocsr()
    full.sort_indices()

    row_ptr = full.indptr.astype(np.int64)
    src = np.repeat(np.arange(n, dtype=np.int64), np.diff(row_ptr))
    dst = full.indices.astype(np.int64)

    if mode == "uniform":
        rho = np.ones(full.nnz, dtype=np.float64)
    else:
        denominators = np.asarray(graph.adjacency.sum(axis=1)).ravel()
        safe = np.where(degrees > 0, denominators, 1.0)
        rho = full.data / safe[src]
        rho[(degrees[src] == 0) & (src == dst)] = 1.0

    return ImpactFactors(
        n=n,
        row_ptr=row_ptr,
        src=src,
        dst=dst,
        rho=rho,
        weight=full.data.astype(np.float64),
        self_mode=graph.self_loop_mode,
        mode=mode,
    )


# =============================================================================
# NOISE INJECTION
# =============================================================================


def noise_edge_count(num_edges: int, fraction: float) -> int:
    """ceil(fraction * |E|) evaluated on the decimal value of ``fraction``"""
    return int(math.ceil(Fraction(repr(float(fraction))) * num_edges))


def inject_noise_edges(graph: WeightedGraph, fraction: float, seed: int) -> WeightedGraph:
    """
    Add ceil(fraction * |E|) random edges between unconnected node pairs

    Pairs are drawn uniformly without replacement from all non-edges; each new
    weight is drawn from the multiset of existing edge weights. Existing
    edges are never touched. Self-loops must be re-derived afterwards.

    Raises:
        InvalidInputError: fraction outside [0, 1]
        NoiseInjectionError: not enough non-edges
    """
    if not 0.0 <= fraction <= 1.0:
        raise InvalidInputError("noise fraction must be in [0, 1]", fraction)

    u, v, w = graph.edges()
    k = noise_edge_count(u.size, fraction)
    if k == 0:
        return graph

    n = graph.n
    total_pairs = n * (n - 1) // 2
    available = total_pairs - u.size
    if k > available:
        raise NoiseInjectionError(k, available)

    rng = np.random.default_rng(seed)
    cand_u, cand_v = np.triu_indices(n, k=1)
    existing = np.zeros(total_pairs, dtype=bool)
    # linear index of (a, b), a < b, inside the row-major upper triangle
    existing[u * n - u * (u + 1) // 2 + (v - u - 1)] = True
    candidates = np.flatnonzero(~existing)
    chosen = np.sort(rng.choice(candidates, size=k, replace=False))
    new_weights = rng.choice(w, size=k, replace=True)

    edges = np.column_stack(
        [
            np.concatenate([u, cand_u[chosen]]),
            np.concatenate([v, cand_v[chosen]]),
            np.concatenate([w, new_weights]),
        ]
    )
    noisy = validate_graph(n, edges)
    logger.info(
        "injected %d noise edges (fraction=%s, seed=%d)",
        k,
        fraction,
        seed,
        extra={"edges_before": int(u.size), "edges_after": noisy.num_edges},
    )
    return noisy


# =============================================================================
# SUMMARY
# =============================================================================


def graph_summary(graph: WeightedGraph, labels: Optional[Any] = None) -> Dict[str, Any]:
    """Node/edge/class counts, density and weight statistics"""
    _, _, w = graph.edges()
    n = graph.n
    summary: Dict[str, Any] = {
        "nodes": n,
        "edges": graph.num_edges,
        "density": (2.0 * graph.num_edges / (n * (n - 1))) if n > 1 else 0.0,
        "isolated": int(graph.isolated.size),
        "weight_min": float(w.min()) if w.size else 0.0,
        "weight_mean": float(w.mean()) if w.size else 0.0,
        "weight_max": float(w.max()) if w.size else 0.0,
    }
    if labels is not None:
        summary["classes"] = int(labels.c)
    return summary
