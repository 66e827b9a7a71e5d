#!/usr/bin/env python3
"""
Shared fixtures for the EWGSL test suite
"""

from pathlib import Path
from typing import Callable, Dict, List, Tuple

import numpy as np
import pytest
import torch

from ewgsl import (
    GraphTensors,
    Hyperparameters,
    LabelSet,
    SyntheticSpec,
    WeightedGraph,
    generate_synthetic_graph,
    split_labels,
    validate_graph,
)
from ewgsl.constants import ML100K_GENRES

# =============================================================================
# GRAPHS
# =============================================================================


@pytest.fixture
def star_graph() -> WeightedGraph:
    """Node 0 linked to 1, 2, 3 with weights 2, 3, 5; extra edge 1-2"""
    return validate_graph(4, [(0, 1, 2.0), (0, 2, 3.0), (0, 3, 5.0), (1, 2, 1.0)])


@pytest.fixture
def graph_with_isolated() -> WeightedGraph:
    """Nodes 0-1 connected, node 2 isolated"""
    return validate_graph(3, [(0, 1, 4.0)])


@pytest.fixture
def make_random_graph() -> Callable[..., WeightedGraph]:
    """Factory for seeded Erdos-Renyi graphs with weights in [0.5, 5]"""

    def build(n: int, p: float = 0.4, seed: int = 0) -> WeightedGraph:
        rng = np.random.default_rng(seed)
        u, v = np.triu_indices(n, k=1)
        keep = rng.random(u.size) < p
        weights = rng.uniform(0.5, 5.0, size=int(keep.sum()))
        return validate_graph(n, np.column_stack([u[keep], v[keep], weights]))

    return build


@pytest.fixture
def small_dataset() -> Tuple[WeightedGraph, LabelSet]:
    """30-node, 3-class planted partition with 30% labeled"""
    spec = SyntheticSpec(n=30, c=3, intra_p=0.5, inter_p=0.05, seed=1)
    graph, labels = generate_synthetic_graph(spec)
    return graph, split_labels(labels, 0.3, seed=0)


@pytest.fixture
def small_tensors(small_dataset) -> GraphTensors:
    graph, _ = small_dataset
    return GraphTensors.from_graph(graph, "max", "weighted")


# =============================================================================
# MODELS
# =============================================================================


@pytest.fixture
def tiny_hyper() -> Hyperparameters:
    """Small enough for a few epochs in well under a second"""
    return Hyperparameters(
        alpha=1.5,
        heads=2,
        eta=0.1,
        epochs=5,
        hidden_dims=(4,),
        negatives_per_node=3,
        attention_gain=1.0,
        seed=0,
    )


@pytest.fixture
def torch_generator() -> torch.Generator:
    return torch.Generator().manual_seed(0)


# =============================================================================
# MOVIELENS FILES
# =============================================================================


def _item_line(movie: int, genres: List[int]) -> str:
    flags = ["1" if g in genres else "0" for g in range(len(ML100K_GENRES))]
    return "|".join([str(movie), f"Movie {movie} (1995)", "01-Jan-1995", "", "http://x"] + flags)


@pytest.fixture
def ml100k_files(tmp_path: Path) -> Dict[str, Path]:
    """
    Five movies, four users

    - user 1 rates 1, 2, 3 at t = 1, 2, 3 -> (1,2), (2,3)
    - user 2 rates 3 then 2 -> (2,3) again
    - user 3 rates only 4 -> nothing
    - user 4 rates 1 and 4 at the same time -> (1,4) by item order
    - movie 5 is never rated
    """
    ratings = tmp_path / "u.data"
    ratings.write_text(
        "\n".join(
            [
                "1\t1\t5\t1",
                "1\t2\t4\t2",
                "1\t3\t3\t3",
                "2\t2\t4\t5",
                "2\t3\t2\t4",
                "3\t4\t5\t7",
                "4\t4\t3\t10",
                "4\t1\t1\t10",
            ]
        )
        + "\n"
    )
    genre = {name: i for i, name in enumerate(ML100K_GENRES)}
    items = tmp_path / "u.item"
    items.write_text(
        "\n".join(
            [
                _item_line(1, [genre["Action"], genre["Comedy"]]),
                _item_line(2, [genre["Comedy"]]),
                _item_line(3, [genre["Drama"]]),
                _item_line(4, []),
                _item_line(5, [genre["Comedy"]]),
            ]
        )
        + "\n",
        encoding="latin-1",
    )
    return {"ratings": ratings, "items": items, "dir": tmp_path}


@pytest.fixture
def item_line() -> Callable[[int, List[int]], str]:
    return _item_line
