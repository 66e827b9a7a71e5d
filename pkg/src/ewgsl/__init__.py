#!/usr/bin/env python3
"""
EWGSL: Edge weight-aware graph structure learning

Node classification on noisy weighted graphs. Edge weights scale attention
scores, alpha-entmax prunes weak neighbors, and training combines
cross-entropy with an attention-weighted contrastive term.

Usage:
    from ewgsl import (
        Hyperparameters, SyntheticSpec, evaluate, generate_synthetic_graph, split_labels, train,
    )

    graph, labels = generate_synthetic_graph(SyntheticSpec(n=200, c=4, seed=0))
    split = split_labels(labels, 0.1, seed=0)
    result = train(graph, split, Hyperparameters(alpha=1.5, heads=6, eta=0.1))
    report = evaluate(result.predictions, split)
"""

from typing import Any, Dict

from .config import ConfigLoader, ExperimentConfig, apply_overrides, load_config, load_config_sync
from .constants import LIBRARY_NAME, VERSION, get_environment_type
from .datasets import (
    LabelSet,
    SyntheticSpec,
    build_ml100k_graph,
    generate_synthetic_graph,
    read_graph,
    read_labels,
    split_labels,
    write_graph,
    write_labels,
)
from .entmax import EntmaxResult, entmax, entmax_rows, entmax_sorted_oracle, entmax_vjp
from .evaluation import (
    EvalReport,
    evaluate,
    export_attention,
    run_ablation,
    run_noise_levels,
    run_sweep,
    write_manifest,
)
from .exceptions import (
    CheckpointError,
    ConfigurationError,
    DatasetError,
    DimensionMismatchError,
    EntmaxError,
    EvaluationError,
    EWGSLError,
    FileParsingError,
    GraphError,
    GraphValidationError,
    ImpactFactorError,
    InvalidInputError,
    NoiseInjectionError,
    NonFiniteGradientError,
    NumericalError,
    TrainingDivergenceError,
)
from .graph import (
    ImpactFactors,
    WeightedGraph,
    assign_self_loop_weights,
    build_impact_factors,
    graph_summary,
    inject_noise_edges,
    validate_graph,
)
from .model import (
    AttentionState,
    EWGSLModel,
    GraphTensors,
    Hyperparameters,
    Membership,
    attention_scores,
    describe_attention,
    forward,
    infer_labels,
    layer_forward,
    load_checkpoint,
    save_checkpoint,
    sparsify_attention,
)
from .training import (
    ContrastiveSample,
    LossBreakdown,
    Trainer,
    backward,
    compute_lambda,
    cross_entropy_loss,
    info_nce_loss,
    sample_contrastive,
    total_loss,
    train,
)

__version__ = VERSION
__author__ = "EWGSL Team"
__license__ = "MIT"
__description__ = "Edge weight-aware graph structure learning"


def get_info() -> Dict[str, Any]:
    """Package and runtime information"""
    import numpy
    import torch

    return {
        "name": LIBRARY_NAME,
        "version": __version__,
        "environment_type": get_environment_type(),
        "numpy": numpy.__version__,
        "torch": torch.__version__,
        "dtype": "float64",
    }


__all__ = [
    # Graph
    "WeightedGraph",
    "ImpactFactors",
    "validate_graph",
    "assign_self_loop_weights",
    "build_impact_factors",
    "inject_noise_edges",
    "graph_summary",
    # Datasets
    "LabelSet",
    "SyntheticSpec",
    "build_ml100k_graph",
    "generate_synthetic_graph",
    "split_labels",
    "read_graph",
    "write_graph",
    "read_labels",
    "write_labels",
    # Entmax
    "EntmaxResult",
    "entmax",
    "entmax_sorted_oracle",
    "entmax_vjp",
    "entmax_rows",
    # Model
    "Hyperparameters",
    "GraphTensors",
    "AttentionState",
    "Membership",
    "EWGSLModel",
    "attention_scores",
    "sparsify_attention",
    "layer_forward",
    "forward",
    "infer_labels",
    "describe_attention",
    "save_checkpoint",
    "load_checkpoint",
    # Training
    "LossBreakdown",
    "ContrastiveSample",
    "cross_entropy_loss",
    "compute_lambda",
    "sample_contrastive",
    "info_nce_loss",
    "total_loss",
    "backward",
    "Trainer",
    "train",
    # Evaluation
    "EvalReport",
    "evaluate",
    "run_ablation",
    "run_sweep",
    "run_noise_levels",
    "export_attention",
    "write_manifest",
    # Config
    "ExperimentConfig",
    "ConfigLoader",
    "apply_overrides",
    "load_config",
    "load_config_sync",
    # Exceptions
    "EWGSLError",
    "InvalidInputError",
    "GraphError",
    "GraphValidationError",
    "ImpactFactorError",
    "NoiseInjectionError",
    "FileParsingError",
    "DatasetError",
    "CheckpointError",
    "NumericalError",
    "EntmaxError",
    "DimensionMismatchError",
    "NonFiniteGradientError",
    "TrainingDivergenceError",
    "EvaluationError",
    "ConfigurationError",
    # Info
    "get_info",
    "__version__",
]
