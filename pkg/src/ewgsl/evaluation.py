#!/usr/bin/env python3
"""
EWGSL: Metrics, experiment runners and attention export
"""

import json
import platform
from dataclasses import asdict, dataclass
from itertools import product
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import torch
from sklearn.metrics import (
    accuracy_score,
    confusion_matrix,
    f1_score,
    precision_recall_fscore_support,
)

from .config import ExperimentConfig
from .constants import (
    ABLATION_VARIANTS,
    DEFAULT_EXPORT_NEIGHBORS,
    LIBRARY_NAME,
    MANIFEST_FILENAME,
    VERSION,
)
from .datasets import (
    LabelSet,
    build_ml100k_graph,
    generate_synthetic_graph,
    read_graph,
    read_labels,
    split_labels,
)
from .exceptions import (
    ConfigurationError,
    DimensionMismatchError,
    EvaluationError,
    InvalidInputError,
)
from .graph import WeightedGraph, graph_summary, inject_noise_edges
from .model import EWGSLModel, GraphTensors, Hyperparameters, forward
from .training import TrainResult, train
from .utils import PathLike, calculate_file_hash, export_to_key_value_format, get_logger, write_lines

logger = get_logger("evaluation")

METRIC_NAMES = ("acc", "micro_f1", "macro_f1", "weighted_f1")
ATTENTION_COLUMNS = ["node", "rank", "neighbor", "weight", "softmax_weight"]


@dataclass
class EvalReport:
    """Multi-class metrics over the unlabeled nodes"""

    acc: float
    micro_f1: float
    macro_f1: float
    weighted_f1: float
    per_class: List[Dict[str, float]]
    confusion: np.ndarray
    n_eval: int

    def metrics(self) -> Dict[str, float]:
        return {name: getattr(self, name) for name in METRIC_NAMES}

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["confusion"] = self.confusion.tolist()
        return data


def evaluate(y_hat: Sequence[int], labels: LabelSet) -> EvalReport:
    """
    Accuracy and micro/macro/weighted F1 on V_U only

    Raises:
        DimensionMismatchError: predictions do not cover every node
        EvaluationError: no unlabeled nodes
    """
    y_hat = np.asarray(y_hat, dtype=np.int64)
    if y_hat.shape != labels.labels.shape:
        raise DimensionMismatchError("evaluate", labels.labels.shape, y_hat.shape)
    ids = labels.unlabeled_ids
    if ids.size == 0:
        raise EvaluationError("no unlabeled nodes to evaluate")

    y_true, y_pred = labels.labels[ids], y_hat[ids]
    classes = list(range(labels.c))
    precision, recall, f1, support = precision_recall_fscore_support(
        y_true, y_pred, labels=classes, zero_division=0
    )
    per_class = [
        {
            "class": cls,
            "precision": float(precision[cls]),
            "recall": float(recall[cls]),
            "f1": float(f1[cls]),
            "support": int(support[cls]),
        }
        for cls in classes
    ]
    return EvalReport(
        acc=float(accuracy_score(y_true, y_pred)),
        micro_f1=float(f1_score(y_true, y_pred, average="micro", zero_division=0)),
        macro_f1=float(f1_score(y_true, y_pred, average="macro", zero_division=0)),
        weighted_f1=float(f1_score(y_true, y_pred, average="weighted", zero_division=0)),
        per_class=per_class,
        confusion=confusion_matrix(y_true, y_pred, labels=classes),
        n_eval=int(ids.size),
    )


def summarize(records: Iterable[Dict[str, Any]], by: Sequence[str] = ()) -> pd.DataFrame:
    """Mean and sample std of each metric, optionally grouped"""
    frame = pd.DataFrame(list(records))
    metrics = [m for m in METRIC_NAMES if m in frame.columns]
    if by:
        grouped = frame.groupby(list(by), sort=False)[metrics]
        summary = grouped.agg(["mean", "std"])
        summary.columns = [f"{m}_{stat}" for m, stat in summary.columns]
        summary = summary.reset_index()
    else:
        summary = pd.DataFrame(
            [{f"{m}_{stat}": getattr(frame[m], stat)() for m in metrics for stat in ("mean", "std")}]
        )
    std_columns = [c for c in summary.columns if c.endswith("_std")]
    summary[std_columns] = summary[std_columns].fillna(0.0)
    return summary


# =============================================================================
# EXPERIMENT RUNNERS
# =============================================================================


def prepare_dataset(config: ExperimentConfig) -> Tuple[WeightedGraph, LabelSet]:
    """Load or generate the configured dataset and apply configured noise"""
    if config.dataset == "synthetic":
        graph, labels = generate_synthetic_graph(config.synthetic_spec())
    elif config.dataset == "ml100k":
        if not (config.ratings_file and config.items_file):
            raise ConfigurationError("dataset", "ml100k needs ratings_file and items_file")
        graph, labels = build_ml100k_graph(config.ratings_file, config.items_file, config.ml100k_classes)
    else:
        if not (config.graph_file and config.labels_file):
            raise ConfigurationError("dataset", "files needs graph_file and labels_file")
        labels = read_labels(config.labels_file)
        graph = read_graph(config.graph_file, n=labels.n)

    if config.noise_fraction > 0:
        graph = inject_noise_edges(graph, config.noise_fraction, config.noise_seed)
    return graph, labels


def run_seed(
    graph: WeightedGraph,
    labels: LabelSet,
    hyper: Hyperparameters,
    labeled_fraction: float,
) -> Tuple[EvalReport, TrainResult, LabelSet]:
    """Split with ``hyper.seed``, train and evaluate once"""
    split = split_labels(labels, labeled_fraction, hyper.seed)
    result = train(graph, split, hyper)
    return evaluate(result.predictions, split), result, split


def run_seeds(
    graph: WeightedGraph, labels: LabelSet, config: ExperimentConfig, **changes: Any
) -> List[Dict[str, Any]]:
    records = []
    for seed in config.seeds:
        hyper = config.hyperparameters(seed).replace(**changes)
        report, result, _ = run_seed(graph, labels, hyper, config.labeled_fraction)
        records.append({"seed": seed, "epochs_run": result.epochs_run, **report.metrics()})
    return records


def run_ablation(
    config: ExperimentConfig,
    graph: Optional[WeightedGraph] = None,
    labels: Optional[LabelSet] = None,
) -> pd.DataFrame:
    """
    Train the four variants on identical seeds and splits

    - full: weighted rho + entmax
    - weights-only: weighted rho + softmax
    - sparsity-only: uniform rho + entmax
    - vanilla: uniform rho + softmax
    """
    if graph is None or labels is None:
        graph, labels = prepare_dataset(config)
    rows = []
    for variant, (impact_mode, use_entmax) in ABLATION_VARIANTS.items():
        alpha = config.alpha if use_entmax else 1.0
        for record in run_seeds(graph, labels, config, alpha=alpha, impact_mode=impact_mode):
            rows.append({"variant": variant, "alpha": alpha, "impact_mode": impact_mode, **record})
        logger.info("ablation variant %s done", variant)
    return pd.DataFrame(rows)


def run_sweep(
    config: ExperimentConfig,
    graph: Optional[WeightedGraph] = None,
    labels: Optional[LabelSet] = None,
) -> pd.DataFrame:
    """Grid over alpha, heads, eta and self-loop mode; one row per grid point"""
    if graph is None or labels is None:
        graph, labels = prepare_dataset(config)
    rows = []
    grid = product(
        config.sweep_alphas, config.sweep_heads, config.sweep_etas, config.sweep_self_loop_modes
    )
    for alpha, heads, eta, mode in grid:
        point = {"alpha": alpha, "heads": heads, "eta": eta, "self_loop_mode": mode}
        records = run_seeds(graph, labels, config, **point)
        summary = summarize(records).iloc[0].to_dict()
        rows.append({**point, **summary})
        logger.info("sweep point %s: acc=%.4f", point, summary["acc_mean"])
    return pd.DataFrame(rows)


def run_noise_levels(
    config: ExperimentConfig,
    graph: Optional[WeightedGraph] = None,
    labels: Optional[LabelSet] = None,
) -> pd.DataFrame:
    """Train the full model at every configured noise level of the same base graph"""
    if graph is None or labels is None:
        graph, labels = prepare_dataset(config.replace(noise_fraction=0.0))
    rows = []
    for level in config.noise_levels:
        noisy = inject_noise_edges(graph, level, config.noise_seed)
        summary = summarize(run_seeds(noisy, labels, config)).iloc[0].to_dict()
        rows.append({"noise": level, "edges": noisy.num_edges, **summary})
    return pd.DataFrame(rows)


# =============================================================================
# ATTENTION EXPORT
# =============================================================================


def final_attention(
    model: EWGSLModel, tensors: GraphTensors, alpha: Optional[float] = None
) -> np.ndarray:
    """Head-averaged last-layer e' per directed pair"""
    with torch.no_grad():
        _, states = forward(model, tensors, alpha)
    return states[-1].head_mean().numpy()


def export_attention(
    model: EWGSLModel,
    tensors: GraphTensors,
    node_ids: Sequence[int],
    k_neighbors: int = DEFAULT_EXPORT_NEIGHBORS,
    path: Optional[PathLike] = None,
    reference: Optional[EWGSLModel] = None,
) -> Tuple[np.ndarray, pd.DataFrame]:
    """
    Top-k neighbors (self excluded) of each node by e', with softmax weights

    Neighbors are ranked by e' desc, then edge weight desc, then id. Rows with
    fewer than k neighbors are padded with neighbor -1 and zero weights. The
    softmax column comes from ``reference`` or, if absent, the same
    parameters run with alpha = 1.

    Returns:
        (len(node_ids) x k matrix of e', long-format frame)

    Raises:
        InvalidInputError: unknown node id or k < 1
    """
    if k_neighbors < 1:
        raise InvalidInputError("k_neighbors must be at least 1", k_neighbors)
    for node in node_ids:
        if not 0 <= int(node) < tensors.n:
            raise InvalidInputError("unknown node id", node)

    sparse = final_attention(model, tensors)
    if reference is not None:
        dense = final_attention(reference, tensors)
    else:
        dense = final_attention(model, tensors, 1.0)

    src = tensors.src.numpy()
    dst = tensors.dst.numpy()
    weight = tensors.weight.numpy()
    matrix = np.zeros((len(node_ids), k_neighbors))
    rows = []
    for r, node in enumerate(int(n) for n in node_ids):
        pairs = np.flatnonzero((src == node) & (dst != node))
        order = np.lexsort((dst[pairs], -weight[pairs], -sparse[pairs]))[:k_neighbors]
        chosen = pairs[order]
        matrix[r, : chosen.size] = sparse[chosen]
        for rank in range(k_neighbors):
            if rank < chosen.size:
                pair = chosen[rank]
                rows.append([node, rank + 1, int(dst[pair]), float(sparse[pair]), float(dense[pair])])
            else:
                rows.append([node, rank + 1, -1, 0.0, 0.0])

    frame = pd.DataFrame(rows, columns=ATTENTION_COLUMNS)
    if path is not None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False)
    return matrix, frame


# =============================================================================
# OUTPUT FILES
# =============================================================================


def _to_builtin(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"not JSON serializable: {type(value).__name__}")


def append_jsonl(path: PathLike, records: Iterable[Dict[str, Any]]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a", encoding="utf-8", newline="\n") as f:
        for record in records:
            f.write(json.dumps(record, sort_keys=True, default=_to_builtin))
            f.write("\n")


def read_jsonl(path: PathLike) -> List[Dict[str, Any]]:
    with open(path, "r", encoding="utf-8") as f:
        return [json.loads(line) for line in f if line.strip()]


def _seed_text(seed: Union[int, Sequence[int]]) -> str:
    if isinstance(seed, (int, np.integer)):
        return str(int(seed))
    return ",".join(str(int(s)) for s in seed)


def write_manifest(
    out_dir: PathLike,
    config: ExperimentConfig,
    seed: Optional[Union[int, Sequence[int]]] = None,
    extra: Optional[Dict[str, Any]] = None,
    inputs: Sequence[PathLike] = (),
) -> Path:
    """
    key=value manifest: config hash and text, seeds, versions, extras

    ``seed`` defaults to every configured seed. Each existing file in
    ``inputs`` is recorded as ``input.<name>=<sha256>``.
    """
    import numpy
    import scipy
    import sklearn

    data: Dict[str, Any] = {
        "config_hash": config.config_hash(),
        "seed": _seed_text(config.seeds if seed is None else seed),
        "package": f"{LIBRARY_NAME} {VERSION}",
        "python": platform.python_version(),
        "numpy": numpy.__version__,
        "scipy": scipy.__version__,
        "torch": torch.__version__,
        "pandas": pd.__version__,
        "sklearn": sklearn.__version__,
    }
    for key, value in config.to_dict().items():
        data[f"config.{key}"] = value
    for key, value in (extra or {}).items():
        data[key] = value
    for input_path in inputs:
        source = Path(input_path)
        if source.is_file():
            data[f"input.{source.name}"] = calculate_file_hash(source)

    path = Path(out_dir) / MANIFEST_FILENAME
    write_lines(path, export_to_key_value_format(data).splitlines())
    return path


def dataset_summary(graph: WeightedGraph, labels: LabelSet) -> Dict[str, Any]:
    return {f"dataset.{k}": v for k, v in graph_summary(graph, labels).items()}
