#!/usr/bin/env python3
"""
EWGSL: Command-line interface

    ewgsl make-synthetic --out runs/sbm --seed 0
    ewgsl inject-noise --out runs/sbm --fraction 0.15
    ewgsl train --out runs/sbm --seed 0
    ewgsl evaluate --out runs/sbm --seed 0

Every command reads ``--config`` (KEY=VALUE) plus flag overrides, writes into
``--out`` and leaves a manifest behind. Exit codes: 0 ok, 1 runtime failure,
2 usage or configuration error.
"""

import argparse
import json
import shutil
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .benchmark import DEFAULT_DIMS, benchmark_solvers
from .config import ExperimentConfig, apply_overrides, load_config_sync
from .constants import (
    ABLATION_FILENAME,
    ATTENTION_FILENAME,
    BENCHMARK_FILENAME,
    CHECKPOINT_FILENAME_TEMPLATE,
    CLEAN_GRAPH_FILENAME,
    DEFAULT_EXPORT_NODES,
    EXIT_OK,
    EXIT_RUNTIME_ERROR,
    EXIT_USAGE_ERROR,
    GRAPH_FILENAME,
    HISTORY_FILENAME_TEMPLATE,
    LABELS_FILENAME,
    METRICS_FILENAME,
    ML100K_ES_REFERENCE,
    NOISE_STUDY_FILENAME,
    PREDICTIONS_FILENAME_TEMPLATE,
    REFERENCE_CHECKPOINT_FILENAME_TEMPLATE,
    SPLIT_FILENAME_TEMPLATE,
    SUMMARY_FILENAME,
    SWEEP_FILENAME,
    VERSION,
    get_environment_type,
    get_settings_for_environment,
)
from .datasets import (
    LabelSet,
    build_ml100k_graph,
    generate_synthetic_graph,
    read_graph,
    read_labels,
    read_split,
    split_labels,
    write_graph,
    write_labels,
    write_split,
)
from .evaluation import (
    append_jsonl,
    dataset_summary,
    evaluate,
    export_attention,
    prepare_dataset,
    run_ablation,
    run_noise_levels,
    run_sweep,
    summarize,
    write_manifest,
)
from .exceptions import ConfigurationError, EWGSLError, InvalidInputError, handle_ewgsl_error
from .graph import WeightedGraph, graph_summary, inject_noise_edges
from .model import EWGSLModel, GraphTensors, load_checkpoint, save_checkpoint
from .training import train, write_history
from .utils import configure_logging, get_logger, iter_tsv_rows, parse_field, parse_int_list

logger = get_logger("cli")

Handler = Callable[[argparse.Namespace, ExperimentConfig], None]


class UsageError(Exception):
    """Bad command-line input detected after parsing"""


# =============================================================================
# PARSER
# =============================================================================


def _common_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="KEY=VALUE experiment config file")
    parser.add_argument("--out", help="Output directory")
    parser.add_argument("--seed", type=int, help="Seed for this command")
    parser.add_argument("--alpha", type=float, help="Entmax alpha in [1, 2]")
    parser.add_argument("--heads", type=int, help="Attention heads per layer")
    parser.add_argument("--eta", type=float, help="Contrastive loss weight")
    parser.add_argument("--noise", "--fraction", dest="noise", type=float, help="Noise edge fraction")
    parser.add_argument("--labeled-fraction", type=float, help="Labeled fraction per class")
    parser.add_argument("--epochs", type=int, help="Training epochs")
    parser.add_argument("--verbose", "-v", action="store_true", help="Debug logging")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ewgsl",
        description="Edge weight-aware graph structure learning",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    commands = parser.add_subparsers(dest="command", metavar="COMMAND")
    commands.required = True

    specs: List[Tuple[str, str]] = [
        ("build-dataset", "Build ML-100k_ES from MovieLens-100K raw files"),
        ("make-synthetic", "Generate a weighted planted-partition dataset"),
        ("inject-noise", "Add random edges to the dataset graph"),
        ("split", "Write stratified labeled splits"),
        ("train", "Train one model per seed"),
        ("evaluate", "Score saved predictions on unlabeled nodes"),
        ("ablate", "Compare edge weighting and sparsity variants"),
        ("export-attention", "Write top-k attention weights as CSV"),
        ("sweep", "Grid over alpha, heads, eta and self-loop mode"),
        ("noise-study", "Train at several noise levels"),
        ("benchmark", "Time the entmax solvers"),
    ]
    for name, help_text in specs:
        sub = commands.add_parser(name, help=help_text, description=help_text)
        _common_arguments(sub)
        if name == "build-dataset":
            sub.add_argument("--ratings", help="MovieLens u.data")
            sub.add_argument("--items", help="MovieLens u.item")
        if name == "export-attention":
            sub.add_argument("--nodes", help="Comma-separated node ids")
            sub.add_argument("--k-neighbors", type=int, help="Neighbors per node")
        if name == "benchmark":
            sub.add_argument("--dims", help="Comma-separated row lengths")
            sub.add_argument("--rounds", type=int, default=5, help="Timing rounds")
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """Config file (or defaults) with flag overrides applied"""
    config = load_config_sync(args.config)
    overrides: Dict[str, Any] = {
        "alpha": args.alpha,
        "heads": args.heads,
        "eta": args.eta,
        "noise_fraction": args.noise,
        "labeled_fraction": args.labeled_fraction,
        "epochs": args.epochs,
        "out_dir": args.out,
    }
    if args.seed is not None:
        overrides["seeds"] = (args.seed,)
    if getattr(args, "ratings", None) or getattr(args, "items", None):
        overrides.update(dataset="ml100k", ratings_file=args.ratings, items_file=args.items)
    if getattr(args, "k_neighbors", None) is not None:
        overrides["export_neighbors"] = args.k_neighbors
    return apply_overrides(config, overrides)


# =============================================================================
# WORKSPACE
# =============================================================================


def _out(config: ExperimentConfig) -> Path:
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _seeded(template: str, seed: int) -> str:
    return template.format(seed=seed)


def save_dataset(out: Path, graph: WeightedGraph, labels: LabelSet) -> None:
    write_graph(out / GRAPH_FILENAME, graph)
    write_labels(out / LABELS_FILENAME, labels)


def load_dataset(config: ExperimentConfig) -> Tuple[WeightedGraph, LabelSet]:
    """Dataset files from the output directory, generated and saved if absent"""
    out = _out(config)
    graph_path, labels_path = out / GRAPH_FILENAME, out / LABELS_FILENAME
    if graph_path.exists() and labels_path.exists():
        labels = read_labels(labels_path)
        return read_graph(graph_path, n=labels.n), labels
    graph, labels = prepare_dataset(config)
    save_dataset(out, graph, labels)
    return graph, labels


def dataset_inputs(config: ExperimentConfig) -> List[Path]:
    """Dataset files a command reads, for the manifest"""
    out = Path(config.out_dir)
    paths = [out / GRAPH_FILENAME, out / CLEAN_GRAPH_FILENAME, out / LABELS_FILENAME]
    return paths + [Path(p) for p in (config.ratings_file, config.items_file) if p]


def seeded_inputs(config: ExperimentConfig, *templates: str) -> List[Path]:
    out = Path(config.out_dir)
    return [out / _seeded(t, seed) for seed in config.seeds for t in templates]


def load_split(config: ExperimentConfig, labels: LabelSet, seed: int) -> LabelSet:
    path = _out(config) / _seeded(SPLIT_FILENAME_TEMPLATE, seed)
    if path.exists():
        return read_split(path, labels)
    split = split_labels(labels, config.labeled_fraction, seed)
    write_split(path, split)
    return split


def read_predictions(path: Path) -> np.ndarray:
    pairs = {
        parse_field(fields[0], int, path, line): parse_field(fields[1], int, path, line)
        for line, fields in iter_tsv_rows(path, 2)
    }
    return np.array([pairs[i] for i in range(len(pairs))], dtype=np.int64)


def write_predictions(path: Path, predictions: np.ndarray, split: LabelSet) -> None:
    frame = pd.DataFrame(
        {
            "node": np.arange(split.n),
            "predicted": predictions,
            "label": split.labels,
            "labeled": split.labeled_mask.astype(int),
        }
    )
    frame.to_csv(path, sep="\t", index=False, header=False)


# =============================================================================
# COMMANDS
# =============================================================================


def cmd_build_dataset(args: argparse.Namespace, config: ExperimentConfig) -> None:
    if not (config.ratings_file and config.items_file):
        raise UsageError("build-dataset needs --ratings and --items (or RATINGS_FILE/ITEMS_FILE)")
    graph, labels = build_ml100k_graph(config.ratings_file, config.items_file, config.ml100k_classes)
    out = _out(config)
    save_dataset(out, graph, labels)
    summary = graph_summary(graph, labels)
    print(f"ML-100k_ES: {summary['nodes']} nodes, {summary['edges']} edges, {summary['classes']} classes")
    print(
        f"reference:  {ML100K_ES_REFERENCE['nodes']} nodes, "
        f"{ML100K_ES_REFERENCE['edges']} edges, {ML100K_ES_REFERENCE['classes']} classes"
    )
    write_manifest(
        out,
        config,
        extra=dataset_summary(graph, labels),
        inputs=[config.ratings_file, config.items_file],
    )


def cmd_make_synthetic(args: argparse.Namespace, config: ExperimentConfig) -> None:
    if args.seed is not None:
        config = config.replace(synthetic_seed=args.seed)
    graph, labels = generate_synthetic_graph(config.synthetic_spec())
    out = _out(config)
    save_dataset(out, graph, labels)
    (out / CLEAN_GRAPH_FILENAME).unlink(missing_ok=True)
    print(f"synthetic: {graph.n} nodes, {graph.num_edges} edges, {labels.c} classes")
    write_manifest(out, config, config.synthetic_seed, dataset_summary(graph, labels))


def cmd_inject_noise(args: argparse.Namespace, config: ExperimentConfig) -> None:
    """Noise always starts from the clean graph, saved on first use"""
    if args.seed is not None:
        config = config.replace(noise_seed=args.seed)
    out = _out(config)
    graph_path, clean_path = out / GRAPH_FILENAME, out / CLEAN_GRAPH_FILENAME
    if not graph_path.exists():
        raise FileNotFoundError(f"no dataset in {out}; run build-dataset or make-synthetic first")
    if not clean_path.exists():
        shutil.copyfile(graph_path, clean_path)
    labels = read_labels(out / LABELS_FILENAME)
    clean = read_graph(clean_path, n=labels.n)
    noisy = inject_noise_edges(clean, config.noise_fraction, config.noise_seed)
    write_graph(graph_path, noisy)
    added = noisy.num_edges - clean.num_edges
    print(f"noise: {clean.num_edges} -> {noisy.num_edges} edges (+{added})")
    write_manifest(
        out,
        config,
        config.noise_seed,
        {"noise.added_edges": added, **dataset_summary(noisy, labels)},
        inputs=[clean_path, out / LABELS_FILENAME],
    )


def cmd_split(args: argparse.Namespace, config: ExperimentConfig) -> None:
    graph, labels = load_dataset(config)
    out = _out(config)
    for seed in config.seeds:
        split = split_labels(labels, config.labeled_fraction, seed)
        write_split(out / _seeded(SPLIT_FILENAME_TEMPLATE, seed), split)
        print(f"seed {seed}: {split.labeled_ids.size} labeled, {split.unlabeled_ids.size} unlabeled")
    write_manifest(out, config, extra=dataset_summary(graph, labels), inputs=dataset_inputs(config))


def cmd_train(args: argparse.Namespace, config: ExperimentConfig) -> None:
    graph, labels = load_dataset(config)
    out = _out(config)
    for seed in config.seeds:
        split = load_split(config, labels, seed)
        result = train(graph, split, config.hyperparameters(seed))
        save_checkpoint(out / _seeded(CHECKPOINT_FILENAME_TEMPLATE, seed), result.model)
        write_history(out / _seeded(HISTORY_FILENAME_TEMPLATE, seed), result.history)
        write_predictions(out / _seeded(PREDICTIONS_FILENAME_TEMPLATE, seed), result.predictions, split)
        last = result.history.iloc[-1]
        print(f"seed {seed}: {result.epochs_run} epochs, L={last['L']:.6f}, train_acc={last['train_acc']:.4f}")
    inputs = dataset_inputs(config) + seeded_inputs(config, SPLIT_FILENAME_TEMPLATE)
    write_manifest(out, config, extra=dataset_summary(graph, labels), inputs=inputs)


def cmd_evaluate(args: argparse.Namespace, config: ExperimentConfig) -> None:
    out = _out(config)
    labels = read_labels(out / LABELS_FILENAME)
    records = []
    for seed in config.seeds:
        predictions_path = out / _seeded(PREDICTIONS_FILENAME_TEMPLATE, seed)
        if not predictions_path.exists():
            raise FileNotFoundError(f"no predictions for seed {seed}; run train first")
        split = read_split(out / _seeded(SPLIT_FILENAME_TEMPLATE, seed), labels)
        report = evaluate(read_predictions(predictions_path), split)
        records.append({"seed": seed, **report.to_dict()})
        print(f"seed {seed}: acc={report.acc:.4f} micro_f1={report.micro_f1:.4f} macro_f1={report.macro_f1:.4f}")

    metrics_path = out / METRICS_FILENAME
    metrics_path.unlink(missing_ok=True)
    append_jsonl(metrics_path, records)
    summary = summarize(records).iloc[0].to_dict()
    (out / SUMMARY_FILENAME).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(f"mean acc={summary['acc_mean']:.4f} (std {summary['acc_std']:.4f}) over {len(records)} seed(s)")
    inputs = [out / LABELS_FILENAME] + seeded_inputs(config, SPLIT_FILENAME_TEMPLATE, PREDICTIONS_FILENAME_TEMPLATE)
    write_manifest(out, config, extra={f"summary.{k}": v for k, v in summary.items()}, inputs=inputs)


def _write_table(out: Path, filename: str, table: pd.DataFrame) -> None:
    path = out / filename
    path.unlink(missing_ok=True)
    append_jsonl(path, table.to_dict(orient="records"))


def cmd_ablate(args: argparse.Namespace, config: ExperimentConfig) -> None:
    graph, labels = load_dataset(config)
    table = run_ablation(config, graph, labels)
    out = _out(config)
    _write_table(out, ABLATION_FILENAME, table)
    print(summarize(table.to_dict(orient="records"), by=["variant"]).to_string(index=False))
    write_manifest(out, config, extra=dataset_summary(graph, labels), inputs=dataset_inputs(config))


def load_reference(
    config: ExperimentConfig, model: EWGSLModel, graph: WeightedGraph, labels: LabelSet, seed: int
) -> EWGSLModel:
    """Softmax counterpart of ``model`` on the same split, trained once and cached"""
    path = _out(config) / _seeded(REFERENCE_CHECKPOINT_FILENAME_TEMPLATE, seed)
    hyper = model.hyper.replace(alpha=1.0)
    if path.exists():
        cached = load_checkpoint(path)
        if cached.hyper == hyper:
            return cached
    split = load_split(config, labels, seed)
    reference = train(graph, split, hyper).model
    save_checkpoint(path, reference)
    return reference


def cmd_export_attention(args: argparse.Namespace, config: ExperimentConfig) -> None:
    graph, labels = load_dataset(config)
    out = _out(config)
    seed = config.seeds[0]
    model = load_checkpoint(out / _seeded(CHECKPOINT_FILENAME_TEMPLATE, seed))
    if model.n_nodes != graph.n:
        raise ConfigurationError("export-attention", "checkpoint does not match the dataset")
    if args.nodes:
        nodes = parse_int_list(args.nodes)
    else:
        rng = np.random.default_rng(seed)
        nodes = sorted(rng.choice(graph.n, size=min(DEFAULT_EXPORT_NODES, graph.n), replace=False).tolist())
    reference = load_reference(config, model, graph, labels, seed)
    tensors = GraphTensors.for_hyperparameters(graph, model.hyper)
    matrix, _ = export_attention(
        model, tensors, nodes, config.export_neighbors, out / ATTENTION_FILENAME, reference=reference
    )
    print(f"attention for {matrix.shape[0]} nodes x {matrix.shape[1]} neighbors -> {out / ATTENTION_FILENAME}")
    checkpoints = [
        out / _seeded(CHECKPOINT_FILENAME_TEMPLATE, seed),
        out / _seeded(REFERENCE_CHECKPOINT_FILENAME_TEMPLATE, seed),
    ]
    write_manifest(
        out,
        config,
        seed,
        {"export.nodes": ",".join(str(n) for n in nodes)},
        inputs=dataset_inputs(config) + checkpoints,
    )


def cmd_sweep(args: argparse.Namespace, config: ExperimentConfig) -> None:
    graph, labels = load_dataset(config)
    table = run_sweep(config, graph, labels)
    out = _out(config)
    _write_table(out, SWEEP_FILENAME, table)
    print(table.to_string(index=False))
    write_manifest(out, config, extra=dataset_summary(graph, labels), inputs=dataset_inputs(config))


def cmd_noise_study(args: argparse.Namespace, config: ExperimentConfig) -> None:
    out = _out(config)
    clean_path = out / CLEAN_GRAPH_FILENAME
    if clean_path.exists():
        labels = read_labels(out / LABELS_FILENAME)
        graph = read_graph(clean_path, n=labels.n)
    else:
        graph, labels = load_dataset(config)
    table = run_noise_levels(config, graph, labels)
    _write_table(out, NOISE_STUDY_FILENAME, table)
    print(table.to_string(index=False))
    write_manifest(out, config, extra=dataset_summary(graph, labels), inputs=dataset_inputs(config))


def cmd_benchmark(args: argparse.Namespace, config: ExperimentConfig) -> None:
    dims = parse_int_list(args.dims) if args.dims else list(DEFAULT_DIMS)
    alpha = config.alpha if config.alpha in (1.5, 2.0) else 1.5
    records = benchmark_solvers(dims, rounds=args.rounds, alpha=alpha, seed=config.seeds[0])
    out = _out(config)
    _write_table(out, BENCHMARK_FILENAME, pd.DataFrame(records))
    for r in records:
        print(f"dim {r['dim']}: bisection {r['bisection_mean_s'] * 1e6:.1f}us, sorted {r['sorted_mean_s'] * 1e6:.1f}us")
    write_manifest(
        out,
        config,
        config.seeds[0],
        {"benchmark.dims": ",".join(str(d) for d in dims), "benchmark.alpha": alpha, "benchmark.rounds": args.rounds},
    )


COMMANDS: Dict[str, Handler] = {
    "build-dataset": cmd_build_dataset,
    "make-synthetic": cmd_make_synthetic,
    "inject-noise": cmd_inject_noise,
    "split": cmd_split,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "ablate": cmd_ablate,
    "export-attention": cmd_export_attention,
    "sweep": cmd_sweep,
    "noise-study": cmd_noise_study,
    "benchmark": cmd_benchmark,
}


# =============================================================================
# ENTRY POINTS
# =============================================================================


def cli_main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one command; returns the process exit code"""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE_ERROR

    settings = get_settings_for_environment()
    level = "DEBUG" if args.verbose else ("INFO" if settings["log_level"] == "DEBUG" else settings["log_level"])
    configure_logging(level)
    environment = get_environment_type()

    try:
        config = resolve_config(args)
        COMMANDS[args.command](args, config)
    except (UsageError, ConfigurationError, InvalidInputError) as e:
        message = handle_ewgsl_error(e, environment) if isinstance(e, EWGSLError) else str(e)
        print(f"error: {message}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_USAGE_ERROR
    except (EWGSLError, OSError) as e:
        print(f"error: {handle_ewgsl_error(e, environment) if isinstance(e, EWGSLError) else e}", file=sys.stderr)
        return EXIT_RUNTIME_ERROR
    return EXIT_OK


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
