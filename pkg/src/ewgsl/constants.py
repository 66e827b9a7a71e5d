#!/usr/bin/env python3
"""
EWGSL: Configuration constants, numerical defaults and limits
"""

import os
from typing import Dict, List, Optional, Tuple

# =============================================================================
# GRAPH DEFAULTS
# =============================================================================

# Self-loop weight modes (max performs best in the reference experiments)
SELF_LOOP_MODES: Tuple[str, ...] = ("max", "min", "avg")
DEFAULT_SELF_LOOP_MODE = "max"

# Impact factor modes: "weighted" uses edge weights, "uniform" sets every rho to 1
IMPACT_MODES: Tuple[str, ...] = ("weighted", "uniform")
DEFAULT_IMPACT_MODE = "weighted"

# Isolated nodes attend only to themselves
ISOLATED_SELF_LOOP_WEIGHT = 1.0

# =============================================================================
# ENTMAX KERNEL
# =============================================================================

ENTMAX_TOL = 1e-10
ENTMAX_MAX_ITER = 100
ENTMAX_MIN_ALPHA = 1.0
ENTMAX_MAX_ALPHA = 2.0
SORTED_ORACLE_ALPHAS: Tuple[float, ...] = (1.5, 2.0)

# =============================================================================
# MODEL AND TRAINING DEFAULTS
# =============================================================================

DEFAULT_ALPHA = 1.5
DEFAULT_HEADS = 6
DEFAULT_ETA = 0.1
DEFAULT_TEMPERATURE = 0.5
DEFAULT_LEARNING_RATE = 0.005
DEFAULT_EPOCHS = 100
DEFAULT_HIDDEN_DIMS: Tuple[int, ...] = (256, 128)
DEFAULT_NEGATIVES_PER_NODE = 5
DEFAULT_SEED = 0

# Scale of the Glorot range for attention vectors; 0 starts every row uniform
DEFAULT_ATTENTION_GAIN = 0.0

LEAKY_RELU_SLOPE = 0.2
LOG_CLAMP = 1e-12

# Adam moments (lr is a hyperparameter)
ADAM_BETAS: Tuple[float, float] = (0.9, 0.999)
ADAM_EPS = 1e-8

# Early stopping: loss change below tolerance for this many consecutive epochs
EARLY_STOP_TOL = 1e-6
EARLY_STOP_PATIENCE = 10

# Allowed range of every sweep axis
ALPHA_RANGE: Tuple[float, float] = (ENTMAX_MIN_ALPHA, ENTMAX_MAX_ALPHA)
HEADS_RANGE: Tuple[int, int] = (1, 12)
ETA_RANGE: Tuple[float, float] = (0.0, 0.5)

# Default sweep grid (ablate one axis at a time by shortening the others)
SWEEP_ALPHAS: Tuple[float, ...] = (1.0, 1.25, 1.5, 1.75, 2.0)
SWEEP_HEADS: Tuple[int, ...] = (2, 4, 6, 8, 10, 12)
SWEEP_ETAS: Tuple[float, ...] = (0.0, 0.05, 0.1, 0.2, 0.5)
SWEEP_SELF_LOOP_MODES: Tuple[str, ...] = SELF_LOOP_MODES

# Ablation variants: name -> (impact mode, use configured alpha; else softmax)
ABLATION_VARIANTS: Dict[str, Tuple[str, bool]] = {
    "full": ("weighted", True),
    "weights-only": ("weighted", False),
    "sparsity-only": ("uniform", True),
    "vanilla": ("uniform", False),
}

# =============================================================================
# DATASETS
# =============================================================================

DATASET_KINDS: Tuple[str, ...] = ("synthetic", "ml100k", "files")
DEFAULT_SEEDS: Tuple[int, ...] = (0, 1, 2, 3, 4)

# Planted partition defaults
SYNTHETIC_NODES = 200
SYNTHETIC_CLASSES = 4
SYNTHETIC_INTRA_P = 0.2
SYNTHETIC_INTER_P = 0.02
SYNTHETIC_INTRA_WEIGHT_MEAN = 5.0
SYNTHETIC_INTER_WEIGHT_MEAN = 1.0

DEFAULT_LABELED_FRACTION = 0.1
DEFAULT_NOISE_LEVELS: Tuple[float, ...] = (0.0, 0.05, 0.10, 0.15)

# MovieLens-100K genre columns of u.item, in file order
ML100K_GENRES: List[str] = [
    "unknown",
    "Action",
    "Adventure",
    "Animation",
    "Children's",
    "Comedy",
    "Crime",
    "Documentary",
    "Drama",
    "Fantasy",
    "Film-Noir",
    "Horror",
    "Musical",
    "Mystery",
    "Romance",
    "Sci-Fi",
    "Thriller",
    "War",
    "Western",
]
ML100K_UNKNOWN_GENRE = 0
ML100K_DATA_SEPARATOR = "\t"
ML100K_ITEM_SEPARATOR = "|"
ML100K_ENCODING = "latin-1"

# Genre labels kept by the ML-100k builder, most common first
ML100K_CLASSES = 9

# Published ML-100k_ES statistics, compared against (not forced on) the builder
ML100K_ES_REFERENCE: Dict[str, int] = {"nodes": 1612, "edges": 58439, "classes": ML100K_CLASSES}

# =============================================================================
# FILES AND FORMATS
# =============================================================================

DEFAULT_ENCODING = "utf-8"
TSV_SEPARATOR = "\t"
GRAPH_FILENAME = "graph.tsv"
CLEAN_GRAPH_FILENAME = "graph_clean.tsv"
LABELS_FILENAME = "labels.tsv"
SPLIT_FILENAME_TEMPLATE = "split_seed{seed}.txt"
CHECKPOINT_FILENAME_TEMPLATE = "model_seed{seed}.pt"
REFERENCE_CHECKPOINT_FILENAME_TEMPLATE = "model_softmax_seed{seed}.pt"
HISTORY_FILENAME_TEMPLATE = "loss_history_seed{seed}.csv"
PREDICTIONS_FILENAME_TEMPLATE = "predictions_seed{seed}.tsv"
METRICS_FILENAME = "metrics.jsonl"
SUMMARY_FILENAME = "summary.json"
ABLATION_FILENAME = "ablation.jsonl"
SWEEP_FILENAME = "sweep.jsonl"
NOISE_STUDY_FILENAME = "noise_study.jsonl"
ATTENTION_FILENAME = "attention.csv"
MANIFEST_FILENAME = "manifest.txt"
BENCHMARK_FILENAME = "benchmark.jsonl"

HISTORY_COLUMNS: List[str] = [
    "epoch",
    "L",
    "L_C",
    "L_I",
    "lambda_p",
    "lambda_n",
    "train_acc",
]

CHECKPOINT_FORMAT_VERSION = 1
MAX_CONFIG_FILE_SIZE = 1024 * 1024  # 1MB
MAX_LINE_LENGTH = 4096

# Boolean spellings accepted in config files
TRUE_VALUES = {"true", "yes", "1", "on", "enable", "enabled", "y", "t"}
FALSE_VALUES = {"false", "no", "0", "off", "disable", "disabled", "n", "f"}

# =============================================================================
# CLI
# =============================================================================

EXIT_OK = 0
EXIT_RUNTIME_ERROR = 1
EXIT_USAGE_ERROR = 2

DEFAULT_EXPORT_NODES = 5
DEFAULT_EXPORT_NEIGHBORS = 10

# =============================================================================
# LOGGING
# =============================================================================

LOGGER_NAME = "ewgsl"
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

DEV_SETTINGS = {"log_level": "DEBUG", "detailed_errors": True}
PROD_SETTINGS = {"log_level": "ERROR", "detailed_errors": False}
TEST_SETTINGS = {"log_level": "INFO", "detailed_errors": True}

# =============================================================================
# ERROR CODES
# =============================================================================

ERROR_CODES = {
    "EW001": "General EWGSL error",
    "EW100": "Graph error",
    "EW101": "Graph validation failed",
    "EW102": "Impact factor undefined",
    "EW103": "Noise injection impossible",
    "EW200": "File parsing error",
    "EW201": "Dataset error",
    "EW202": "Checkpoint error",
    "EW300": "Numerical error",
    "EW301": "Entmax input rejected",
    "EW302": "Dimension mismatch",
    "EW303": "Non-finite gradient",
    "EW304": "Training diverged",
    "EW305": "Evaluation error",
    "EW400": "Configuration error",
    "EW401": "Invalid input",
}

# =============================================================================
# VERSION AND METADATA
# =============================================================================

VERSION = "1.0.0"
LIBRARY_NAME = "EWGSL-Python"


# =============================================================================
# UTILITY FUNCTIONS
# =============================================================================


def get_environment_type() -> str:
    """Detect current environment type"""
    env_type = os.getenv(
        "EWGSL_ENV", os.getenv("ENVIRONMENT", os.getenv("ENV", "development"))
    ).lower()

    if env_type in ("prod", "production"):
        return "production"
    elif env_type in ("test", "testing"):
        return "testing"
    else:
        return "development"


def get_settings_for_environment(env_type: Optional[str] = None) -> dict:
    """Settings of the given environment, the detected one by default"""
    env_type = env_type or get_environment_type()

    if env_type == "production":
        return PROD_SETTINGS.copy()
    elif env_type == "testing":
        return TEST_SETTINGS.copy()
    else:
        return DEV_SETTINGS.copy()
