#!/usr/bin/env python3
"""
EWGSL: Experiment configuration

Flat KEY=VALUE files (``#`` comments, optional quotes) validated against a
typed schema. Keys are case-insensitive; unknown keys are rejected.

    DATASET=synthetic
    ALPHA=1.5
    HEADS=6
    SEEDS=0,1,2,3,4
"""

import asyncio
import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Dict, Mapping, Optional, Tuple

import aiofiles

from .constants import (
    ALPHA_RANGE,
    DATASET_KINDS,
    DEFAULT_ALPHA,
    DEFAULT_ATTENTION_GAIN,
    DEFAULT_ENCODING,
    DEFAULT_EPOCHS,
    DEFAULT_ETA,
    DEFAULT_EXPORT_NEIGHBORS,
    DEFAULT_HEADS,
    DEFAULT_HIDDEN_DIMS,
    DEFAULT_IMPACT_MODE,
    DEFAULT_LABELED_FRACTION,
    DEFAULT_LEARNING_RATE,
    DEFAULT_NEGATIVES_PER_NODE,
    DEFAULT_NOISE_LEVELS,
    DEFAULT_SEEDS,
    DEFAULT_SELF_LOOP_MODE,
    DEFAULT_TEMPERATURE,
    ETA_RANGE,
    FALSE_VALUES,
    HEADS_RANGE,
    IMPACT_MODES,
    MAX_CONFIG_FILE_SIZE,
    ML100K_CLASSES,
    SELF_LOOP_MODES,
    SWEEP_ALPHAS,
    SWEEP_ETAS,
    SWEEP_HEADS,
    SWEEP_SELF_LOOP_MODES,
    SYNTHETIC_CLASSES,
    SYNTHETIC_INTER_P,
    SYNTHETIC_INTER_WEIGHT_MEAN,
    SYNTHETIC_INTRA_P,
    SYNTHETIC_INTRA_WEIGHT_MEAN,
    SYNTHETIC_NODES,
    TRUE_VALUES,
)
from .datasets import SyntheticSpec
from .exceptions import ConfigurationError, FileParsingError, InvalidInputError
from .model import Hyperparameters
from .utils import (
    PathLike,
    calculate_text_hash,
    export_to_key_value_format,
    get_logger,
    parse_float_list,
    parse_int_list,
    parse_key_value_content,
)

logger = get_logger("config")


def _parse_bool(value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in TRUE_VALUES:
        return True
    if lowered in FALSE_VALUES:
        return False
    raise ValueError(f"not a boolean: {value!r}")


def _parse_str_list(value: str) -> Tuple[str, ...]:
    return tuple(v.strip() for v in value.split(",") if v.strip())


CONVERTERS: Dict[str, Callable[[str], Any]] = {
    "int": int,
    "float": float,
    "bool": _parse_bool,
    "str": str,
    "int_list": lambda v: tuple(parse_int_list(v)),
    "float_list": lambda v: tuple(parse_float_list(v)),
    "str_list": _parse_str_list,
}


def _field(default: Any, kind: str, choices: Optional[Tuple[str, ...]] = None) -> Any:
    return dataclasses.field(default=default, metadata={"kind": kind, "choices": choices})


@dataclass(frozen=True)
class ExperimentConfig:
    """Dataset, hyperparameters, noise/split settings, seeds and output directory"""

    dataset: str = _field("synthetic", "str", DATASET_KINDS)
    ratings_file: str = _field("", "str")
    items_file: str = _field("", "str")
    ml100k_classes: int = _field(ML100K_CLASSES, "int")
    graph_file: str = _field("", "str")
    labels_file: str = _field("", "str")

    synthetic_nodes: int = _field(SYNTHETIC_NODES, "int")
    synthetic_classes: int = _field(SYNTHETIC_CLASSES, "int")
    synthetic_intra_p: float = _field(SYNTHETIC_INTRA_P, "float")
    synthetic_inter_p: float = _field(SYNTHETIC_INTER_P, "float")
    synthetic_intra_weight: float = _field(SYNTHETIC_INTRA_WEIGHT_MEAN, "float")
    synthetic_inter_weight: float = _field(SYNTHETIC_INTER_WEIGHT_MEAN, "float")
    synthetic_seed: int = _field(0, "int")

    alpha: float = _field(DEFAULT_ALPHA, "float")
    heads: int = _field(DEFAULT_HEADS, "int")
    eta: float = _field(DEFAULT_ETA, "float")
    temperature: float = _field(DEFAULT_TEMPERATURE, "float")
    learning_rate: float = _field(DEFAULT_LEARNING_RATE, "float")
    epochs: int = _field(DEFAULT_EPOCHS, "int")
    hidden_dims: Tuple[int, ...] = _field(DEFAULT_HIDDEN_DIMS, "int_list")
    self_loop_mode: str = _field(DEFAULT_SELF_LOOP_MODE, "str", SELF_LOOP_MODES)
    impact_mode: str = _field(DEFAULT_IMPACT_MODE, "str", IMPACT_MODES)
    negatives_per_node: int = _field(DEFAULT_NEGATIVES_PER_NODE, "int")
    include_positive: bool = _field(False, "bool")
    attention_gain: float = _field(DEFAULT_ATTENTION_GAIN, "float")

    noise_fraction: float = _field(0.0, "float")
    noise_seed: int = _field(0, "int")
    labeled_fraction: float = _field(DEFAULT_LABELED_FRACTION, "float")
    seeds: Tuple[int, ...] = _field(DEFAULT_SEEDS, "int_list")
    out_dir: str = _field("runs", "str")

    sweep_alphas: Tuple[float, ...] = _field(SWEEP_ALPHAS, "float_list")
    sweep_heads: Tuple[int, ...] = _field(SWEEP_HEADS, "int_list")
    sweep_etas: Tuple[float, ...] = _field(SWEEP_ETAS, "float_list")
    sweep_self_loop_modes: Tuple[str, ...] = _field(SWEEP_SELF_LOOP_MODES, "str_list")
    noise_levels: Tuple[float, ...] = _field(DEFAULT_NOISE_LEVELS, "float_list")
    export_neighbors: int = _field(DEFAULT_EXPORT_NEIGHBORS, "int")

    def __post_init__(self) -> None:
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            choices = f.metadata["choices"]
            if choices and value not in choices:
                raise ConfigurationError(f.name, f"must be one of {choices}, got {value!r}")
            if isinstance(value, list):
                object.__setattr__(self, f.name, tuple(value))

        if not 0.0 < self.labeled_fraction < 1.0:
            raise ConfigurationError("labeled_fraction", "must be in (0, 1)")
        if not 0.0 <= self.noise_fraction <= 1.0:
            raise ConfigurationError("noise_fraction", "must be in [0, 1]")
        if not self.seeds:
            raise ConfigurationError("seeds", "at least one seed is required")
        if any(not 0.0 <= level <= 1.0 for level in self.noise_levels):
            raise ConfigurationError("noise_levels", "levels must be in [0, 1]")
        for name, values, (low, high) in (
            ("sweep_alphas", self.sweep_alphas, ALPHA_RANGE),
            ("sweep_heads", self.sweep_heads, HEADS_RANGE),
            ("sweep_etas", self.sweep_etas, ETA_RANGE),
        ):
            if not values or any(not low <= v <= high for v in values):
                raise ConfigurationError(name, f"values must be in [{low}, {high}]")
        bad_modes = set(self.sweep_self_loop_modes) - set(SELF_LOOP_MODES)
        if bad_modes:
            raise ConfigurationError("sweep_self_loop_modes", f"unknown modes {sorted(bad_modes)}")
        if self.ml100k_classes < 0:
            raise ConfigurationError("ml100k_classes", "must be non-negative; 0 keeps every genre")
        if self.export_neighbors < 1:
            raise ConfigurationError("export_neighbors", "must be at least 1")
        try:
            self.hyperparameters()
        except InvalidInputError as e:
            raise ConfigurationError("hyperparameters", e.message)

    # -------------------------------------------------------------------------

    @classmethod
    def from_mapping(cls, values: Mapping[str, str], source: str = "") -> "ExperimentConfig":
        """
        Build from raw string values

        Raises:
            ConfigurationError: unknown key, bad type, out-of-range value
        """
        kinds = {f.name: f.metadata["kind"] for f in dataclasses.fields(cls)}
        parsed: Dict[str, Any] = {}
        for raw_key, raw_value in values.items():
            key = normalize_key(raw_key)
            if key not in kinds:
                raise ConfigurationError(source or "config", f"unknown key {raw_key!r}")
            parsed[key] = convert_value(key, kinds[key], raw_value, source)
        return cls(**parsed)

    def hyperparameters(self, seed: Optional[int] = None) -> Hyperparameters:
        return Hyperparameters(
            alpha=self.alpha,
            heads=self.heads,
            eta=self.eta,
            temperature=self.temperature,
            learning_rate=self.learning_rate,
            epochs=self.epochs,
            hidden_dims=self.hidden_dims,
            self_loop_mode=self.self_loop_mode,
            impact_mode=self.impact_mode,
            negatives_per_node=self.negatives_per_node,
            include_positive=self.include_positive,
            attention_gain=self.attention_gain,
            seed=self.seeds[0] if seed is None else seed,
        )

    def synthetic_spec(self) -> SyntheticSpec:
        return SyntheticSpec(
            n=self.synthetic_nodes,
            c=self.synthetic_classes,
            intra_p=self.synthetic_intra_p,
            inter_p=self.synthetic_inter_p,
            intra_weight_mean=self.synthetic_intra_weight,
            inter_weight_mean=self.synthetic_inter_weight,
            seed=self.synthetic_seed,
        )

    def replace(self, **changes: Any) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        return {
            f.name: list(v) if isinstance(v, tuple) else v
            for f in dataclasses.fields(self)
            for v in (getattr(self, f.name),)
        }

    def to_text(self) -> str:
        """Canonical KEY=VALUE rendering (sorted keys)"""
        return export_to_key_value_format({k.upper(): v for k, v in self.to_dict().items()})

    def config_hash(self) -> str:
        return calculate_text_hash(self.to_text())


def normalize_key(key: str) -> str:
    return key.strip().lower().replace("-", "_")


def convert_value(key: str, kind: str, value: Any, source: str = "") -> Any:
    if not isinstance(value, str):
        return value
    try:
        return CONVERTERS[kind](value)
    except (ValueError, InvalidInputError) as e:
        raise ConfigurationError(source or key, f"{key}: expected {kind}, got {value!r} ({e})")


def apply_overrides(config: ExperimentConfig, overrides: Mapping[str, Any]) -> ExperimentConfig:
    """Apply flag values on top of a config; None means "not given" """
    kinds = {f.name: f.metadata["kind"] for f in dataclasses.fields(ExperimentConfig)}
    changes: Dict[str, Any] = {}
    for raw_key, value in overrides.items():
        if value is None:
            continue
        key = normalize_key(raw_key)
        if key not in kinds:
            raise ConfigurationError("overrides", f"unknown key {raw_key!r}")
        changes[key] = convert_value(key, kinds[key], value, "overrides")
    return config.replace(**changes) if changes else config


class ConfigLoader:
    """Reads experiment config files"""

    def __init__(self) -> None:
        self.values: Dict[str, str] = {}
        self.source: Optional[str] = None

    def _check_file(self, path: PathLike) -> Path:
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"Config file not found: {path}")
        if path.stat().st_size > MAX_CONFIG_FILE_SIZE:
            raise ConfigurationError(str(path), "config file too large")
        return path

    def _finish(self, content: str, path: Path) -> ExperimentConfig:
        self.values = parse_key_value_content(content, str(path))
        self.source = str(path)
        config = ExperimentConfig.from_mapping(self.values, str(path))
        logger.debug("loaded %d config keys from %s", len(self.values), path)
        return config

    async def load(self, path: PathLike) -> ExperimentConfig:
        """Load and validate a config file asynchronously"""
        path = self._check_file(path)
        try:
            async with aiofiles.open(path, "r", encoding=DEFAULT_ENCODING) as f:
                content = await f.read()
        except UnicodeDecodeError as e:
            raise FileParsingError(str(path), original_error=e)
        return self._finish(content, path)

    def load_sync(self, path: PathLike) -> ExperimentConfig:
        """Load and validate a config file synchronously"""
        path = self._check_file(path)
        try:
            content = path.read_text(encoding=DEFAULT_ENCODING)
        except UnicodeDecodeError as e:
            raise FileParsingError(str(path), original_error=e)
        return self._finish(content, path)


async def load_config(path: PathLike) -> ExperimentConfig:
    return await ConfigLoader().load(path)


def load_config_sync(path: Optional[PathLike] = None) -> ExperimentConfig:
    """Defaults when ``path`` is None"""
    if path is None:
        return ExperimentConfig()
    return ConfigLoader().load_sync(path)


if __name__ == "__main__":
    import sys

    async def main() -> None:
        config = await load_config(sys.argv[1]) if len(sys.argv) > 1 else ExperimentConfig()
        print(config.to_text(), end="")
        print(f"# hash={config.config_hash()}")

    asyncio.run(main())
