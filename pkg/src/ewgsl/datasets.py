#!/usr/bin/env python3
"""
EWGSL: Dataset construction, splits and file formats

- ML-100k_ES: movie co-rating graph built from raw MovieLens-100K files
- Weighted planted partition: synthetic stand-in for private interaction graphs
- Stratified labeled/unlabeled splits
- Edge-list and label TSV readers/writers
"""

import csv
import dataclasses
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
import pandas as pd

from .constants import (
    GRAPH_FILENAME,
    LABELS_FILENAME,
    ML100K_DATA_SEPARATOR,
    ML100K_GENRES,
    ML100K_ENCODING,
    ML100K_ITEM_SEPARATOR,
    ML100K_CLASSES,
    ML100K_UNKNOWN_GENRE,
    SYNTHETIC_CLASSES,
    SYNTHETIC_INTER_P,
    SYNTHETIC_INTER_WEIGHT_MEAN,
    SYNTHETIC_INTRA_P,
    SYNTHETIC_INTRA_WEIGHT_MEAN,
    SYNTHETIC_NODES,
)
from .exceptions import DatasetError, FileParsingError, GraphValidationError, InvalidInputError
from .graph import WeightedGraph, validate_graph
from .utils import (
    PathLike,
    format_float,
    get_logger,
    iter_tsv_rows,
    parse_field,
    read_header,
    write_lines,
)

logger = get_logger("datasets")

ML100K_ITEM_COLUMNS = ["item", "title", "release_date", "video_release_date", "url"]


@dataclass(frozen=True)
class LabelSet:
    """Per-node classes plus the labeled (V_L) / unlabeled (V_U) partition"""

    labels: np.ndarray
    c: int
    labeled_mask: Optional[np.ndarray] = None
    class_names: Tuple[str, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        labels = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "labels", labels)
        if labels.ndim != 1:
            raise InvalidInputError("labels must be a vector", labels.shape)
        if labels.size and (labels.min() < 0 or labels.max() >= self.c):
            raise InvalidInputError(f"labels must lie in [0, {self.c})")
        if self.labeled_mask is None:
            object.__setattr__(self, "labeled_mask", np.zeros(labels.size, dtype=bool))
        else:
            mask = np.asarray(self.labeled_mask, dtype=bool)
            if mask.shape != labels.shape:
                raise InvalidInputError("labeled_mask does not match labels", mask.shape)
            object.__setattr__(self, "labeled_mask", mask)

    @property
    def n(self) -> int:
        return int(self.labels.size)

    @property
    def unlabeled_mask(self) -> np.ndarray:
        return ~self.labeled_mask

    @property
    def labeled_ids(self) -> np.ndarray:
        return np.flatnonzero(self.labeled_mask)

    @property
    def unlabeled_ids(self) -> np.ndarray:
        return np.flatnonzero(~self.labeled_mask)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.c)

    def with_labeled(self, labeled_ids: Sequence[int]) -> "LabelSet":
        mask = np.zeros(self.n, dtype=bool)
        mask[np.asarray(labeled_ids, dtype=np.int64)] = True
        return dataclasses.replace(self, labeled_mask=mask)

    def has_labeled_per_class(self) -> bool:
        present = np.unique(self.labels[self.labeled_mask])
        return bool(present.size == np.unique(self.labels).size)


@dataclass(frozen=True)
class SyntheticSpec:
    """
    Weighted planted partition

    Edge weights follow 1 + Poisson(mean) inside and across blocks.
    """

    n: int = SYNTHETIC_NODES
    c: int = SYNTHETIC_CLASSES
    intra_p: float = SYNTHETIC_INTRA_P
    inter_p: float = SYNTHETIC_INTER_P
    intra_weight_mean: float = SYNTHETIC_INTRA_WEIGHT_MEAN
    inter_weight_mean: float = SYNTHETIC_INTER_WEIGHT_MEAN
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n < 2 or self.c < 1 or self.c > self.n:
            raise InvalidInputError("need 2 <= n and 1 <= c <= n", (self.n, self.c))
        for name in ("intra_p", "inter_p"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InvalidInputError(f"{name} must be a probability", value)
        if self.intra_p <= self.inter_p:
            raise InvalidInputError(
                "intra_p must exceed inter_p", (self.intra_p, self.inter_p)
            )
        if self.intra_weight_mean <= self.inter_weight_mean or self.inter_weight_mean < 0:
            raise InvalidInputError(
                "intra weight mean must exceed inter weight mean",
                (self.intra_weight_mean, self.inter_weight_mean),
            )

    def block_sizes(self) -> List[int]:
        base, extra = divmod(self.n, self.c)
        return [base + (1 if b < extra else 0) for b in range(self.c)]


# =============================================================================
# MOVIELENS-100K
# =============================================================================


def _read_ml100k_table(
    path: PathLike, separator: str, columns: Sequence[str], encoding: str
) -> pd.DataFrame:
    """
    Raw MovieLens table as strings, indexed by 1-based line number

    Raises:
        FileNotFoundError: missing file
        FileParsingError: short or overlong line, undecodable bytes
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"File not found: {path}")
    try:
        frame = pd.read_csv(
            path,
            sep=separator,
            header=None,
            dtype=str,
            encoding=encoding,
            keep_default_na=False,
            quoting=csv.QUOTE_NONE,
            skip_blank_lines=False,
        )
    except pd.errors.EmptyDataError:
        return pd.DataFrame(columns=list(columns), dtype=str)
    except pd.errors.ParserError as e:
        match = re.search(r"line (\d+)", str(e))
        raise FileParsingError(str(path), int(match.group(1)) if match else None, e)
    except UnicodeDecodeError as e:
        raise FileParsingError(str(path), original_error=e)

    frame.index = frame.index + 1
    frame = frame.reindex(columns=range(len(columns)))
    frame = frame[~(frame.isna() | (frame == "")).all(axis=1)]
    short = frame.isna().any(axis=1)
    if short.any():
        raise FileParsingError(
            str(path), int(short.idxmax()), Exception(f"expected {len(columns)} fields")
        )
    frame.columns = list(columns)
    return frame


def _to_int(frame: pd.DataFrame, path: PathLike) -> pd.DataFrame:
    """Integer columns; the first unparsable cell is reported by line"""
    numbers = frame.apply(lambda column: pd.to_numeric(column.str.strip(), errors="coerce"))
    bad = numbers.isna() | (numbers != numbers.round())
    if bad.to_numpy().any():
        line = int(bad.any(axis=1).idxmax())
        value = frame.loc[line][bad.loc[line]].iloc[0]
        raise FileParsingError(str(path), line, ValueError(f"not an integer: {value!r}"))
    return numbers.astype(np.int64)


def _read_ml100k_ratings(ratings_file: PathLike) -> pd.DataFrame:
    columns = ["user", "item", "rating", "timestamp"]
    table = _read_ml100k_table(ratings_file, ML100K_DATA_SEPARATOR, columns, ML100K_ENCODING)
    return _to_int(table, ratings_file).reset_index(drop=True)


def _read_ml100k_items(items_file: PathLike) -> pd.DataFrame:
    columns = ML100K_ITEM_COLUMNS + ML100K_GENRES
    table = _read_ml100k_table(items_file, ML100K_ITEM_SEPARATOR, columns, ML100K_ENCODING)
    numbers = _to_int(table[["item", *ML100K_GENRES]], items_file)
    flags = numbers[ML100K_GENRES]
    invalid = ~flags.isin([0, 1]).all(axis=1)
    if invalid.any():
        raise DatasetError(f"{items_file}: genre flags must be 0/1 at line {int(invalid.idxmax())}")
    return flags.set_axis(pd.Index(numbers["item"].to_numpy(), name="item"), axis=0)


def movie_genre_labels(genres: pd.DataFrame) -> pd.Series:
    """
    Label each movie with its globally most frequent genre

    Ties go to the lowest genre index; movies without genres are "unknown".
    """
    frequency = genres.sum(axis=0).to_numpy()
    flags = genres.to_numpy(dtype=bool)
    # -1 keeps absent genres below every present one, argmax takes the first max
    scores = np.where(flags, frequency[None, :], -1)
    labels = np.argmax(scores, axis=1)
    labels[~flags.any(axis=1)] = ML100K_UNKNOWN_GENRE
    return pd.Series(labels, index=genres.index, name="genre")


def largest_genre_classes(genre_ids: np.ndarray, max_classes: int) -> np.ndarray:
    """The ``max_classes`` genres labeling the most movies, ties to the lower genre index"""
    counts = np.bincount(np.asarray(genre_ids, dtype=np.int64), minlength=len(ML100K_GENRES))
    order = np.lexsort((np.arange(counts.size), -counts))
    return np.sort(order[counts[order] > 0][:max_classes])


def build_ml100k_graph(
    ratings_file: PathLike,
    items_file: PathLike,
    max_classes: Optional[int] = ML100K_CLASSES,
) -> Tuple[WeightedGraph, LabelSet]:
    """
    Build the movie co-rating graph

    Every consecutive pair in a user's (timestamp, item)-sorted ratings adds
    1 to the weight between the two movies. With ``max_classes`` set, only
    movies whose genre label is among the ``max_classes`` most common labels
    of the co-rated movies are kept. Movies without edges are dropped and the
    rest renumbered by ascending movie id.

    Raises:
        FileParsingError: malformed line (with line number)
        DatasetError: rating for a movie missing from the item file
    """
    ratings = _read_ml100k_ratings(ratings_file)
    genres = _read_ml100k_items(items_file)

    missing = np.setdiff1d(ratings["item"].unique(), genres.index.to_numpy())
    if missing.size:
        raise DatasetError(
            f"{len(missing)} rated movie(s) missing from {items_file}",
            {"items": missing[:10].tolist()},
        )

    ordered = ratings.sort_values(["user", "timestamp", "item"], kind="mergesort")
    ordered["next_item"] = ordered.groupby("user")["item"].shift(-1)
    pairs = ordered.dropna(subset=["next_item"])
    a = pairs["item"].to_numpy(dtype=np.int64)
    b = pairs["next_item"].to_numpy(dtype=np.int64)
    keep = a != b
    pair_frame = pd.DataFrame({"u": np.minimum(a, b)[keep], "v": np.maximum(a, b)[keep]})
    weights = pair_frame.groupby(["u", "v"]).size().reset_index(name="w")
    if weights.empty:
        raise DatasetError("ratings produce no consecutive movie pairs")

    genre_of = movie_genre_labels(genres)
    dropped_classes: List[str] = []
    if max_classes:
        rated = np.union1d(weights["u"].to_numpy(), weights["v"].to_numpy())
        kept = largest_genre_classes(genre_of.loc[rated].to_numpy(), max_classes)
        dropped_classes = [
            ML100K_GENRES[g] for g in np.setdiff1d(np.unique(genre_of.loc[rated]), kept)
        ]
        u_kept = genre_of.loc[weights["u"]].isin(kept).to_numpy()
        v_kept = genre_of.loc[weights["v"]].isin(kept).to_numpy()
        weights = weights[u_kept & v_kept]

    movies = np.union1d(weights["u"].to_numpy(), weights["v"].to_numpy())
    if movies.size == 0:
        raise DatasetError("no co-rated movies left in the kept genre classes", dropped_classes)
    node_of = pd.Series(np.arange(movies.size), index=movies)
    edges = np.column_stack(
        [
            node_of.loc[weights["u"]].to_numpy(),
            node_of.loc[weights["v"]].to_numpy(),
            weights["w"].to_numpy(dtype=np.float64),
        ]
    )
    graph = validate_graph(int(movies.size), edges)

    genre_ids = genre_of.loc[movies].to_numpy()
    used = np.unique(genre_ids)
    labels = np.searchsorted(used, genre_ids)
    label_set = LabelSet(
        labels=labels,
        c=int(used.size),
        class_names=tuple(ML100K_GENRES[g] for g in used),
    )

    logger.info(
        "built ML-100k_ES: %d nodes, %d edges, %d classes",
        graph.n,
        graph.num_edges,
        label_set.c,
        extra={
            "dropped_movies": int(genres.shape[0] - movies.size),
            "dropped_classes": dropped_classes,
        },
    )
    return graph, label_set


# =============================================================================
# SYNTHETIC PLANTED PARTITION
# =============================================================================


def generate_synthetic_graph(spec: SyntheticSpec) -> Tuple[WeightedGraph, LabelSet]:
    """Weighted planted partition with near-equal consecutive blocks"""
    sizes = spec.block_sizes()
    probs = [
        [spec.intra_p if a == b else spec.inter_p for b in range(spec.c)]
        for a in range(spec.c)
    ]
    topology = nx.stochastic_block_model(sizes, probs, seed=spec.seed)
    labels = np.repeat(np.arange(spec.c), sizes)

    pairs = np.array(sorted(tuple(sorted(e)) for e in topology.edges()), dtype=np.int64)
    if pairs.size == 0:
        raise DatasetError("synthetic spec produced an empty graph", dataclasses.asdict(spec))

    rng = np.random.default_rng(spec.seed)
    intra = labels[pairs[:, 0]] == labels[pairs[:, 1]]
    means = np.where(intra, spec.intra_weight_mean, spec.inter_weight_mean)
    weights = 1.0 + rng.poisson(means).astype(np.float64)

    graph = validate_graph(spec.n, np.column_stack([pairs, weights]))
    logger.info(
        "generated planted partition: %d nodes, %d edges (%d intra)",
        graph.n,
        graph.num_edges,
        int(intra.sum()),
    )
    return graph, LabelSet(labels=labels, c=spec.c)


# =============================================================================
# SPLITS
# =============================================================================


def labeled_counts(class_sizes: Sequence[int], labeled_fraction: float) -> np.ndarray:
    """
    Per-class labeled counts summing to ceil(fraction * n)

    Floors of the exact per-class quotas are topped up by largest remainder
    (ties to the lower class), then every class is kept between 1 and its size.
    """
    fraction = Fraction(repr(float(labeled_fraction)))
    sizes = [int(s) for s in class_sizes]
    quotas = [fraction * s for s in sizes]
    counts = [math.floor(q) for q in quotas]
    deficit = math.ceil(fraction * sum(sizes)) - sum(counts)
    by_remainder = sorted(range(len(sizes)), key=lambda c: (-(quotas[c] - counts[c]), c))
    for cls in by_remainder[:deficit]:
        counts[cls] += 1
    return np.array([min(s, max(1, k)) for s, k in zip(sizes, counts)], dtype=np.int64)


def split_labels(labels: LabelSet, labeled_fraction: float, seed: int) -> LabelSet:
    """
    Stratified labeled/unlabeled split

    Per-class counts come from ``labeled_counts``: floors of the per-class
    quotas topped up by largest remainder to ceil(fraction * n), with at
    least one labeled node per class.

    Raises:
        InvalidInputError: fraction not strictly between 0 and 1
        DatasetError: some class has no nodes
    """
    if not 0.0 < labeled_fraction < 1.0:
        raise InvalidInputError("labeled fraction must be in (0, 1)", labeled_fraction)

    counts = labels.class_counts()
    empty = np.flatnonzero(counts == 0)
    if empty.size:
        raise DatasetError(f"class {int(empty[0])} has no nodes", {"counts": counts.tolist()})

    rng = np.random.default_rng(seed)
    chosen = []
    for cls, k in enumerate(labeled_counts(counts, labeled_fraction)):
        members = np.flatnonzero(labels.labels == cls)
        chosen.append(rng.choice(members, size=int(k), replace=False))
    return labels.with_labeled(np.sort(np.concatenate(chosen)))


# =============================================================================
# FILE FORMATS
# =============================================================================


def write_graph(path: PathLike, graph: WeightedGraph) -> None:
    """src<TAB>dst<TAB>weight per undirected edge, preceded by a node-count header"""
    u, v, w = graph.edges()
    lines = [f"# nodes={graph.n}"]
    lines.extend(f"{a}\t{b}\t{format_float(x)}" for a, b, x in zip(u, v, w))
    write_lines(path, lines)


def read_graph(path: PathLike, n: Optional[int] = None) -> WeightedGraph:
    """
    Read an edge-list TSV

    The node count comes from ``n``, the header, or the largest id + 1.

    Raises:
        GraphValidationError: empty file or invalid edges
        FileParsingError: malformed line
    """
    edges = []
    for line_number, fields in iter_tsv_rows(path, 3):
        edges.append(
            (
                parse_field(fields[0], int, path, line_number),
                parse_field(fields[1], int, path, line_number),
                parse_field(fields[2], float, path, line_number),
            )
        )
    if n is None:
        header = read_header(path)
        if "nodes" in header:
            n = parse_field(header["nodes"], int, path, 1)
    if not edges and not n:
        raise GraphValidationError(f"empty graph file: {path}")
    if n is None:
        n = 1 + max(max(u, v) for u, v, _ in edges)
    return validate_graph(n, edges)


def write_labels(path: PathLike, labels: LabelSet) -> None:
    """node<TAB>label per node, with the class count in the header"""
    lines = [f"# classes={labels.c}"]
    if labels.class_names:
        lines.append(f"# class_names={','.join(labels.class_names)}")
    lines.extend(f"{i}\t{y}" for i, y in enumerate(labels.labels))
    write_lines(path, lines)


def read_labels(path: PathLike) -> LabelSet:
    pairs = {}
    for line_number, fields in iter_tsv_rows(path, 2):
        node = parse_field(fields[0], int, path, line_number)
        pairs[node] = parse_field(fields[1], int, path, line_number)
    if not pairs:
        raise DatasetError(f"empty label file: {path}")
    n = max(pairs) + 1
    if len(pairs) != n:
        raise DatasetError(f"label file {path} does not cover nodes 0..{n - 1}")

    header = read_header(path)
    labels = np.array([pairs[i] for i in range(n)], dtype=np.int64)
    c = int(header["classes"]) if "classes" in header else int(labels.max()) + 1
    names = tuple(header["class_names"].split(",")) if "class_names" in header else ()
    return LabelSet(labels=labels, c=c, class_names=names)


def write_split(path: PathLike, labels: LabelSet) -> None:
    """One labeled node id per line"""
    write_lines(path, [str(i) for i in labels.labeled_ids])


def read_split(path: PathLike, labels: LabelSet) -> LabelSet:
    ids = [
        parse_field(fields[0], int, path, line_number)
        for line_number, fields in iter_tsv_rows(path, 1)
    ]
    ids_array = np.asarray(ids, dtype=np.int64)
    if ids_array.size and (ids_array.min() < 0 or ids_array.max() >= labels.n):
        raise DatasetError(f"split file {path} names unknown nodes")
    return labels.with_labeled(ids_array)


def dataset_paths(out_dir: PathLike) -> Tuple[Path, Path]:
    out = Path(out_dir)
    return out / GRAPH_FILENAME, out / LABELS_FILENAME
