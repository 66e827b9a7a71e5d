#!/usr/bin/env python3
"""
EWGSL: Common utility functions
Shared helpers for line parsing, tab-separated files, hashing and logging
"""

import hashlib
import logging
from pathlib import Path
from typing import Any, Callable, Dict, Iterator, List, Optional, Tuple, TypeVar, Union

from .constants import (
    DEFAULT_ENCODING,
    LOG_FORMAT,
    LOGGER_NAME,
    MAX_LINE_LENGTH,
    TSV_SEPARATOR,
    get_settings_for_environment,
)
from .exceptions import FileParsingError, InvalidInputError

PathLike = Union[str, Path]
T = TypeVar("T")

logging.getLogger(LOGGER_NAME).addHandler(logging.NullHandler())


# =============================================================================
# LOGGING
# =============================================================================


def get_logger(name: str) -> logging.Logger:
    """Child logger under the package namespace"""
    return logging.getLogger(f"{LOGGER_NAME}.{name}")


def configure_logging(level: Optional[str] = None) -> None:
    """Attach a stream handler to the package logger (CLI entry only)"""
    if level is None:
        level = get_settings_for_environment()["log_level"]
    logger = logging.getLogger(LOGGER_NAME)
    logger.setLevel(level)
    if not any(getattr(h, "_ewgsl_cli", False) for h in logger.handlers):
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        handler._ewgsl_cli = True  # type: ignore[attr-defined]
        logger.addHandler(handler)


# =============================================================================
# KEY=VALUE LINE PARSING
# =============================================================================


def parse_key_value_line(
    line: str, line_number: int = 0, file_path: str = ""
) -> Optional[Tuple[str, str]]:
    """
    Parse a single KEY=VALUE line

    Args:
        line: Line to parse
        line_number: Line number for error reporting
        file_path: File name for error reporting

    Returns:
        Tuple of (key, raw value) or None for blank lines and comments

    Raises:
        FileParsingError: If the line has no '=' or an empty key
    """
    if len(line) > MAX_LINE_LENGTH:
        raise FileParsingError(file_path, line_number, Exception("Line too long"))

    line = line.strip()
    if not line or line.startswith("#"):
        return None

    if "=" not in line:
        raise FileParsingError(
            file_path, line_number, Exception("Line missing '=' separator")
        )

    key, _, value = line.partition("=")
    key = key.strip()
    value = value.strip()

    if not key:
        raise FileParsingError(file_path, line_number, Exception("Empty key"))

    if len(value) >= 2:
        if (value.startswith('"') and value.endswith('"')) or (
            value.startswith("'") and value.endswith("'")
        ):
            value = value[1:-1]

    return key, value


def parse_key_value_content(content: str, file_path: str = "") -> Dict[str, str]:
    """Parse KEY=VALUE content; later duplicates override earlier ones"""
    data: Dict[str, str] = {}
    for line_number, line in enumerate(content.splitlines(), 1):
        result = parse_key_value_line(line, line_number, file_path)
        if result:
            key, value = result
            data[key] = value
    return data


def export_to_key_value_format(data: Dict[str, Any]) -> str:
    """Render a mapping back to KEY=VALUE text with sorted keys"""
    lines = []
    for key, value in sorted(data.items()):
        if isinstance(value, (list, tuple)):
            value = ",".join(str(v) for v in value)
        value = str(value)
        if " " in value or '"' in value or "'" in value:
            escaped_value = value.replace('"', '\\"')
            lines.append(f'{key}="{escaped_value}"')
        else:
            lines.append(f"{key}={value}")
    return "\n".join(lines) + "\n"


# =============================================================================
# TAB-SEPARATED FILES
# =============================================================================


def iter_tsv_rows(
    path: PathLike,
    n_fields: int,
    separator: str = TSV_SEPARATOR,
    encoding: str = DEFAULT_ENCODING,
    comment: Optional[str] = "#",
) -> Iterator[Tuple[int, List[str]]]:
    """
    Yield (line_number, fields) for every non-blank, non-comment line

    Raises:
        FileNotFoundError: If the file is missing
        FileParsingError: On wrong field count or undecodable bytes
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"File not found: {path}")

    try:
        with open(path, "r", encoding=encoding, newline="") as f:
            for line_number, line in enumerate(f, 1):
                line = line.rstrip("\r\n")
                if not line.strip() or (comment and line.startswith(comment)):
                    continue
                fields = line.split(separator)
                if len(fields) < n_fields:
                    raise FileParsingError(
                        str(path),
                        line_number,
                        Exception(f"expected {n_fields} fields, got {len(fields)}"),
                    )
                yield line_number, fields
    except UnicodeDecodeError as e:
        raise FileParsingError(str(path), original_error=e)


def read_header(path: PathLike, encoding: str = DEFAULT_ENCODING) -> Dict[str, str]:
    """Collect ``# key=value`` lines from the top of a data file"""
    header: Dict[str, str] = {}
    with open(path, "r", encoding=encoding) as f:
        for line in f:
            if not line.startswith("#"):
                break
            result = parse_key_value_line(line[1:])
            if result:
                header[result[0]] = result[1]
    return header


def parse_field(
    value: str, convert: Callable[[str], T], path: PathLike, line_number: int
) -> T:
    """Convert one field, reporting the location on failure"""
    try:
        return convert(value.strip())
    except ValueError as e:
        raise FileParsingError(str(path), line_number, e)


def write_lines(path: PathLike, lines: List[str]) -> None:
    """Write UTF-8 text with LF line endings"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding=DEFAULT_ENCODING, newline="\n") as f:
        for line in lines:
            f.write(line)
            f.write("\n")


def format_float(value: float) -> str:
    """Shortest repr that round-trips exactly"""
    return repr(float(value))


# =============================================================================
# HASHING
# =============================================================================


def calculate_file_hash(file_path: PathLike, algorithm: str = "sha256") -> str:
    """
    Calculate file hash for manifests

    Raises:
        FileNotFoundError: If file doesn't exist
        ValueError: If unsupported algorithm
    """
    if not Path(file_path).exists():
        raise FileNotFoundError(f"File not found: {file_path}")

    try:
        hasher = hashlib.new(algorithm)
    except ValueError:
        raise ValueError(f"Unsupported hash algorithm: {algorithm}")

    with open(file_path, "rb") as f:
        for chunk in iter(lambda: f.read(4096), b""):
            hasher.update(chunk)

    return hasher.hexdigest()


def calculate_text_hash(text: str) -> str:
    """SHA-256 of UTF-8 text"""
    return hashlib.sha256(text.encode(DEFAULT_ENCODING)).hexdigest()


def parse_int_list(value: str) -> List[int]:
    """'1, 2,3' -> [1, 2, 3]"""
    if not value.strip():
        return []
    try:
        return [int(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise InvalidInputError("Expected comma-separated integers", value)


def parse_float_list(value: str) -> List[float]:
    """'0.05,0.1' -> [0.05, 0.1]"""
    if not value.strip():
        return []
    try:
        return [float(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise InvalidInputError("Expected comma-separated numbers", value)
