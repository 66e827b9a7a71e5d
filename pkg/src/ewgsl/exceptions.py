#!/usr/bin/env python3
"""
EWGSL: Exception classes for error handling
"""

from typing import Any, Dict, Optional

from .constants import get_settings_for_environment


class EWGSLError(Exception):
    """Base exception for all EWGSL errors"""

    def __init__(self, message: str, details: Optional[Any] = None):
        super().__init__(message)
        self.message = message
        self.details = details

    def __str__(self) -> str:
        if self.details:
            return f"{self.message} (Details: {self.details})"
        return self.message


class InvalidInputError(EWGSLError):
    """Input validation failed"""

    def __init__(self, message: str, input_value: Optional[Any] = None):
        details = {"input_value": input_value} if input_value is not None else None
        super().__init__(message, details)
        self.input_value = input_value


# =============================================================================
# GRAPH ERRORS
# =============================================================================


class GraphError(EWGSLError):
    """Base exception for graph-core failures"""

    pass


class GraphValidationError(GraphError):
    """Graph violates a structural invariant"""

    def __init__(self, reason: str, edge: Optional[Any] = None):
        details = {"edge": edge} if edge is not None else None
        super().__init__(reason, details)
        self.reason = reason
        self.edge = edge


class ImpactFactorError(GraphError):
    """Impact factor denominator is zero"""

    def __init__(self, node: int):
        super().__init__(
            f"Node {node} has no neighbor weight to normalize by", {"node": node}
        )
        self.node = node


class NoiseInjectionError(GraphError):
    """Not enough non-edges to add the requested noise"""

    def __init__(self, requested: int, available: int):
        super().__init__(
            f"Cannot add {requested} noise edges: only {available} non-edges",
            {"requested": requested, "available": available},
        )
        self.requested = requested
        self.available = available


# =============================================================================
# FILE AND DATASET ERRORS
# =============================================================================


class FileParsingError(EWGSLError):
    """Error occurred during file parsing"""

    def __init__(
        self,
        file_path: str,
        line_number: Optional[int] = None,
        original_error: Optional[Exception] = None,
    ):
        message = f"Failed to parse file: {file_path}"
        if line_number:
            message += f" at line {line_number}"

        details = {
            "file_path": file_path,
            "line_number": line_number,
            "original_error": str(original_error) if original_error else None,
        }

        super().__init__(message, details)
        self.file_path = file_path
        self.line_number = line_number
        self.original_error = original_error


class DatasetError(EWGSLError):
    """Dataset construction or split failed"""

    pass


class CheckpointError(EWGSLError):
    """Model checkpoint could not be written or read"""

    def __init__(self, path: str, issue: str):
        super().__init__(f"Checkpoint error in {path}: {issue}", {"path": path})
        self.path = path
        self.issue = issue


# =============================================================================
# NUMERICAL ERRORS
# =============================================================================


class NumericalError(EWGSLError):
    """Base exception for numerical failures"""

    pass


class EntmaxError(NumericalError):
    """Entmax input rejected"""

    pass


class DimensionMismatchError(NumericalError):
    """Array shapes do not line up"""

    def __init__(self, operation: str, expected: Any, actual: Any):
        super().__init__(
            f"Dimension mismatch in {operation}: expected {expected}, got {actual}",
            {"operation": operation, "expected": expected, "actual": actual},
        )
        self.operation = operation
        self.expected = expected
        self.actual = actual


class NonFiniteGradientError(NumericalError):
    """Gradient contains NaN or infinity"""

    def __init__(self, parameter: str, index: Optional[tuple] = None):
        message = f"Non-finite gradient for parameter '{parameter}'"
        if index is not None:
            message += f" at index {index}"
        super().__init__(message, {"parameter": parameter, "index": index})
        self.parameter = parameter
        self.index = index


class TrainingDivergenceError(NumericalError):
    """Loss became non-finite during training"""

    def __init__(self, epoch: int, breakdown: Dict[str, float]):
        super().__init__(f"Training diverged at epoch {epoch}", breakdown)
        self.epoch = epoch
        self.breakdown = breakdown


class EvaluationError(EWGSLError):
    """Metrics cannot be computed"""

    pass


class ConfigurationError(EWGSLError):
    """Configuration or setup error"""

    def __init__(self, component: str, issue: str):
        super().__init__(f"Configuration error in {component}: {issue}")
        self.component = component
        self.issue = issue


def get_error_code(error: EWGSLError) -> str:
    """Get error code for programmatic handling"""
    error_codes = {
        EWGSLError: "EW001",
        GraphError: "EW100",
        GraphValidationError: "EW101",
        ImpactFactorError: "EW102",
        NoiseInjectionError: "EW103",
        FileParsingError: "EW200",
        DatasetError: "EW201",
        CheckpointError: "EW202",
        NumericalError: "EW300",
        EntmaxError: "EW301",
        DimensionMismatchError: "EW302",
        NonFiniteGradientError: "EW303",
        TrainingDivergenceError: "EW304",
        EvaluationError: "EW305",
        ConfigurationError: "EW400",
        InvalidInputError: "EW401",
    }
    return error_codes.get(type(error), "EW000")


def handle_ewgsl_error(error: Exception, environment: str = "production") -> str:
    """Render an error for the given environment"""

    if get_settings_for_environment(environment)["detailed_errors"]:
        if isinstance(error, EWGSLError):
            return f"{error.__class__.__name__}: {error.message} | Details: {error.details}"
        return str(error)

    if isinstance(error, EWGSLError):
        return f"{error.message} (error code: {get_error_code(error)})"
    return "An unexpected error occurred."
