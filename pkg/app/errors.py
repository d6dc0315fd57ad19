"""
Workbench Errors
Exception hierarchy shared by environments, shaping pipelines and the CLI.
"""

from typing import Any, Dict, Optional


class WorkbenchError(Exception):
    """Base class for every error the workbench raises on purpose."""

    code = "WORKBENCH_ERROR"

    def __init__(self, message: str = ""):
        super().__init__(message)
        self.message = message

    def to_dict(self) -> Dict[str, Any]:
        """Machine-readable form printed by the CLI."""
        return {'error': self.code, 'message': str(self)}


class ConfigurationError(WorkbenchError):
    """Invalid or incomplete configuration."""
    code = "CONFIGURATION_ERROR"


class ContractViolation(WorkbenchError):
    """An API was used outside its contract (e.g. stepping a finished episode)."""
    code = "CONTRACT_VIOLATION"


class InvalidGeometryError(WorkbenchError):
    """Vehicle geometry that the car-following law cannot evaluate."""
    code = "INVALID_GEOMETRY"


class DatasetError(WorkbenchError):
    """A transition or dataset breaks the store's ordering rules."""
    code = "DATASET_ERROR"


class DatasetFormatError(DatasetError):
    """A stored dataset file could not be decoded."""
    code = "DATASET_FORMAT_ERROR"

    def __init__(self, message: str, line_number: int):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number

    def to_dict(self) -> Dict[str, Any]:
        data = super().to_dict()
        data['line_number'] = self.line_number
        return data


class SchemaVersionError(DatasetError):
    """Stored dataset was written by an incompatible schema version."""
    code = "SCHEMA_VERSION_ERROR"


class DegenerateInputError(WorkbenchError):
    """Input carries no usable variance."""
    code = "DEGENERATE_INPUT"


class ModelNotFittedError(WorkbenchError):
    """A model was used before it was fitted."""
    code = "MODEL_NOT_FITTED"


class ParseError(WorkbenchError):
    """An LLM response could not be turned into a verdict."""
    code = "PARSE_ERROR"

    def __init__(self, message: str, raw_text: str = ""):
        super().__init__(message)
        self.raw_text = raw_text


class ProviderError(WorkbenchError):
    """The feedback provider failed for good; carries partial progress."""
    code = "PROVIDER_ERROR"

    def __init__(self, message: str, completed: int = 0, total: int = 0):
        super().__init__(f"{message} (completed {completed}/{total} steps)")
        self.message = message
        self.completed = completed
        self.total = total

    def to_dict(self) -> Dict[str, Any]:
        data = super().to_dict()
        data['completed'] = self.completed
        data['total'] = self.total
        return data


class NumericalError(WorkbenchError):
    """Non-finite value during optimization."""
    code = "NUMERICAL_ERROR"

    def __init__(self, message: str, batch_index: Optional[int] = None):
        if batch_index is not None:
            message = f"{message} (batch {batch_index})"
        super().__init__(message)
        self.batch_index = batch_index


class UnsupportedMetricError(WorkbenchError):
    """Metric requested for an environment it is not defined on."""
    code = "UNSUPPORTED_METRIC"
