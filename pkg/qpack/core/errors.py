"""
Exception hierarchy for qpack.

Every error carries the process exit code the command-line runner reports for its category.
"""

from typing import Optional


class QpackError(Exception):
    """Base class for all qpack errors."""

    exit_code = 1


class ConfigError(QpackError):
    """Invalid run configuration; the message names the offending key path."""

    exit_code = 2

    def __init__(self, message: str, path: Optional[str] = None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class InvalidParameterError(QpackError, ValueError):
    """A physical or geometric parameter violates its invariant."""

    exit_code = 2


class PlacementError(QpackError):
    """A source, port or probe sits somewhere the solver cannot drive or sample."""

    exit_code = 2


class UnderResolutionError(QpackError):
    """A volumetric shape is thinner than one grid cell."""

    exit_code = 2


class InstabilityError(QpackError):
    """Non-finite field values appeared during time stepping."""

    exit_code = 3

    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(f"non-finite field values at step {step}" + (f": {message}" if message else ""))


class AnalysisError(QpackError):
    """Post-processing could not produce the requested quantity."""

    exit_code = 4


class ModeLostError(AnalysisError):
    """No resonance was found inside the tracking window."""


class ArtifactError(QpackError):
    """An output artifact could not be written."""

    exit_code = 5
