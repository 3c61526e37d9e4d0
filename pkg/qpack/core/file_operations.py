"""
Module for writing run artifacts: CSV tables, 2-D grids and JSON, each with a provenance header.
"""

import csv
import io
import json
import math
import os
from abc import ABC, abstractmethod
from typing import Iterable, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict


class ArtifactContext(BaseModel):
    """Outcome of one artifact operation"""

    filepath: str
    content: str
    error: Optional[str] = None

    model_config = ConfigDict(arbitrary_types_allowed=True)


class FileOperations(ABC):
    """Abstract base class for file operations."""

    @abstractmethod
    def read_file(self, filepath: str) -> str:
        """Read the content of a file."""

    @abstractmethod
    def write_file(self, filepath: str, content: str) -> None:
        """Write content to a file."""


class DefaultFileOperations(FileOperations):
    """Local filesystem; parent directories are created on write."""

    def read_file(self, filepath: str) -> str:
        with open(filepath, "r", encoding="utf-8") as f:
            return f.read()

    def write_file(self, filepath: str, content: str) -> None:
        parent = os.path.dirname(filepath)
        if parent:
            os.makedirs(parent, exist_ok=True)
        with open(filepath, "w", encoding="utf-8", newline="") as f:
            f.write(content)


def format_value(value) -> str:
    """Stable text for a CSV cell."""
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return f"{value:.12g}"
    if hasattr(value, "value") and not isinstance(value, str):
        return str(value.value)
    return str(value)


class ArtifactManager:
    """Writes artifacts under an output directory, prefixing every text file with header comments."""

    def __init__(self, file_operations: FileOperations, out_dir: str, header: Sequence[str] = ()):
        self.file_operations = file_operations
        self.out_dir = out_dir
        self.header = list(header)
        self.written: List[ArtifactContext] = []

    def path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    def write_file(self, filepath: str, content: str) -> ArtifactContext:
        try:
            self.file_operations.write_file(filepath, content)
            result = ArtifactContext(filepath=filepath, content=content)
        except OSError as e:
            result = ArtifactContext(filepath=filepath, content=content, error=str(e))
        self.written.append(result)
        return result

    def _header_text(self, extra: Iterable[str] = ()) -> str:
        return "".join(f"# {line}\n" for line in [*self.header, *extra])

    def write_csv(
        self, name: str, columns: Sequence[str], rows: Iterable[Sequence], comments: Iterable[str] = ()
    ) -> ArtifactContext:
        buf = io.StringIO()
        buf.write(self._header_text(comments))
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(v) for v in row])
        return self.write_file(self.path(name), buf.getvalue())

    def write_grid(self, name: str, values: np.ndarray, comments: Iterable[str] = ()) -> ArtifactContext:
        """2-D array, one CSV row per array row."""
        buf = io.StringIO()
        buf.write(self._header_text(comments))
        writer = csv.writer(buf, lineterminator="\n")
        for row in np.asarray(values):
            writer.writerow([format_value(v) for v in row])
        return self.write_file(self.path(name), buf.getvalue())

    def write_text(self, name: str, content: str) -> ArtifactContext:
        return self.write_file(self.path(name), content)

    def write_json(self, name: str, document: dict) -> ArtifactContext:
        """Canonical JSON (sorted keys, no whitespace) plus a trailing newline."""
        return self.write_text(name, json.dumps(document, sort_keys=True, separators=(",", ":")) + "\n")

    @property
    def errors(self) -> List[ArtifactContext]:
        return [c for c in self.written if c.error]
