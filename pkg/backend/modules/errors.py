"""
errors.py - Exception hierarchy shared by every toolkit module.

All errors derive from ValueError so callers that only know about
ValueError (the CLI, the pipeline facade) can still catch them.
"""

from __future__ import annotations

from typing import Iterable, Optional


class ToolkitError(ValueError):
    """Base class for data and usage errors raised by the toolkit."""


class UnsupportedFormat(ToolkitError):
    """Capture file is not a classic Ethernet pcap."""


class TruncatedCapture(ToolkitError):
    """A record header or body ends before its declared length."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class FixtureParseError(ToolkitError):
    """A packet fixture line could not be parsed."""

    def __init__(self, message: str, line_no: int):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class OutOfOrderPacket(ToolkitError):
    """Packet timestamp regressed further than the tolerance window."""


class SchemaError(ToolkitError):
    """CSV header does not match the declared column schema."""

    def __init__(self, message: str, columns: Optional[Iterable[str]] = None):
        super().__init__(message)
        self.columns = list(columns or [])


class StratificationError(ToolkitError):
    """A class is too small for the requested split or fold count."""


class DimensionError(ToolkitError):
    """Matrix shape does not match a fitted model or scaler."""


class PcaError(ToolkitError):
    """PCA cannot be fitted or queried with the given input."""


class ModelError(ToolkitError):
    """Classifier misuse: wrong family for an operation, degenerate input."""


class ScenarioError(ToolkitError):
    """Unknown synthetic scenario name or invalid generator spec."""


class ConfigError(ToolkitError):
    """Unknown key or malformed line in a key=value configuration source."""
