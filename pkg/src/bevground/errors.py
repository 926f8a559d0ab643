"""Exception types shared across the toolkit.

Loader errors carry a ``path`` locating the offending element inside the
input document (e.g. ``frames[3].instances[1].category``), so CLI
diagnostics can point at the exact field.
"""

from __future__ import annotations


class ToolkitError(Exception):
    """Base class for all toolkit errors."""


class ParseError(ToolkitError):
    """Structurally malformed input: bad JSON, missing field, wrong type."""

    def __init__(self, message: str, path: str | None = None):
        self.message = message
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class ValidationError(ToolkitError):
    """Well-formed input violating a domain invariant."""

    def __init__(self, message: str, path: str | None = None):
        self.message = message
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class InstanceNotFound(ToolkitError):
    """Requested instance id is not present in the given frame."""


class DegenerateInput(ToolkitError):
    """Input outside the operation's domain (e.g. object exactly at the ego origin)."""


class MissingValue(ToolkitError):
    """Attribute map does not cover exactly the template's attribute subset."""


class DimensionMismatch(ToolkitError):
    """Array shapes are inconsistent with the declared dimensions."""


class ProtocolError(ToolkitError):
    """Malformed [DET]/[EMB] pairing in a generated token stream."""


class Truncated(ToolkitError):
    """Generation hit the step limit before the [DET]/[EMB] pair completed."""


class ZeroVector(ToolkitError):
    """A projected vector has (numerically) zero norm; cosine similarity undefined."""


class UnknownPromptId(ToolkitError):
    """Prediction references a prompt_id absent from the ground-truth file."""
