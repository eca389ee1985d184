"""Exception taxonomy for the engine.

Every error raised on purpose derives from EngineError so callers (and the
CLI) can catch one base class and map it to a nonzero exit code.
"""

from __future__ import annotations


class EngineError(Exception):
    """Base class for all deliberate failures."""


class DimensionError(EngineError):
    """Shapes do not line up for an operation. Message names both shapes."""


class FormatError(EngineError):
    """A file on disk is malformed. Carries a byte offset when known."""

    def __init__(self, message: str, *, path: str | None = None,
                 offset: int | None = None):
        self.path = path
        self.offset = offset
        parts = [message]
        if path is not None:
            parts.append(f"path={path}")
        if offset is not None:
            parts.append(f"byte_offset={offset}")
        super().__init__(" | ".join(parts))


class ValidationError(EngineError):
    """Structurally readable data violates a semantic invariant."""


class DegenerateInputError(EngineError):
    """An input is empty or all-zero where the math requires otherwise."""


class ConfigError(EngineError):
    """A configuration value is out of its documented range."""


class DataLeakError(EngineError):
    """A training sample's ground truth lies outside the allowed base set."""


class UnknownRelationError(EngineError):
    """A relation name was requested that the pack does not define."""


class ContractError(EngineError):
    """An internal API was called in a way its contract forbids."""
