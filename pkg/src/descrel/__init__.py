"""descrel: open-vocabulary relation scoring over description pairs.

A frozen image-text backbone supplies region embeddings and per-description
text embeddings; this package scores subject-object pairs against a bank of
raw/opposite scene descriptions, trains a small cross-attention adapter over
the region features, and evaluates recall over predicate splits.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    ContractError,
    DataLeakError,
    DegenerateInputError,
    DimensionError,
    EngineError,
    FormatError,
    UnknownRelationError,
    ValidationError,
)

__all__ = [
    "__version__",
    "EngineError",
    "DimensionError",
    "FormatError",
    "ValidationError",
    "DegenerateInputError",
    "ConfigError",
    "DataLeakError",
    "UnknownRelationError",
    "ContractError",
]
