"""Exception hierarchy for the extraction pipeline.

Schema-level problems (malformed manifests, impossible boxes, unknown
relation labels) abort the whole run; per-item problems (an unreadable or
undersized image) are collected and skipped unless strict mode is on.
"""


class ExtractionError(Exception):
    """Base class for everything this package raises on purpose."""


class ManifestError(ExtractionError):
    """A request or pack-text manifest is malformed."""


class BoxError(ExtractionError):
    """A region box has non-positive area or impossible coordinates."""


class ImageError(ExtractionError):
    """An image cannot be read or does not contain its boxes."""
