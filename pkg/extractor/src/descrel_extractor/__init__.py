"""descrel-extractor: produce packs and fixtures from images with CLIP.

The engine package (`descrel`) consumes region features, marker embeddings,
description-pack embeddings, and per-relation similarity rows, all as plain
on-disk containers. This package is the offline producer of those
containers: it crops subject/object/union regions out of images, runs a
frozen CLIP checkpoint over the crops and the description texts, and writes
standard pack and fixture directories. It also ships the prompt template
for regenerating description packs with an external language model.
"""

__version__ = "0.1.0"

from .errors import BoxError, ExtractionError, ImageError, ManifestError

__all__ = [
    "__version__",
    "ExtractionError",
    "ManifestError",
    "BoxError",
    "ImageError",
]
