"""Extraction requests: which image, which two boxes, which relation.

A request manifest is one JSON file:

    {
      "relations": ["above", "below", ...],
      "pairs": [
        {"image": "scenes/0001.png",
         "subject_box": [x1, y1, x2, y2],
         "object_box": [x1, y1, x2, y2],
         "relation": "above",
         "image_id": 0},          # optional
        ...
      ]
    }

Boxes are pixel coordinates with x2 > x1 and y2 > y1 (positive area; checked
here, before any image is opened). Whether a box actually fits inside its
image can only be checked once the image is readable, so that happens during
extraction. Relative image paths resolve against the manifest's directory.
`image_id` defaults to the first-appearance index of the image path, which
is what groups samples into retrieval units downstream.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import BoxError, ManifestError


@dataclass(frozen=True)
class Box:
    """Axis-aligned pixel rectangle, half-open convention [x1, x2) x [y1, y2)."""
    x1: int
    y1: int
    x2: int
    y2: int

    def __post_init__(self):
        if self.x2 <= self.x1 or self.y2 <= self.y1:
            raise BoxError(
                f"box ({self.x1}, {self.y1}, {self.x2}, {self.y2}) has "
                "non-positive area")
        if self.x1 < 0 or self.y1 < 0:
            raise BoxError(
                f"box ({self.x1}, {self.y1}, {self.x2}, {self.y2}) has "
                "negative coordinates")

    @property
    def bounds(self) -> tuple[int, int, int, int]:
        return (self.x1, self.y1, self.x2, self.y2)

    def union(self, other: "Box") -> "Box":
        return Box(min(self.x1, other.x1), min(self.y1, other.y1),
                   max(self.x2, other.x2), max(self.y2, other.y2))

    def fits_in(self, width: int, height: int) -> bool:
        return self.x2 <= width and self.y2 <= height


@dataclass(frozen=True)
class ExtractionRequest:
    """One subject-object pair to extract from one image."""
    image_path: Path
    subject_box: Box
    object_box: Box
    relation: str
    image_id: int


@dataclass(frozen=True)
class RequestSet:
    """A relation vocabulary plus the pairs to extract against it."""
    relations: tuple[str, ...]
    requests: tuple[ExtractionRequest, ...]

    def relation_index(self, name: str) -> int:
        return self.relations.index(name)


def _parse_box(value, where: str) -> Box:
    if (not isinstance(value, (list, tuple)) or len(value) != 4
            or not all(isinstance(c, (int, float)) for c in value)):
        raise ManifestError(f"{where}: box must be [x1, y1, x2, y2] numbers, "
                            f"got {value!r}")
    return Box(*(int(c) for c in value))


def parse_requests(data: dict, base_dir: Path) -> RequestSet:
    """Validate a decoded manifest and resolve it into a RequestSet."""
    if not isinstance(data, dict):
        raise ManifestError(f"manifest must be an object, got {type(data).__name__}")
    relations = data.get("relations")
    if (not isinstance(relations, list) or not relations
            or not all(isinstance(r, str) and r for r in relations)):
        raise ManifestError("'relations' must be a non-empty list of names")
    if len(set(relations)) != len(relations):
        raise ManifestError("'relations' contains duplicate names")
    pairs = data.get("pairs")
    if not isinstance(pairs, list) or not pairs:
        raise ManifestError("'pairs' must be a non-empty list")

    rel_index = {name: i for i, name in enumerate(relations)}
    image_ids: dict[str, int] = {}
    requests = []
    for i, entry in enumerate(pairs):
        where = f"pair {i}"
        if not isinstance(entry, dict):
            raise ManifestError(f"{where}: must be an object")
        for key in ("image", "subject_box", "object_box", "relation"):
            if key not in entry:
                raise ManifestError(f"{where}: missing '{key}'")
        relation = entry["relation"]
        if relation not in rel_index:
            raise ManifestError(
                f"{where}: relation {relation!r} is not in the vocabulary")
        try:
            subject_box = _parse_box(entry["subject_box"], where)
            object_box = _parse_box(entry["object_box"], where)
        except BoxError as exc:
            raise ManifestError(f"{where}: {exc}") from exc
        image = str(entry["image"])
        if "image_id" in entry:
            image_id = entry["image_id"]
            if not isinstance(image_id, int) or image_id < 0:
                raise ManifestError(f"{where}: image_id must be a non-negative "
                                    f"integer, got {image_id!r}")
        else:
            image_id = image_ids.setdefault(image, len(image_ids))
        requests.append(ExtractionRequest(
            image_path=base_dir / image,
            subject_box=subject_box,
            object_box=object_box,
            relation=str(relation),
            image_id=image_id))
    return RequestSet(relations=tuple(relations), requests=tuple(requests))


def load_requests(path: str | Path) -> RequestSet:
    """Read and validate a request manifest from disk."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest {path} is not valid JSON: {exc}") from exc
    return parse_requests(data, path.parent)
