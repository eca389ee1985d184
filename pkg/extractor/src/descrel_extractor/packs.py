"""Embed description texts into an on-disk pack.

A pack spec is one JSON file pairing a relation vocabulary (with per-
description association values) and the description texts themselves:

    {
      "relations": [
        {"name": "above", "associations": [1, 0, -1, ...]},
        ...
      ],
      "descriptions": [
        {"raw": "the first object rests on top of the second",
         "opposite": "the first object hangs below the second"},
        ...
      ]
    }

Association values are -1 (the description contradicts the relation),
0 (they can coexist), or +1 (the relation implies the description). Each
relation's association list must cover every description, in order.

Embedding writes both sides of every description through the text encoder,
L2-normalizes the rows, and saves a standard pack directory the engine
loads directly. This JSON shape is also exactly what the persona prompt
(see `prompts`) asks an external language model to produce, so a model's
answer can be embedded without reshaping.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from descrel.pack import DescriptionPack, build_pack, save_pack

from .encoder import ClipEncoder
from .errors import ManifestError


@dataclass(frozen=True)
class PackSpec:
    """Parsed pack texts: vocabulary, association rows, description pairs."""
    relations: tuple[str, ...]
    association_rows: np.ndarray  # (R, N) int8 in {-1, 0, +1}
    descriptions: tuple[tuple[str, str], ...]  # (raw, opposite) per entry


def parse_pack_spec(data: dict) -> PackSpec:
    """Validate a decoded pack spec."""
    if not isinstance(data, dict):
        raise ManifestError(f"pack spec must be an object, got {type(data).__name__}")
    descriptions = data.get("descriptions")
    if not isinstance(descriptions, list) or not descriptions:
        raise ManifestError("'descriptions' must be a non-empty list")
    texts = []
    for i, entry in enumerate(descriptions):
        if (not isinstance(entry, dict) or not isinstance(entry.get("raw"), str)
                or not isinstance(entry.get("opposite"), str)):
            raise ManifestError(
                f"description {i}: must be an object with 'raw' and "
                "'opposite' strings")
        if not entry["raw"].strip() or not entry["opposite"].strip():
            raise ManifestError(f"description {i}: texts must be non-empty")
        texts.append((entry["raw"], entry["opposite"]))

    relations = data.get("relations")
    if not isinstance(relations, list) or not relations:
        raise ManifestError("'relations' must be a non-empty list")
    names, rows = [], []
    for i, entry in enumerate(relations):
        if not isinstance(entry, dict) or not isinstance(entry.get("name"), str):
            raise ManifestError(f"relation {i}: must be an object with a 'name'")
        values = entry.get("associations")
        if not isinstance(values, list) or len(values) != len(texts):
            raise ManifestError(
                f"relation {i} ({entry['name']!r}): 'associations' must list "
                f"one value per description ({len(texts)})")
        if not all(isinstance(v, int) and not isinstance(v, bool)
                   and v in (-1, 0, 1) for v in values):
            raise ManifestError(
                f"relation {i} ({entry['name']!r}): association values must "
                "be -1, 0, or 1")
        names.append(entry["name"])
        rows.append(values)
    if len(set(names)) != len(names):
        raise ManifestError("'relations' contains duplicate names")
    return PackSpec(relations=tuple(names),
                    association_rows=np.asarray(rows, dtype=np.int8),
                    descriptions=tuple(texts))


def load_pack_spec(path: str | Path) -> PackSpec:
    """Read and validate a pack spec from disk."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ManifestError(f"cannot read pack spec {path}: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ManifestError(f"pack spec {path} is not valid JSON: {exc}") from exc
    return parse_pack_spec(data)


def embed_pack_texts(spec: PackSpec, encoder: ClipEncoder,
                     out_dir: str | Path, *, batch_size: int = 64
                     ) -> DescriptionPack:
    """Encode both sides of every description and write the pack."""
    raw = encoder.encode_texts([t[0] for t in spec.descriptions],
                               batch_size=batch_size)
    opposite = encoder.encode_texts([t[1] for t in spec.descriptions],
                                    batch_size=batch_size)
    pack = build_pack(
        spec.relations, spec.association_rows, spec.descriptions,
        raw, opposite,
        provenance={"source": "clip-extraction", "model": encoder.model_id})
    save_pack(pack, out_dir)
    return pack
