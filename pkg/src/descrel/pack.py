"""Description packs: raw/opposite text pairs plus a relation association table.

A pack bundles N description pairs (each a "raw" scene cue and its opposite,
with one precomputed unit-norm text embedding per side) and an R x N
association matrix over relation names with entries in {-1, 0, +1}: +1 means
the description supports the relation, -1 that it opposes it, 0 that it is
irrelevant.

On disk a pack is a directory:

    pack.json       manifest (texts, relation names, association rows, dims)
    embeddings.bin  SSDPACK1 blob; N raw rows then N opposite rows, float32

Embeddings are trusted downstream (never re-normalized), so loading and
saving both enforce unit norm within UNIT_NORM_TOL.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np

from .containers import PACK_MAGIC, read_blob, read_json, write_blob, write_json
from .errors import FormatError, UnknownRelationError, ValidationError

UNIT_NORM_TOL = 1e-4
PACK_VERSION = 1

MANIFEST_NAME = "pack.json"
BLOB_NAME = "embeddings.bin"


@dataclass(frozen=True)
class DescriptionPair:
    """One scene cue and its opposite, with unit-norm text embeddings."""
    raw_text: str
    opposite_text: str
    raw_embedding: np.ndarray
    opposite_embedding: np.ndarray


@dataclass(frozen=True)
class AssociationMatrix:
    """R x N table of {-1, 0, +1} links from relations to description pairs."""
    relation_names: tuple[str, ...]
    values: np.ndarray  # int8, shape (R, N), read-only

    @property
    def relation_count(self) -> int:
        return len(self.relation_names)

    @property
    def description_count(self) -> int:
        return self.values.shape[1]

    def row(self, index: int) -> np.ndarray:
        return self.values[index]


@dataclass(frozen=True)
class DescriptionPack:
    pairs: tuple[DescriptionPair, ...]
    associations: AssociationMatrix
    embedding_dim: int
    provenance: dict = field(default_factory=dict)

    @property
    def relation_names(self) -> tuple[str, ...]:
        return self.associations.relation_names

    @property
    def relation_count(self) -> int:
        return self.associations.relation_count

    @property
    def description_count(self) -> int:
        return len(self.pairs)

    def relation_index(self, name: str) -> int:
        try:
            return self.relation_names.index(name)
        except ValueError:
            raise UnknownRelationError(
                f"relation {name!r} is not in this pack") from None

    @cached_property
    def raw_matrix(self) -> np.ndarray:
        """(N, D) float32 matrix of raw-side embeddings."""
        m = np.stack([p.raw_embedding for p in self.pairs]).astype(np.float32)
        m.setflags(write=False)
        return m

    @cached_property
    def opposite_matrix(self) -> np.ndarray:
        """(N, D) float32 matrix of opposite-side embeddings."""
        m = np.stack([p.opposite_embedding for p in self.pairs]).astype(np.float32)
        m.setflags(write=False)
        return m


def _frozen(arr: np.ndarray, dtype) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=dtype)
    out.setflags(write=False)
    return out


def build_pack(relation_names, association_rows, pair_texts, raw_embeddings,
               opposite_embeddings, provenance=None) -> DescriptionPack:
    """Assemble and validate a pack from plain arrays.

    pair_texts: sequence of (raw_text, opposite_text). Embedding arrays are
    (N, D). association_rows is (R, N) with entries in {-1, 0, +1}.
    """
    raw = np.asarray(raw_embeddings, dtype=np.float32)
    opp = np.asarray(opposite_embeddings, dtype=np.float32)
    assoc = np.asarray(association_rows)
    names = tuple(str(n) for n in relation_names)
    texts = [(str(a), str(b)) for a, b in pair_texts]

    if raw.ndim != 2 or opp.shape != raw.shape:
        raise ValidationError(
            f"embedding arrays must share an (N, D) shape, got {raw.shape} "
            f"and {opp.shape}")
    n, d = raw.shape
    if len(texts) != n:
        raise ValidationError(f"{len(texts)} text pairs but {n} embedding rows")
    if assoc.ndim != 2 or assoc.shape != (len(names), n):
        raise ValidationError(
            f"association matrix shape {assoc.shape} does not match "
            f"{len(names)} relations x {n} descriptions")

    pairs = tuple(
        DescriptionPair(t[0], t[1], _frozen(raw[i], np.float32),
                        _frozen(opp[i], np.float32))
        for i, t in enumerate(texts))
    matrix = AssociationMatrix(names, _frozen(assoc, np.int8))
    pack = DescriptionPack(pairs, matrix, d, dict(provenance or {}))
    validate_pack(pack)
    return pack


def validate_pack(pack: DescriptionPack) -> None:
    """Raise ValidationError on the first semantic violation found."""
    names = pack.relation_names
    if len(names) == 0:
        raise ValidationError("pack has no relations")
    if len(set(names)) != len(names):
        dupes = sorted({n for n in names if names.count(n) > 1})
        raise ValidationError(f"duplicate relation names: {dupes}")
    for name in names:
        if not name.strip():
            raise ValidationError("blank relation name")

    if pack.description_count == 0:
        raise ValidationError("pack has no description pairs")
    for i, pair in enumerate(pack.pairs):
        if not pair.raw_text.strip() or not pair.opposite_text.strip():
            raise ValidationError(f"description pair {i} has a blank text")
        if pair.raw_text == pair.opposite_text:
            raise ValidationError(
                f"description pair {i} has identical raw and opposite texts")
        for side, emb in (("raw", pair.raw_embedding),
                          ("opposite", pair.opposite_embedding)):
            if emb.shape != (pack.embedding_dim,):
                raise ValidationError(
                    f"pair {i} {side} embedding has shape {emb.shape}, "
                    f"expected ({pack.embedding_dim},)")
            if not np.all(np.isfinite(emb)):
                raise ValidationError(f"pair {i} {side} embedding is not finite")
            norm = float(np.linalg.norm(emb.astype(np.float64)))
            if abs(norm - 1.0) > UNIT_NORM_TOL:
                raise ValidationError(
                    f"pair {i} {side} embedding norm {norm:.6f} is not unit "
                    f"(tolerance {UNIT_NORM_TOL})")

    values = pack.associations.values
    if values.shape != (len(names), pack.description_count):
        raise ValidationError(
            f"association matrix shape {values.shape} does not match "
            f"{len(names)} relations x {pack.description_count} descriptions")
    bad = ~np.isin(values, (-1, 0, 1))
    if bad.any():
        r, c = np.argwhere(bad)[0]
        raise ValidationError(
            f"association entry for relation {names[r]!r}, description {c} "
            f"is {int(values[r, c])}, allowed values are -1, 0, +1")
    zero_rows = np.flatnonzero(~values.astype(bool).any(axis=1))
    if zero_rows.size:
        raise ValidationError(
            f"relation {names[zero_rows[0]]!r} has an all-zero association row")


def save_pack(pack: DescriptionPack, path: str | Path) -> None:
    """Write pack.json + embeddings.bin into a directory (created if needed)."""
    validate_pack(pack)
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "version": PACK_VERSION,
        "embedding_dim": pack.embedding_dim,
        "relations": list(pack.relation_names),
        "descriptions": [
            {"raw": p.raw_text, "opposite": p.opposite_text} for p in pack.pairs
        ],
        "associations": [
            [int(v) for v in row] for row in pack.associations.values
        ],
        "provenance": pack.provenance,
    }
    write_json(out / MANIFEST_NAME, manifest)
    floats = np.concatenate([pack.raw_matrix, pack.opposite_matrix], axis=0)
    write_blob(out / BLOB_NAME, PACK_MAGIC, pack.description_count,
               pack.embedding_dim, floats)


def load_pack(path: str | Path) -> DescriptionPack:
    """Load and validate a pack directory."""
    root = Path(path)
    manifest = read_json(root / MANIFEST_NAME)
    if not isinstance(manifest, dict):
        raise FormatError("manifest is not an object", path=str(root / MANIFEST_NAME))
    version = manifest.get("version")
    if version != PACK_VERSION:
        raise FormatError(f"unsupported pack version {version!r}",
                          path=str(root / MANIFEST_NAME))
    try:
        dim = int(manifest["embedding_dim"])
        relations = manifest["relations"]
        descriptions = manifest["descriptions"]
        associations = manifest["associations"]
        provenance = manifest.get("provenance", {})
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"manifest missing or mistyped field: {e}",
                          path=str(root / MANIFEST_NAME)) from None

    n = len(descriptions)
    count, blob_dim, flat = read_blob(root / BLOB_NAME, PACK_MAGIC,
                                      expected_floats=2 * n * dim)
    if count != n:
        raise ValidationError(
            f"blob header count {count} but manifest lists {n} descriptions")
    if blob_dim != dim:
        raise ValidationError(
            f"blob header dim {blob_dim} but manifest says {dim}")
    mat = flat.reshape(2 * n, dim) if n else flat.reshape(0, dim)
    texts = []
    for i, entry in enumerate(descriptions):
        if not isinstance(entry, dict) or "raw" not in entry or "opposite" not in entry:
            raise FormatError(f"description entry {i} lacks raw/opposite texts",
                              path=str(root / MANIFEST_NAME))
        texts.append((entry["raw"], entry["opposite"]))
    return build_pack(relations, associations, texts, mat[:n], mat[n:],
                      provenance=provenance)


def restrict_to_relations(pack: DescriptionPack, names) -> DescriptionPack:
    """Pack with only the named relations, rows ordered as given.

    Description pairs are untouched; restricting to every name in the
    original order reproduces the original matrix.
    """
    names = [str(n) for n in names]
    if not names:
        raise ValidationError("cannot restrict a pack to zero relations")
    if len(set(names)) != len(names):
        raise ValidationError(f"duplicate relation names in restriction: {names}")
    rows = [pack.relation_index(n) for n in names]
    matrix = AssociationMatrix(
        tuple(names), _frozen(pack.associations.values[rows], np.int8))
    return DescriptionPack(pack.pairs, matrix, pack.embedding_dim,
                           dict(pack.provenance))


def unit_rows(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    """Random rows drawn from a normal and normalized in float64."""
    rows = rng.standard_normal((count, dim))
    rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    return rows.astype(np.float32)


def make_demo_pack(relations: int = 6, dim: int = 32, seed: int = 7,
                   block: int = 3) -> DescriptionPack:
    """Small synthetic pack with a planted block structure.

    The first relations each own a disjoint block of `block` descriptions
    with association pattern (+1, +1, ..., -1). The last `relations // 3`
    relations reuse those blocks: their rows are differences of two earlier
    rows, so entries stay in {-1, 0, +1} while the row is linearly entailed
    by the block rows. That makes held-out relations reachable for an
    adapter trained only on the block relations.
    """
    if relations < 3:
        raise ValidationError(f"demo pack needs >= 3 relations, got {relations}")
    if block < 2:
        raise ValidationError(f"demo pack needs block >= 2, got {block}")
    n_extra = relations // 3
    n_core = relations - n_extra
    n = block * n_core
    if dim < n:
        raise ValidationError(
            f"demo pack dim {dim} too small for {n} descriptions")

    assoc = np.zeros((relations, n), dtype=np.int8)
    pattern = np.ones(block, dtype=np.int8)
    pattern[-1] = -1
    for r in range(n_core):
        assoc[r, r * block:(r + 1) * block] = pattern
    for j in range(n_extra):
        assoc[n_core + j] = assoc[2 * j] - assoc[2 * j + 1]

    rng = np.random.default_rng(seed)
    raw = unit_rows(rng, n, dim)
    opp = unit_rows(rng, n, dim)
    names = [f"relation_{i:02d}" for i in range(relations)]
    texts = [(f"demo cue {i:02d} holds in the scene",
              f"demo cue {i:02d} is absent from the scene") for i in range(n)]
    provenance = {
        "kind": "demo",
        "seed": seed,
        "note": ("synthetic embeddings; trailing relation rows are "
                 "differences of leading block rows"),
    }
    return build_pack(names, assoc, texts, raw, opp, provenance)


def default_pack_path() -> Path:
    """Directory of the pack shipped inside the package."""
    return Path(__file__).resolve().parent / "data" / "default_pack"


def load_default_pack() -> DescriptionPack:
    return load_pack(default_pack_path())
