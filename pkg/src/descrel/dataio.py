"""Dataset fixtures: per-pair region features, ground truths, markers.

A fixture is everything the trainer and evaluator need about one extraction
run: samples (subject/object region features, image id, ground-truth
relation, per-relation clip sims), retrieval groups (one per image by
default), the relation vocabulary, and the two directional marker
embeddings.

Index contract: the fixture's relation list must be a prefix of the pack's
relation list (same names, same order), so one index space serves ground
truths, clip sims, and association rows.

On disk a fixture is a directory:

    data.json     manifest (dims, relation names, sample table, provenance)
    features.bin  SSDDATA1 blob, float32: subject marker (D), object marker
                  (D), then per sample subject cls (D), subject patches
                  (M*D), object cls (D), object patches (M*D), clip sims (R)

The patch count M is uniform across samples within one fixture.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .adapter import DirectionalMarkers, RegionFeatures
from .containers import DATA_MAGIC, read_blob, read_json, write_blob, write_json
from .errors import FormatError, UnknownRelationError, ValidationError
from .metrics import ImageGroup
from .pack import DescriptionPack
from .trainer import PairSample

DATA_VERSION = 1
MANIFEST_NAME = "data.json"
BLOB_NAME = "features.bin"


@dataclass(frozen=True)
class DatasetFixture:
    samples: tuple[PairSample, ...]
    groups: tuple[ImageGroup, ...]
    relation_names: tuple[str, ...]
    markers: DirectionalMarkers
    feature_dim: int
    patch_count: int
    provenance: dict = field(default_factory=dict)

    @property
    def relation_count(self) -> int:
        return len(self.relation_names)


def groups_from_samples(samples) -> tuple[ImageGroup, ...]:
    """One group per image id, ordered by first appearance."""
    order: dict[int, list[int]] = {}
    for i, s in enumerate(samples):
        order.setdefault(int(s.image_id), []).append(i)
    return tuple(ImageGroup(image_id=k, sample_indices=tuple(v))
                 for k, v in order.items())


def build_fixture(samples, relation_names, markers: DirectionalMarkers,
                  provenance=None,
                  groups: tuple[ImageGroup, ...] | None = None) -> DatasetFixture:
    samples = tuple(samples)
    if not samples:
        raise ValidationError("fixture has no samples")
    fixture = DatasetFixture(
        samples=samples,
        groups=groups if groups is not None else groups_from_samples(samples),
        relation_names=tuple(str(n) for n in relation_names),
        markers=markers,
        feature_dim=samples[0].subject.dim,
        patch_count=samples[0].subject.patch_count,
        provenance=dict(provenance or {}))
    validate_fixture(fixture)
    return fixture


def validate_fixture(fixture: DatasetFixture) -> None:
    names = fixture.relation_names
    if not names:
        raise ValidationError("fixture has no relations")
    if len(set(names)) != len(names):
        raise ValidationError("duplicate relation names in fixture")
    if not fixture.samples:
        raise ValidationError("fixture has no samples")
    d, m, r = fixture.feature_dim, fixture.patch_count, len(names)
    if fixture.markers.dim != d:
        raise ValidationError(
            f"marker width {fixture.markers.dim} does not match feature_dim {d}")
    for i, s in enumerate(fixture.samples):
        for label, region in (("subject", s.subject), ("object", s.object)):
            if region.dim != d or region.patch_count != m:
                raise ValidationError(
                    f"sample {i} {label} region is {region.patch_count}x"
                    f"{region.dim}, fixture expects {m}x{d}")
        if s.clip_relation_sims.shape[0] != r:
            raise ValidationError(
                f"sample {i} carries {s.clip_relation_sims.shape[0]} clip sims "
                f"for {r} relations")
    seen = sorted(i for g in fixture.groups for i in g.sample_indices)
    if seen != list(range(len(fixture.samples))):
        raise ValidationError("groups do not partition the sample list")
    for g in fixture.groups:
        for i in g.sample_indices:
            if fixture.samples[i].image_id != g.image_id:
                raise ValidationError(
                    f"sample {i} (image {fixture.samples[i].image_id}) listed "
                    f"under group for image {g.image_id}")


def check_prefix_of_pack(fixture: DatasetFixture, pack: DescriptionPack) -> None:
    """Enforce the shared index space between fixture and pack."""
    if len(fixture.relation_names) > pack.relation_count:
        raise ValidationError(
            f"fixture lists {len(fixture.relation_names)} relations, pack only "
            f"{pack.relation_count}")
    for i, name in enumerate(fixture.relation_names):
        if pack.relation_names[i] != name:
            raise ValidationError(
                f"fixture relation {i} is {name!r} but pack has "
                f"{pack.relation_names[i]!r}; fixture relations must be a "
                f"prefix of the pack's")


def singleton_groups(fixture: DatasetFixture) -> DatasetFixture:
    """Variant where every pair is its own retrieval unit."""
    groups = tuple(ImageGroup(image_id=s.image_id, sample_indices=(i,))
                   for i, s in enumerate(fixture.samples))
    return replace(fixture, groups=groups)


# ------------------------------------------------------------------- disk

def save_fixture(fixture: DatasetFixture, path: str | Path) -> None:
    validate_fixture(fixture)
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "version": DATA_VERSION,
        "feature_dim": fixture.feature_dim,
        "patch_count": fixture.patch_count,
        "relations": list(fixture.relation_names),
        "samples": [{"image_id": int(s.image_id),
                     "gt_relation": int(s.gt_relation)}
                    for s in fixture.samples],
        "provenance": fixture.provenance,
    }
    write_json(out / MANIFEST_NAME, manifest)
    chunks = [fixture.markers.subject.astype(np.float32),
              fixture.markers.object.astype(np.float32)]
    for s in fixture.samples:
        chunks.append(s.subject.cls.astype(np.float32))
        chunks.append(s.subject.patches.astype(np.float32).reshape(-1))
        chunks.append(s.object.cls.astype(np.float32))
        chunks.append(s.object.patches.astype(np.float32).reshape(-1))
        chunks.append(s.clip_relation_sims.astype(np.float32))
    write_blob(out / BLOB_NAME, DATA_MAGIC, len(fixture.samples),
               fixture.feature_dim, np.concatenate(chunks))


def load_fixture(path: str | Path) -> DatasetFixture:
    root = Path(path)
    manifest = read_json(root / MANIFEST_NAME)
    if not isinstance(manifest, dict):
        raise FormatError("manifest is not an object",
                          path=str(root / MANIFEST_NAME))
    if manifest.get("version") != DATA_VERSION:
        raise FormatError(
            f"unsupported fixture version {manifest.get('version')!r}",
            path=str(root / MANIFEST_NAME))
    try:
        d = int(manifest["feature_dim"])
        m = int(manifest["patch_count"])
        relations = [str(x) for x in manifest["relations"]]
        rows = manifest["samples"]
        provenance = manifest.get("provenance", {})
    except (KeyError, TypeError, ValueError) as e:
        raise FormatError(f"manifest missing or mistyped field: {e}",
                          path=str(root / MANIFEST_NAME)) from None
    n, r = len(rows), len(relations)
    per_sample = 2 * d + 2 * m * d + r
    count, blob_dim, flat = read_blob(root / BLOB_NAME, DATA_MAGIC,
                                      expected_floats=2 * d + n * per_sample)
    if count != n:
        raise FormatError(
            f"blob header count {count} but manifest lists {n} samples",
            path=str(root / BLOB_NAME), offset=8)
    if blob_dim != d:
        raise FormatError(
            f"blob header dim {blob_dim} but manifest says {d}",
            path=str(root / BLOB_NAME), offset=12)

    markers = DirectionalMarkers(subject=flat[:d].copy(),
                                 object=flat[d:2 * d].copy())
    samples = []
    cursor = 2 * d
    for i, row in enumerate(rows):
        if not isinstance(row, dict) or "image_id" not in row \
                or "gt_relation" not in row:
            raise FormatError(f"sample entry {i} lacks image_id/gt_relation",
                              path=str(root / MANIFEST_NAME))
        s_cls = flat[cursor:cursor + d]; cursor += d
        s_pat = flat[cursor:cursor + m * d].reshape(m, d); cursor += m * d
        o_cls = flat[cursor:cursor + d]; cursor += d
        o_pat = flat[cursor:cursor + m * d].reshape(m, d); cursor += m * d
        sims = flat[cursor:cursor + r]; cursor += r
        samples.append(PairSample(
            subject=RegionFeatures(cls=s_cls.copy(), patches=s_pat.copy()),
            object=RegionFeatures(cls=o_cls.copy(), patches=o_pat.copy()),
            image_id=int(row["image_id"]),
            gt_relation=int(row["gt_relation"]),
            clip_relation_sims=sims.copy()))
    return build_fixture(samples, relations, markers, provenance)


# ------------------------------------------------------------------- synth

def relation_directions(pack: DescriptionPack) -> np.ndarray:
    """(R, D) unit rows: normalized association-weighted description diffs."""
    diffs = (pack.raw_matrix.astype(np.float64)
             - pack.opposite_matrix.astype(np.float64))
    dirs = pack.associations.values.astype(np.float64) @ diffs
    norms = np.linalg.norm(dirs, axis=1, keepdims=True)
    low = np.flatnonzero(norms[:, 0] < 1e-9)
    if low.size:
        raise ValidationError(
            f"relation {pack.relation_names[low[0]]!r} has a degenerate "
            f"(near-zero) description direction")
    return dirs / norms


def synthesize(pack: DescriptionPack, *, images: int = 24,
               pairs_per_image: int = 3, patches: int = 4,
               spread: float = 0.35, cls_mix: float = 0.0,
               seed: int = 0) -> DatasetFixture:
    """Fixture with a planted signal: each sample's regions scatter around
    its ground-truth relation's description direction.

    Patch rows are direction + spread * noise; cls embeddings mix the
    direction (cls_mix, zero by default) into unit noise, so an untrained
    adapter (whose output is exactly the averaged cls) ranks at chance while
    one that has learned to read the patches does not. Clip sims are cosines
    between the sample's direction and every relation's direction. Ground
    truths cycle through the pack's relations in sample order.
    """
    if images < 1 or pairs_per_image < 1 or patches < 1:
        raise ValidationError("images, pairs_per_image and patches must be >= 1")
    if spread <= 0:
        raise ValidationError(f"spread must be positive, got {spread}")
    rng = np.random.default_rng(seed)
    dirs = relation_directions(pack)
    r, d = dirs.shape
    markers = DirectionalMarkers(subject=_unit(rng, d), object=_unit(rng, d))

    def noisy_region(a: np.ndarray) -> RegionFeatures:
        pat = a[None, :] + spread * rng.standard_normal((patches, d)) / np.sqrt(d)
        g = _unit(rng, d).astype(np.float64)
        cls = cls_mix * a + g
        cls /= np.linalg.norm(cls)
        return RegionFeatures(cls=cls.astype(np.float32),
                              patches=pat.astype(np.float32))

    samples = []
    for i in range(images):
        for j in range(pairs_per_image):
            gt = (i * pairs_per_image + j) % r
            a = dirs[gt]
            sims = (dirs @ a).astype(np.float32)
            samples.append(PairSample(
                subject=noisy_region(a), object=noisy_region(a),
                image_id=i, gt_relation=gt, clip_relation_sims=sims))
    provenance = {
        "kind": "synthetic", "seed": seed, "images": images,
        "pairs_per_image": pairs_per_image, "patches": patches,
        "spread": spread, "cls_mix": cls_mix,
        "low_snr": bool(spread > 10.0),
    }
    return build_fixture(samples, pack.relation_names, markers, provenance)


def _unit(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.standard_normal(dim)
    return (v / np.linalg.norm(v)).astype(np.float32)


# ------------------------------------------------------------------- splits

def define_splits(all_names, novel_names) -> dict[str, list[str]]:
    """Partition a vocabulary into base and novel, preserving order."""
    all_names = [str(n) for n in all_names]
    novel = [str(n) for n in novel_names]
    unknown = [n for n in novel if n not in all_names]
    if unknown:
        raise UnknownRelationError(
            f"novel relations not in the vocabulary: {unknown}")
    if len(set(novel)) != len(novel):
        raise ValidationError("duplicate names in the novel set")
    base = [n for n in all_names if n not in set(novel)]
    if not base:
        raise ValidationError("novel set swallows the whole vocabulary")
    return {"base": base, "novel": novel}


def demo_splits(pack: DescriptionPack, novel_fraction: float = 1 / 3) -> dict:
    """Last round(R * fraction) pack relations become the novel set."""
    if not (0 < novel_fraction < 1):
        raise ValidationError(
            f"novel_fraction must be in (0, 1), got {novel_fraction}")
    r = pack.relation_count
    n_novel = min(r - 1, max(1, round(r * novel_fraction)))
    return define_splits(pack.relation_names,
                         pack.relation_names[r - n_novel:])


def vg_splits() -> dict[str, list[str]]:
    """Predicate splits for the 50-relation scene-graph vocabulary."""
    path = Path(__file__).resolve().parent / "data" / "vg_splits.json"
    obj = read_json(path)
    return {"base": list(obj["base"]), "novel": list(obj["novel"]),
            "semantic": list(obj["semantic"])}
