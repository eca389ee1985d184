"""Turn extraction requests into an on-disk dataset fixture.

For every request the pipeline crops three regions from the image — the
subject box, the object box, and their union — and encodes them with the
frozen backbone. Subject and object crops supply the CLS + patch features
the trainable adapter consumes; the union crop supplies the per-relation
similarity row (cosine between its normalized CLS embedding and the
normalized text embedding of each relation name), which downstream training
uses to set per-sample margins and baseline rankings.

The two directional marker embeddings are the text encodings of fixed
role prompts ("a photo of subject" / "a photo of object").

Per-item failures (unreadable image, box outside the image) are skipped and
reported unless `strict=True`; schema-level failures always abort. The
emitted directory is a standard fixture the engine loads and validates.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from descrel.adapter import DirectionalMarkers, RegionFeatures
from descrel.dataio import build_fixture, save_fixture
from descrel.trainer import PairSample

from .encoder import OBJECT_PROMPT, SUBJECT_PROMPT, ClipEncoder
from .errors import ImageError
from .manifest import ExtractionRequest, RequestSet

DEFAULT_RELATION_TEMPLATE = "a photo of {name}"


@dataclass(frozen=True)
class SkippedItem:
    """One request dropped from a lenient run, with the reason."""
    index: int
    image: str
    reason: str


@dataclass(frozen=True)
class ExtractionReport:
    """What an extraction run produced and what it had to drop."""
    out_dir: Path
    sample_count: int
    relation_count: int
    patch_count: int
    embedding_dim: int
    skipped: tuple[SkippedItem, ...]


def load_region_crops(request: ExtractionRequest
                      ) -> tuple[Image.Image, Image.Image, Image.Image]:
    """Open one image and cut the subject, object, and union crops."""
    try:
        with Image.open(request.image_path) as handle:
            image = handle.convert("RGB")
    except (OSError, ValueError, Image.DecompressionBombError) as exc:
        raise ImageError(f"cannot read image {request.image_path}: {exc}") from exc
    width, height = image.size
    for role, box in (("subject", request.subject_box),
                      ("object", request.object_box)):
        if not box.fits_in(width, height):
            raise ImageError(
                f"{role} box {box.bounds} exceeds image size {width}x{height} "
                f"({request.image_path})")
    union = request.subject_box.union(request.object_box)
    return (image.crop(request.subject_box.bounds),
            image.crop(request.object_box.bounds),
            image.crop(union.bounds))


def extract_pairs(request_set: RequestSet, encoder: ClipEncoder,
                  out_dir: str | Path, *, batch_size: int = 16,
                  strict: bool = False,
                  relation_template: str = DEFAULT_RELATION_TEMPLATE
                  ) -> ExtractionReport:
    """Encode every request and write the resulting fixture to out_dir."""
    kept: list[ExtractionRequest] = []
    crops: list[Image.Image] = []
    skipped: list[SkippedItem] = []
    for i, request in enumerate(request_set.requests):
        try:
            subject, obj, union = load_region_crops(request)
        except ImageError as exc:
            if strict:
                raise
            skipped.append(SkippedItem(index=i, image=str(request.image_path),
                                       reason=str(exc)))
            continue
        kept.append(request)
        crops.extend((subject, obj, union))
    if not kept:
        raise ImageError(
            f"no usable requests: all {len(request_set.requests)} failed")

    marker_rows = encoder.encode_texts([SUBJECT_PROMPT, OBJECT_PROMPT])
    markers = DirectionalMarkers(subject=marker_rows[0], object=marker_rows[1])
    relation_texts = [relation_template.format(name=name)
                      for name in request_set.relations]
    relation_embeddings = encoder.encode_texts(relation_texts)

    cls, patches = encoder.encode_regions(crops, batch_size=batch_size)
    samples = []
    for i, request in enumerate(kept):
        subject_cls, object_cls, union_cls = cls[3 * i: 3 * i + 3]
        union_unit = union_cls / np.linalg.norm(union_cls)
        sims = (relation_embeddings @ union_unit).astype(np.float32)
        samples.append(PairSample(
            subject=RegionFeatures(cls=subject_cls, patches=patches[3 * i]),
            object=RegionFeatures(cls=object_cls, patches=patches[3 * i + 1]),
            image_id=request.image_id,
            gt_relation=request_set.relation_index(request.relation),
            clip_relation_sims=sims))

    fixture = build_fixture(
        samples, request_set.relations, markers,
        provenance={
            "source": "clip-extraction",
            "model": encoder.model_id,
            "relation_template": relation_template,
            "requested": len(request_set.requests),
            "skipped": len(skipped),
        })
    save_fixture(fixture, out_dir)
    return ExtractionReport(
        out_dir=Path(out_dir),
        sample_count=len(samples),
        relation_count=len(request_set.relations),
        patch_count=fixture.patch_count,
        embedding_dim=fixture.feature_dim,
        skipped=tuple(skipped))
