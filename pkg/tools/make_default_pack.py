#!/usr/bin/env python3
"""Builds the description pack shipped with the package.

21 hand-written scene-cue pairs (raw / opposite) are linked to the standard
50-relation scene-graph vocabulary through a hand-authored association
table. Text embeddings are seeded random unit vectors: placeholders with
the right shape contract, meant to be regenerated from a real text encoder
(see the extractor package) for any use beyond tests and demos.

Run from the repository root:

    python3 tools/make_default_pack.py
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from descrel import pack as pack_mod  # noqa: E402

SEED = 824
DIM = 512

# (tag, raw cue, opposite cue): tags are mnemonic only, order defines index
CUES: list[tuple[str, str, str]] = [
    ("overlap", "the two regions overlap, one partly covering the other",
     "the two regions are fully separated by empty space"),
    ("contact", "the objects are in direct physical contact",
     "the objects do not touch at any point"),
    ("higher", "one object sits clearly higher than the other",
     "both objects rest at the same height"),
    ("enclosed", "one object is enclosed within the extent of the other",
     "neither object is inside the other"),
    ("dangling", "an object dangles with its weight held from above",
     "every object is supported from below"),
    ("bearing", "one object bears the weight of another resting on it",
     "no object carries the weight of another"),
    ("fastened", "the objects are fixed together by a fastener or mount",
     "the objects are loose and unattached"),
    ("road", "the scene lies on a road or paved ground",
     "no road or paved ground appears in the scene"),
    ("level", "the arrangement rests level and balanced without tilting",
     "the arrangement leans or tips at a visible angle"),
    ("outdoor", "the setting is open-air and outdoors",
     "the setting is an enclosed indoor space"),
    ("plants", "plants or foliage grow in the scene",
     "the scene is bare of any plant growth"),
    ("urban", "buildings or street structures shape the surroundings",
     "the surroundings show no built structures"),
    ("agent", "the action comes from an animal or a person",
     "no animal or person takes part"),
    ("handling", "the participants engage through touch or handling",
     "the participants act without touching each other"),
    ("wielding", "a hand-held object is being operated or wielded",
     "nothing is being operated or wielded"),
    ("food", "food is being consumed or bitten",
     "no food is being consumed"),
    ("moving", "something is moving through the scene",
     "everything in the scene holds still"),
    ("gazing", "a face or gaze is turned toward something",
     "no face or gaze is directed at anything"),
    ("teeth", "flat or sharp teeth are visible",
     "no teeth can be seen"),
    ("curved", "a body curves in a bent, winding posture",
     "every body is straight and rigid"),
    ("writing", "written words or symbols are displayed",
     "no writing or symbols appear anywhere"),
]

TAGS = [c[0] for c in CUES]

# relation -> (positive cue tags, negative cue tags); order follows the
# split file: 35 base relations, then 15 novel ones
ASSOCIATIONS: dict[str, tuple[list[str], list[str]]] = {
    # base
    "watching": (["agent", "gazing"], ["contact"]),
    "of": (["enclosed"], []),
    "hanging from": (["dangling"], ["bearing"]),
    "to": (["fastened"], []),
    "near": ([], ["overlap", "enclosed"]),
    "carrying": (["contact", "bearing", "agent", "handling"], []),
    "parked on": (["bearing", "road", "level"], ["moving"]),
    "covered in": (["overlap", "contact"], []),
    "wearing": (["contact", "enclosed", "agent"], []),
    "sitting on": (["contact", "bearing", "level", "agent"], []),
    "made of": (["enclosed"], ["agent"]),
    "on": (["contact", "higher", "bearing"], []),
    "standing on": (["contact", "bearing", "level", "agent"], ["dangling"]),
    "from": (["moving"], []),
    "in front of": (["overlap"], ["contact"]),
    "belonging to": (["enclosed", "agent"], []),
    "between": ([], ["overlap", "contact", "enclosed"]),
    "above": (["higher"], ["contact"]),
    "attached to": (["contact", "fastened"], ["moving"]),
    "walking on": (["contact", "bearing", "agent", "moving"], []),
    "behind": (["overlap"], ["handling"]),
    "in": (["overlap", "enclosed"], []),
    "holding": (["contact", "bearing", "agent", "handling"], []),
    "against": (["contact"], ["level"]),
    "has": (["enclosed"], []),
    "looking at": (["agent", "gazing"], ["contact"]),
    "under": (["higher"], ["contact", "bearing"]),
    "at": (["contact"], ["enclosed"]),
    "playing": (["agent", "handling", "moving"], []),
    "riding": (["contact", "higher", "bearing", "agent", "moving"], []),
    "covering": (["overlap", "contact"], ["agent"]),
    "for": (["wielding"], []),
    "with": (["contact"], []),
    "wears": (["contact", "enclosed", "agent"], ["moving"]),
    "over": (["overlap", "higher"], ["bearing"]),
    # novel
    "flying in": (["outdoor", "agent", "moving"], ["contact", "bearing"]),
    "painted on": (["overlap", "contact", "writing"], ["moving"]),
    "mounted on": (["contact", "higher", "fastened"], ["moving"]),
    "using": (["agent", "handling", "wielding"], []),
    "and": ([], ["overlap", "enclosed"]),
    "on back of": (["contact", "higher", "bearing", "agent"], []),
    "growing on": (["contact", "plants"], ["moving"]),
    "lying on": (["contact", "bearing", "agent"], ["moving"]),
    "along": (["road"], ["overlap"]),
    "part of": (["enclosed", "fastened"], []),
    "eating": (["agent", "handling", "food", "teeth"], []),
    "laying on": (["contact", "bearing", "agent", "curved"], ["moving"]),
    "walking in": (["enclosed", "outdoor", "agent", "moving"], []),
    "across": (["road", "moving"], []),
    "says": (["writing"], ["moving"]),
}


def main() -> None:
    splits = json.loads((ROOT / "src/descrel/data/vg_splits.json").read_text())
    relations = splits["base"] + splits["novel"]
    assert sorted(relations) == sorted(ASSOCIATIONS), "vocabulary mismatch"

    n = len(CUES)
    tag_index = {t: i for i, t in enumerate(TAGS)}
    rows = np.zeros((len(relations), n), dtype=np.int8)
    for r, name in enumerate(relations):
        pos, neg = ASSOCIATIONS[name]
        for t in pos:
            rows[r, tag_index[t]] = 1
        for t in neg:
            rows[r, tag_index[t]] = -1

    rng = np.random.default_rng(SEED)
    raw = pack_mod.unit_rows(rng, n, DIM)
    opp = pack_mod.unit_rows(rng, n, DIM)
    texts = [(c[1], c[2]) for c in CUES]
    provenance = {
        "kind": "default",
        "seed": SEED,
        "cue_tags": TAGS,
        "embeddings": "seeded-random-placeholder",
        "note": ("hand-authored cue texts and association table; embeddings "
                 "are placeholders, regenerate with a text encoder before "
                 "scoring real images"),
    }
    p = pack_mod.build_pack(relations, rows, texts, raw, opp, provenance)
    out = ROOT / "src/descrel/data/default_pack"
    pack_mod.save_pack(p, out)
    print(f"wrote {out}: {p.relation_count} relations x "
          f"{p.description_count} description pairs, dim {p.embedding_dim}")


if __name__ == "__main__":
    main()
