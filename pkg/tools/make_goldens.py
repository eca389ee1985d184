"""Regenerate the golden byte-for-byte artifacts under tests/golden/.

Run from the repository root:

    python3 tools/make_goldens.py

The outputs are deterministic functions of fixed seeds; the golden tests
re-derive them in-process and compare bytes, so this script only needs to
run again if the container formats themselves change.
"""

from __future__ import annotations

from pathlib import Path

from descrel import dataio
from descrel.pack import make_demo_pack, save_pack

GOLDEN = Path(__file__).resolve().parent.parent / "tests" / "golden"

PACK_ARGS = dict(relations=6, dim=32, seed=7, block=3)
FIXTURE_ARGS = dict(images=2, pairs_per_image=2, patches=2, seed=42)


def main() -> None:
    pack = make_demo_pack(**PACK_ARGS)
    save_pack(pack, GOLDEN / "pack")
    fixture = dataio.synthesize(pack, **FIXTURE_ARGS)
    dataio.save_fixture(fixture, GOLDEN / "fixture")
    for sub in ("pack", "fixture"):
        for f in sorted((GOLDEN / sub).iterdir()):
            print(f"{f.relative_to(GOLDEN.parent.parent)}: {f.stat().st_size} bytes")


if __name__ == "__main__":
    main()
