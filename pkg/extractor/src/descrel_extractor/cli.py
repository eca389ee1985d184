"""Command-line surface: region extraction, pack embedding, prompt rendering.

Exit codes mirror the engine CLI: 0 success, 1 extraction or data failure,
2 usage error. Failures print one machine-parsable line to stderr:

    error: <ErrorClass>: <message>
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from descrel.errors import EngineError

from .encoder import ClipEncoder
from .errors import ExtractionError
from .extract import DEFAULT_RELATION_TEMPLATE, extract_pairs
from .manifest import load_requests
from .packs import embed_pack_texts, load_pack_spec
from .prompts import DEFAULT_PER_PERSONA, render_prompt


def _add_model_args(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--model", required=True,
                     help="checkpoint directory or model id")
    sub.add_argument("--device", default="cpu",
                     help="torch device (default cpu)")
    sub.add_argument("--batch-size", type=int, default=16,
                     help="images or texts per forward pass")


def cmd_extract(args) -> int:
    requests = load_requests(args.requests)
    encoder = ClipEncoder.from_checkpoint(args.model, device=args.device)
    report = extract_pairs(requests, encoder, args.out,
                           batch_size=args.batch_size, strict=args.strict,
                           relation_template=args.relation_template)
    for item in report.skipped:
        print(f"skipped pair {item.index}: {item.reason}", file=sys.stderr)
    print(f"wrote fixture {report.out_dir}: {report.sample_count} samples, "
          f"{report.relation_count} relations, {report.patch_count} patches "
          f"per region, dim {report.embedding_dim}"
          + (f", {len(report.skipped)} skipped" if report.skipped else ""))
    return 0


def cmd_embed_pack(args) -> int:
    spec = load_pack_spec(args.texts)
    encoder = ClipEncoder.from_checkpoint(args.model, device=args.device)
    pack = embed_pack_texts(spec, encoder, args.out,
                            batch_size=args.batch_size)
    print(f"wrote pack {args.out}: {pack.relation_count} relations, "
          f"{pack.description_count} description pairs, "
          f"dim {pack.embedding_dim}")
    return 0


def cmd_prompt(args) -> int:
    if args.relations:
        names = [n for n in args.relations.split(",") if n]
    else:
        names = list(load_requests(args.requests).relations)
    text = render_prompt(names, per_persona=args.per_persona)
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote prompt for {len(names)} relations to {args.out}")
    else:
        print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="descrel-extract",
        description="Produce description packs and region-feature fixtures "
                    "from images with a frozen CLIP checkpoint.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract",
                       help="encode subject/object pairs into a fixture")
    p.add_argument("--requests", required=True,
                   help="JSON manifest of images, boxes, and relations")
    p.add_argument("--out", required=True, help="fixture directory to write")
    _add_model_args(p)
    p.add_argument("--strict", action="store_true",
                   help="abort on the first unreadable image or bad box")
    p.add_argument("--relation-template", default=DEFAULT_RELATION_TEMPLATE,
                   help="text rendered per relation name for similarity rows "
                        f"(default {DEFAULT_RELATION_TEMPLATE!r})")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("embed-pack",
                       help="encode description texts into a pack")
    p.add_argument("--texts", required=True,
                   help="JSON spec of relations, associations, descriptions")
    p.add_argument("--out", required=True, help="pack directory to write")
    _add_model_args(p)
    p.set_defaults(func=cmd_embed_pack)

    p = sub.add_parser("prompt",
                       help="render the description-generation prompt")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--relations",
                        help="comma-separated relation vocabulary")
    source.add_argument("--requests",
                        help="take the vocabulary from a request manifest")
    p.add_argument("--per-persona", type=int, default=DEFAULT_PER_PERSONA,
                   help="statements requested per observer role "
                        f"(default {DEFAULT_PER_PERSONA})")
    p.add_argument("--out", help="write the prompt here instead of stdout")
    p.set_defaults(func=cmd_prompt)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except (ExtractionError, EngineError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
