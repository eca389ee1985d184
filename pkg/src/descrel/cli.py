"""Command-line surface: fixture synthesis, validation, training, evaluation,
and per-description score attribution.

Exit codes are a stable contract: 0 success, 1 validation or data failure,
2 usage error. Failures print one machine-parsable line to stderr:

    error: <ErrorClass>: <message>

The environment variable DESCREL_DATA_DIR, when set, provides the default
pack directory for every subcommand that accepts --pack.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import dataio, metrics, trainer
from .adapter import (AdapterDims, checkpoint_id, embed_pair, init_params,
                      load_checkpoint)
from .containers import canonical_json
from .errors import ConfigError, EngineError, FormatError
from .pack import (DescriptionPack, load_default_pack, load_pack,
                   validate_pack)
from .scoring import ScoringConfig, self_normalized_scores
from .trainer import TrainConfig

ENV_DATA_DIR = "DESCREL_DATA_DIR"


def _load_pack_arg(pack_arg: str | None) -> DescriptionPack:
    if pack_arg is not None:
        return load_pack(pack_arg)
    env = os.environ.get(ENV_DATA_DIR)
    if env:
        return load_pack(env)
    return load_default_pack()


def _name_list(raw: str) -> list[str]:
    names = [part.strip() for part in raw.split(",")]
    if any(not n for n in names):
        raise ConfigError(f"empty name in relation list {raw!r}")
    return names


def _split_names(args, pack: DescriptionPack,
                 fixture: dataio.DatasetFixture, key: str) -> list[str]:
    """Resolve the relation subset for train/eval from the flag trio."""
    if getattr(args, "relations", None):
        return _name_list(args.relations)
    if getattr(args, "splits", None):
        from .containers import read_json
        table = read_json(Path(args.splits))
        if not isinstance(table, dict) or key not in table:
            raise FormatError(f"splits file has no {key!r} entry",
                              path=args.splits)
        return [str(n) for n in table[key]]
    if getattr(args, "demo_splits", False):
        return dataio.demo_splits(pack)[key]
    return list(fixture.relation_names)


# ------------------------------------------------------------------ commands

def cmd_synth(args) -> int:
    pack = _load_pack_arg(args.pack)
    fixture = dataio.synthesize(
        pack, images=args.images, pairs_per_image=args.pairs_per_image,
        patches=args.patches, spread=args.spread, cls_mix=args.cls_mix,
        seed=args.seed)
    dataio.save_fixture(fixture, args.out)
    print(f"wrote fixture {args.out}: {len(fixture.samples)} samples, "
          f"{fixture.relation_count} relations, dim {fixture.feature_dim}, "
          f"seed {args.seed}")
    return 0


def cmd_validate(args) -> int:
    pack = _load_pack_arg(args.pack)
    validate_pack(pack)
    print(f"ok: pack with {pack.relation_count} relations, "
          f"{pack.description_count} description pairs, dim {pack.embedding_dim}")
    if args.fixture is not None:
        fixture = dataio.load_fixture(args.fixture)
        dataio.validate_fixture(fixture)
        dataio.check_prefix_of_pack(fixture, pack)
        print(f"ok: fixture with {len(fixture.samples)} samples, "
              f"{fixture.relation_count} relations, "
              f"{fixture.patch_count} patches per region")
    return 0


def cmd_train(args) -> int:
    pack = _load_pack_arg(args.pack)
    fixture = dataio.load_fixture(args.fixture)
    dataio.check_prefix_of_pack(fixture, pack)
    base = _split_names(args, pack, fixture, "base")
    for name in base:
        pack.relation_index(name)  # unknown names fail before filtering
    base_set = set(base)
    dataset = [s for s in fixture.samples
               if fixture.relation_names[s.gt_relation] in base_set]
    config = TrainConfig(
        alpha=args.alpha, beta=args.beta, lambda_margin=args.lambda_margin,
        temperature=args.temperature, lr=args.lr, momentum=args.momentum,
        weight_decay=args.weight_decay, batch_size=args.batch_size,
        epochs=args.epochs, seed=args.seed, sample_cap=args.sample_cap)
    dims = AdapterDims(feature_dim=pack.embedding_dim)
    log_stream = open(args.log, "w", encoding="utf-8") if args.log else None
    try:
        result = trainer.train(dataset, pack, config, base,
                               markers=fixture.markers, dims=dims,
                               out_dir=args.out, log_stream=log_stream)
    finally:
        if log_stream is not None:
            log_stream.close()
    last = f"{result.losses[-1]:.6f}" if result.losses else "n/a"
    print(f"trained {config.epochs} epochs on {len(dataset)} samples "
          f"({len(base)} base relations), final loss {last}, "
          f"checkpoint {result.checkpoint_dir}")
    return 0


def cmd_eval(args) -> int:
    pack = _load_pack_arg(args.pack)
    fixture = dataio.load_fixture(args.fixture)
    dataio.check_prefix_of_pack(fixture, pack)
    names = _split_names(args, pack, fixture, args.split)
    ks = [int(k) for k in _name_list(args.ks)]
    if args.baseline and args.checkpoint:
        raise ConfigError("pass --baseline or --checkpoint, not both")
    params = None
    ckpt_id = None
    if args.checkpoint:
        params, _meta = load_checkpoint(args.checkpoint)
        ckpt_id = checkpoint_id(args.checkpoint)
    elif not args.baseline:
        raise ConfigError("pass --baseline or --checkpoint")
    if args.per_pair_groups:
        fixture = dataio.singleton_groups(fixture)
    report = metrics.evaluate(
        fixture, pack, names, ks, ScoringConfig(temperature=args.temperature),
        params, baseline=args.baseline,
        graph_constraint=not args.no_graph_constraint,
        workers=args.workers, checkpoint_id=ckpt_id,
        grouping="pair" if args.per_pair_groups else "image")
    if args.out:
        report.save(args.out)
    if args.table:
        print(report.render_table())
    else:
        sys.stdout.write(report.to_json_str())
    return 0


def cmd_score(args) -> int:
    pack = _load_pack_arg(args.pack)
    fixture = dataio.load_fixture(args.fixture)
    dataio.check_prefix_of_pack(fixture, pack)
    if not (0 <= args.sample < len(fixture.samples)):
        raise ConfigError(
            f"sample {args.sample} out of range for "
            f"{len(fixture.samples)} samples")
    if args.checkpoint:
        params, _meta = load_checkpoint(args.checkpoint)
        ckpt_id = checkpoint_id(args.checkpoint)
        seed = None
    else:
        params = init_params(AdapterDims(feature_dim=pack.embedding_dim),
                             args.init_seed)
        ckpt_id = None
        seed = args.init_seed
    sample = fixture.samples[args.sample]
    v = embed_pair(sample.subject, sample.object, fixture.markers,
                   params).numpy()
    scores = self_normalized_scores(
        v, pack, ScoringConfig(temperature=args.temperature))

    assoc = pack.associations.values
    deltas = scores.deltas
    ranking = []
    for rel in scores.ranking[:args.top] if args.top else scores.ranking:
        row = assoc[rel]
        contributions = [
            {"description": pack.pairs[n].raw_text,
             "assoc": int(row[n]),
             "delta": float(deltas[n]),
             "product": float(row[n]) * float(deltas[n])}
            for n in range(len(deltas)) if row[n] != 0]
        ranking.append({"relation": pack.relation_names[rel],
                        "score": float(scores.per_relation[rel]),
                        "contributions": contributions})
    payload = {
        "sample": args.sample,
        "gt_relation": fixture.relation_names[sample.gt_relation],
        "checkpoint_id": ckpt_id,
        "init_seed": seed,
        "temperature": args.temperature,
        "deltas": [float(d) for d in deltas],
        "ranking": ranking,
    }
    sys.stdout.write(canonical_json(payload))
    return 0


# ------------------------------------------------------------------ parser

def _add_pack_flag(p: argparse.ArgumentParser) -> None:
    p.add_argument("--pack", default=None,
                   help="pack directory (default: $DESCREL_DATA_DIR "
                        "or the shipped pack)")


def _add_subset_flags(p: argparse.ArgumentParser) -> None:
    group = p.add_mutually_exclusive_group()
    group.add_argument("--relations", default=None,
                       help="comma-separated relation names")
    group.add_argument("--splits", default=None,
                       help="JSON file with base/novel relation lists")
    group.add_argument("--demo-splits", action="store_true",
                       help="derive base/novel splits from the pack tail")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="descrel",
        description="Open-vocabulary relation scoring over description pairs")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic fixture")
    _add_pack_flag(p)
    p.add_argument("--out", required=True)
    p.add_argument("--images", type=int, default=24)
    p.add_argument("--pairs-per-image", type=int, default=3)
    p.add_argument("--patches", type=int, default=4)
    p.add_argument("--spread", type=float, default=0.35)
    p.add_argument("--cls-mix", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("validate", help="check a pack and optionally a fixture")
    _add_pack_flag(p)
    p.add_argument("--fixture", default=None)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("train", help="fit the adapter on base relations")
    _add_pack_flag(p)
    p.add_argument("--fixture", required=True)
    p.add_argument("--out", required=True)
    _add_subset_flags(p)
    defaults = TrainConfig()
    p.add_argument("--alpha", type=float, default=defaults.alpha)
    p.add_argument("--beta", type=float, default=defaults.beta)
    p.add_argument("--lambda", type=float, dest="lambda_margin",
                   default=defaults.lambda_margin)
    p.add_argument("--temperature", type=float, default=defaults.temperature)
    p.add_argument("--lr", type=float, default=defaults.lr)
    p.add_argument("--momentum", type=float, default=defaults.momentum)
    p.add_argument("--weight-decay", type=float, default=defaults.weight_decay)
    p.add_argument("--batch-size", type=int, default=defaults.batch_size)
    p.add_argument("--epochs", type=int, default=defaults.epochs)
    p.add_argument("--seed", type=int, default=defaults.seed)
    p.add_argument("--sample-cap", type=int, default=None)
    p.add_argument("--log", default=None, help="NDJSON loss log path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="compute R@K / mR@K for one split")
    _add_pack_flag(p)
    p.add_argument("--fixture", required=True)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--baseline", action="store_true",
                   help="rank the fixture's stored clip sims instead")
    _add_subset_flags(p)
    p.add_argument("--split", default="base",
                   choices=("base", "novel", "semantic"),
                   help="which list to take from --splits/--demo-splits")
    p.add_argument("--ks", default="1,2,3")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--temperature", type=float, default=10.0)
    p.add_argument("--per-pair-groups", action="store_true",
                   help="each pair is its own retrieval unit")
    p.add_argument("--no-graph-constraint", action="store_true",
                   help="rank every relation per pair, not just the argmax")
    p.add_argument("--out", default=None, help="write the report JSON here")
    p.add_argument("--table", action="store_true",
                   help="print a text table instead of JSON")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("score", help="per-description attribution for one sample")
    _add_pack_flag(p)
    p.add_argument("--fixture", required=True)
    p.add_argument("--sample", type=int, required=True)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--init-seed", type=int, default=0,
                   help="seed for fresh parameters when no checkpoint given")
    p.add_argument("--temperature", type=float, default=10.0)
    p.add_argument("--top", type=int, default=None,
                   help="limit the ranking to the top N relations")
    p.set_defaults(func=cmd_score)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return args.func(args)
    except EngineError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
