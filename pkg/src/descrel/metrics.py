"""Recall evaluation over grouped subject-object pairs.

Samples are grouped into retrieval units (normally one group per image). For
each group every member pair is scored against the active relation split;
candidate triplets (pair, relation) are ranked by score and R@K counts how
many ground-truth triplets appear in the top K, divided by the group's
ground-truth total. R@K averages that per-group recall over groups with at
least one in-split ground truth; mR@K averages per-predicate recall (hits
and totals pooled over all groups, one value per predicate that occurs).

With the graph constraint on (the default), only each pair's single best
relation enters the candidate list. Ties are deterministic everywhere:
equal-scoring candidates order by (sample index, relation index), and a
pair's best relation resolves to the lower relation index.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .adapter import AdapterParams, embed_pair
from .containers import canonical_json
from .errors import ConfigError, DegenerateInputError, ValidationError
from .pack import DescriptionPack, restrict_to_relations
from .scoring import ScoringConfig, self_normalized_scores

Triplet = tuple[int, int]  # (sample index, split-local relation index)


@dataclass(frozen=True)
class ImageGroup:
    """One retrieval unit: the dataset sample indices it contains."""
    image_id: int
    sample_indices: tuple[int, ...]


def rank_candidates(scores_by_sample: dict[int, np.ndarray],
                    graph_constraint: bool = True) -> list[Triplet]:
    """Order (sample, relation) candidates by descending score.

    scores_by_sample maps dataset sample indices to (R,) score vectors over
    the active split. Under the graph constraint each sample contributes
    only its argmax relation (lower index on ties).
    """
    candidates: list[tuple[float, int, int]] = []
    for sample_idx in sorted(scores_by_sample):
        scores = np.asarray(scores_by_sample[sample_idx])
        if graph_constraint:
            best = int(np.argmax(scores == scores.max()))
            candidates.append((float(scores[best]), sample_idx, best))
        else:
            for rel_idx, value in enumerate(scores):
                candidates.append((float(value), sample_idx, rel_idx))
    candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
    return [(s, r) for _, s, r in candidates]


def recall_at_k(ranked: list[Triplet], gts: set[Triplet], k: int) -> float:
    """Fraction of ground-truth triplets inside the top k of the ranking."""
    if not gts:
        raise DegenerateInputError("recall is undefined without ground truths")
    if k < 1:
        raise ConfigError(f"K must be >= 1, got {k}")
    hits = sum(1 for t in ranked[:k] if t in gts)
    return hits / len(gts)


@dataclass
class MetricsReport:
    split_names: tuple[str, ...]
    ks: tuple[int, ...]
    n_groups: int
    n_ground_truths: int
    r_at_k: dict[str, float]
    mr_at_k: dict[str, float]
    per_predicate: dict[str, dict[str, float]]
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "engine_version": __version__,
            "split_names": list(self.split_names),
            "ks": list(self.ks),
            "n_groups": self.n_groups,
            "n_ground_truths": self.n_ground_truths,
            "r_at_k": self.r_at_k,
            "mr_at_k": self.mr_at_k,
            "per_predicate": self.per_predicate,
            "config": self.config,
        }

    def to_json_str(self) -> str:
        return canonical_json(self.to_dict())

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json_str(), encoding="utf-8")

    def render_table(self) -> str:
        """Plain-text summary: one row per K with R@K and mR@K columns."""
        lines = [f"{'K':>6} {'R@K':>10} {'mR@K':>10}"]
        for k in self.ks:
            lines.append(f"{k:>6} {self.r_at_k[str(k)]:>10.4f} "
                         f"{self.mr_at_k[str(k)]:>10.4f}")
        return "\n".join(lines)


def _baseline_scores(sample, split_names, fixture_names) -> np.ndarray:
    idx = []
    for name in split_names:
        try:
            idx.append(fixture_names.index(name))
        except ValueError:
            raise ValidationError(
                f"baseline scoring needs clip sims for {name!r}, which the "
                f"fixture does not carry") from None
    return sample.clip_relation_sims[idx]


def evaluate(fixture, pack: DescriptionPack, split_names, ks,
             scoring_config: ScoringConfig,
             params: AdapterParams | None = None, *,
             baseline: bool = False, graph_constraint: bool = True,
             workers: int = 1, checkpoint_id: str | None = None,
             groups: tuple[ImageGroup, ...] | None = None,
             grouping: str = "image") -> MetricsReport:
    """Score a fixture against one relation split and compute R@K / mR@K.

    Exactly one scoring mode applies: baseline=True ranks the fixture's
    stored clip relation sims; otherwise params must be given and each pair
    is embedded by the adapter and scored against the restricted pack.
    Groups with zero in-split ground truths are skipped; workers only
    parallelize per-sample scoring, so results do not depend on it.
    """
    ks = tuple(int(k) for k in ks)
    if not ks or any(k < 1 for k in ks):
        raise ConfigError(f"ks must be positive, got {ks}")
    if baseline == (params is not None):
        raise ConfigError("pass either baseline=True or adapter params, not both")
    split_names = [str(n) for n in split_names]
    sub_pack = restrict_to_relations(pack, split_names)  # validates names
    split_pos = {name: i for i, name in enumerate(split_names)}
    fixture_names = list(fixture.relation_names)

    if groups is None:
        groups = fixture.groups
    samples = fixture.samples

    # ground truths per group, in split-local relation indices
    group_gts: list[tuple[ImageGroup, set[Triplet]]] = []
    for group in groups:
        gts: set[Triplet] = set()
        for si in group.sample_indices:
            name = fixture_names[samples[si].gt_relation]
            if name in split_pos:
                gts.add((si, split_pos[name]))
        if gts:
            group_gts.append((group, gts))
    if not group_gts:
        raise DegenerateInputError(
            "no group has a ground truth inside the requested split")

    needed = sorted({si for group, _ in group_gts
                     for si in group.sample_indices})

    if baseline:
        def score_one(si: int) -> np.ndarray:
            return _baseline_scores(samples[si], split_names, fixture_names)
    else:
        markers = fixture.markers

        def score_one(si: int) -> np.ndarray:
            s = samples[si]
            v = embed_pair(s.subject, s.object, markers, params).numpy()
            return self_normalized_scores(v, sub_pack, scoring_config).per_relation

    if workers < 1:
        raise ConfigError(f"workers must be >= 1, got {workers}")
    if workers == 1:
        scored = [score_one(si) for si in needed]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            scored = list(pool.map(score_one, needed))
    scores_by_sample = dict(zip(needed, scored))

    pred_total = np.zeros(len(split_names), dtype=np.int64)
    pred_hits = {k: np.zeros(len(split_names), dtype=np.int64) for k in ks}
    recalls = {k: [] for k in ks}
    total_gts = 0
    for group, gts in group_gts:
        ranked = rank_candidates(
            {si: scores_by_sample[si] for si in group.sample_indices},
            graph_constraint=graph_constraint)
        total_gts += len(gts)
        for _, rel in gts:
            pred_total[rel] += 1
        for k in ks:
            top = set(ranked[:k])
            hit_set = gts & top
            recalls[k].append(len(hit_set) / len(gts))
            for _, rel in hit_set:
                pred_hits[k][rel] += 1

    active = np.flatnonzero(pred_total)
    r_at_k = {str(k): float(np.mean(recalls[k])) for k in ks}
    per_predicate = {}
    mr_at_k = {}
    for k in ks:
        per = {split_names[p]: float(pred_hits[k][p] / pred_total[p])
               for p in active}
        per_predicate[str(k)] = per
        mr_at_k[str(k)] = float(np.mean([per[split_names[p]] for p in active]))

    return MetricsReport(
        split_names=tuple(split_names), ks=ks,
        n_groups=len(group_gts), n_ground_truths=total_gts,
        r_at_k=r_at_k, mr_at_k=mr_at_k, per_predicate=per_predicate,
        # worker count deliberately left out: reports must not depend on it
        config={
            "temperature": scoring_config.temperature,
            "baseline": baseline,
            "graph_constraint": graph_constraint,
            "checkpoint_id": checkpoint_id,
            "grouping": grouping,
        },
    )
