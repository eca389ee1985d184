"""Relation scoring against description pairs.

The score of relation r for a region embedding v is

    score(r) = sum_n C[r][n] * (cos(v, t_raw[n]) - cos(v, t_opp[n]))

with cos(v, t) = tau * (v . t) / ||v||. Text embeddings are unit-norm by
pack contract and are never re-normalized here; only v's norm divides the
dot product. Subtracting the opposite side re-centers each description's
similarity, so a description that fires equally on both sides contributes
nothing.

Numerical contract: dot products and norms accumulate in float64; each delta
and each contracted score is cast to float32 exactly once. Swapping raw and
opposite sides therefore negates every output bit-exactly, and a pair whose
two sides are identical contributes an exact zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DegenerateInputError, DimensionError, ValidationError
from .pack import DescriptionPack


@dataclass(frozen=True)
class ScoringConfig:
    """temperature scales every cosine; must be positive."""
    temperature: float = 10.0

    def __post_init__(self):
        if not (self.temperature > 0 and np.isfinite(self.temperature)):
            raise ConfigError(f"temperature must be positive, got {self.temperature}")


@dataclass(frozen=True)
class RelationScores:
    """Per-description deltas, contracted per-relation scores, and ranking.

    ranking[0] is the index of the highest-scoring relation; ties go to the
    lower relation index.
    """
    relation_names: tuple[str, ...]
    deltas: np.ndarray        # (N,) float32
    per_relation: np.ndarray  # (R,) float32
    ranking: np.ndarray       # (R,) int64


def _check_vector(v: np.ndarray, dim: int) -> np.ndarray:
    v = np.asarray(v)
    if v.ndim != 1 or v.shape[0] != dim:
        raise DimensionError(
            f"region embedding shape {v.shape} does not match dim ({dim},)")
    if not np.all(np.isfinite(v)):
        raise ValidationError("region embedding is not finite")
    v64 = v.astype(np.float64)
    if float(np.linalg.norm(v64)) == 0.0:
        raise DegenerateInputError("region embedding has zero norm")
    return v64


def cosine(v: np.ndarray, t: np.ndarray, config: ScoringConfig) -> float:
    """tau * (v . t) / ||v||. t is trusted to be unit-norm."""
    t = np.asarray(t)
    if t.ndim != 1:
        raise DimensionError(f"text embedding must be a vector, got {t.shape}")
    v64 = _check_vector(v, t.shape[0])
    t64 = t.astype(np.float64)
    return float(config.temperature * np.dot(v64, t64) / np.linalg.norm(v64))


def description_deltas(v: np.ndarray, pack: DescriptionPack,
                       config: ScoringConfig) -> np.ndarray:
    """(N,) float32 vector of cos(v, raw_n) - cos(v, opp_n)."""
    v64 = _check_vector(v, pack.embedding_dim)
    inv = config.temperature / np.linalg.norm(v64)
    raw = pack.raw_matrix.astype(np.float64) @ v64 * inv
    opp = pack.opposite_matrix.astype(np.float64) @ v64 * inv
    return (raw - opp).astype(np.float32)


def rank_descending(scores: np.ndarray) -> np.ndarray:
    """Indices ordered by decreasing score; equal scores keep index order."""
    return np.argsort(-np.asarray(scores), kind="stable").astype(np.int64)


def self_normalized_scores(v: np.ndarray, pack: DescriptionPack,
                           config: ScoringConfig) -> RelationScores:
    """Score every pack relation for one region embedding."""
    deltas = description_deltas(v, pack, config)
    contracted = pack.associations.values.astype(np.float64) @ deltas.astype(np.float64)
    per_relation = contracted.astype(np.float32)
    return RelationScores(pack.relation_names, deltas, per_relation,
                          rank_descending(per_relation))


def score_category_names(v: np.ndarray, name_embeddings: np.ndarray,
                         config: ScoringConfig) -> np.ndarray:
    """Plain cosine scores against one unit-norm embedding per relation name.

    This is the no-description baseline: (R,) float32 of tau * cos.
    """
    name_embeddings = np.asarray(name_embeddings)
    if name_embeddings.ndim != 2:
        raise DimensionError(
            f"name embeddings must be (R, D), got {name_embeddings.shape}")
    v64 = _check_vector(v, name_embeddings.shape[1])
    inv = config.temperature / np.linalg.norm(v64)
    return (name_embeddings.astype(np.float64) @ v64 * inv).astype(np.float32)
