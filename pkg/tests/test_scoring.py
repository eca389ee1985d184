"""Scorer: hand values, exact symmetries, scale and temperature behavior."""

from __future__ import annotations

import numpy as np
import pytest

from conftest import random_pack, unit_rows
from descrel import pack as pack_mod
from descrel import scoring
from descrel.errors import (ConfigError, DegenerateInputError, DimensionError,
                            ValidationError)


def axis_pack(temperature_pack_dim=2):
    """D=2 pack whose embeddings are the coordinate axes; hand-checkable."""
    raw = np.array([[1.0, 0.0], [0.0, 1.0]], dtype=np.float32)
    opp = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=np.float32)
    assoc = [[1, -1], [0, 1]]
    texts = [("objects touch", "objects are apart"),
             ("scene is outdoors", "scene is indoors")]
    return pack_mod.build_pack(["rel_a", "rel_b"], assoc, texts, raw, opp)


def swapped(pack: pack_mod.DescriptionPack) -> pack_mod.DescriptionPack:
    """Same pack with raw and opposite sides exchanged."""
    texts = [(p.opposite_text, p.raw_text) for p in pack.pairs]
    return pack_mod.build_pack(pack.relation_names, pack.associations.values,
                               texts, pack.opposite_matrix, pack.raw_matrix)


class TestConfig:
    def test_temperature_must_be_positive(self):
        with pytest.raises(ConfigError):
            scoring.ScoringConfig(temperature=0.0)
        with pytest.raises(ConfigError):
            scoring.ScoringConfig(temperature=-1.0)
        with pytest.raises(ConfigError):
            scoring.ScoringConfig(temperature=float("nan"))


class TestHandValues:
    def test_cosine_three_four_five(self):
        cfg = scoring.ScoringConfig(temperature=10.0)
        got = scoring.cosine(np.array([3.0, 4.0]), np.array([1.0, 0.0]), cfg)
        assert got == pytest.approx(6.0, abs=1e-12)

    def test_axis_pack_worked_example(self):
        cfg = scoring.ScoringConfig(temperature=1.0)
        out = scoring.self_normalized_scores(np.array([1.0, 0.0]), axis_pack(), cfg)
        np.testing.assert_allclose(out.deltas, [1.0, -1.0], atol=1e-7)
        np.testing.assert_allclose(out.per_relation, [2.0, -1.0], atol=1e-7)
        np.testing.assert_array_equal(out.ranking, [0, 1])

    def test_category_names_hand_value(self):
        cfg = scoring.ScoringConfig(temperature=10.0)
        names = np.array([[1.0, 0.0], [0.0, 1.0]], dtype=np.float32)
        got = scoring.score_category_names(np.array([3.0, 4.0]), names, cfg)
        np.testing.assert_allclose(got, [6.0, 8.0], atol=1e-6)


class TestExactSymmetries:
    def test_swap_negates_everything_bit_exactly(self, rng):
        """Exchanging raw and opposite sides negates deltas and scores."""
        cfg = scoring.ScoringConfig(temperature=10.0)
        for _ in range(60):
            p = random_pack(rng, int(rng.integers(1, 6)),
                            int(rng.integers(1, 9)), 16)
            q = swapped(p)
            v = rng.standard_normal(16).astype(np.float32)
            a = scoring.self_normalized_scores(v, p, cfg)
            b = scoring.self_normalized_scores(v, q, cfg)
            np.testing.assert_array_equal(b.deltas, -a.deltas)
            np.testing.assert_array_equal(b.per_relation, -a.per_relation)

    def test_identical_sides_give_exact_zero(self, rng):
        cfg = scoring.ScoringConfig()
        emb = unit_rows(rng, 4, 8)
        texts = [(f"cue {i}", f"anti cue {i}") for i in range(4)]
        p = pack_mod.build_pack(["r0", "r1"], [[1, -1, 0, 1], [0, 1, 1, -1]],
                                texts, emb, emb.copy())
        out = scoring.self_normalized_scores(
            np.random.default_rng(0).standard_normal(8).astype(np.float32), p, cfg)
        assert (out.deltas == 0).all()
        assert (out.per_relation == 0).all()

    def test_positive_scaling_leaves_scores_put(self, rng):
        cfg = scoring.ScoringConfig(temperature=10.0)
        p = random_pack(rng, 4, 6, 24)
        for _ in range(40):
            v = rng.standard_normal(24).astype(np.float32)
            c = float(rng.uniform(0.1, 20.0))
            a = scoring.self_normalized_scores(v, p, cfg)
            b = scoring.self_normalized_scores((c * v).astype(np.float32), p, cfg)
            np.testing.assert_allclose(b.per_relation, a.per_relation, atol=1e-5)

    def test_power_of_two_scaling_is_bit_exact(self, rng):
        cfg = scoring.ScoringConfig()
        p = random_pack(rng, 3, 5, 16)
        v = rng.standard_normal(16).astype(np.float32)
        a = scoring.self_normalized_scores(v, p, cfg)
        b = scoring.self_normalized_scores(v * np.float32(4.0), p, cfg)
        np.testing.assert_array_equal(a.per_relation, b.per_relation)

    def test_temperature_scales_scores_linearly(self, rng):
        p = random_pack(rng, 4, 7, 16)
        v = rng.standard_normal(16).astype(np.float32)
        a = scoring.self_normalized_scores(v, p, scoring.ScoringConfig(2.0))
        b = scoring.self_normalized_scores(v, p, scoring.ScoringConfig(7.4))
        np.testing.assert_allclose(b.per_relation * (2.0 / 7.4), a.per_relation,
                                   rtol=1e-6, atol=1e-6)


class TestRankingAndErrors:
    def test_ties_break_to_lower_index(self):
        ranking = scoring.rank_descending(np.array([1.0, 2.0, 2.0, 0.5]))
        np.testing.assert_array_equal(ranking, [1, 2, 0, 3])

    def test_zero_vector_rejected(self):
        with pytest.raises(DegenerateInputError):
            scoring.self_normalized_scores(np.zeros(2), axis_pack(),
                                           scoring.ScoringConfig())

    def test_nan_vector_rejected(self):
        with pytest.raises(ValidationError):
            scoring.self_normalized_scores(np.array([np.nan, 1.0]), axis_pack(),
                                           scoring.ScoringConfig())

    def test_wrong_width_rejected(self):
        with pytest.raises(DimensionError):
            scoring.self_normalized_scores(np.ones(3), axis_pack(),
                                           scoring.ScoringConfig())

    def test_category_scorer_checks_shapes(self):
        with pytest.raises(DimensionError):
            scoring.score_category_names(np.ones(4), np.ones((2, 3)),
                                         scoring.ScoringConfig())
