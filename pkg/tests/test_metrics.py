"""Ranking, recall, and the evaluation report."""

from __future__ import annotations

import json

import numpy as np
import pytest

from descrel import dataio, metrics
from descrel.adapter import AdapterDims, DirectionalMarkers, RegionFeatures, init_params
from descrel.errors import ConfigError, DegenerateInputError, ValidationError
from descrel.metrics import (ImageGroup, MetricsReport, evaluate,
                             rank_candidates, recall_at_k)
from descrel.pack import make_demo_pack
from descrel.scoring import ScoringConfig
from descrel.trainer import PairSample

from conftest import random_pack, unit_vec


# ----------------------------------------------------------------- ranking

def test_ranking_without_graph_constraint_is_score_ordered():
    scores = {0: np.array([1.0, 3.0]), 1: np.array([2.0, 0.5])}
    assert rank_candidates(scores, graph_constraint=False) == [
        (0, 1), (1, 0), (0, 0), (1, 1)]


def test_graph_constraint_keeps_only_each_pairs_best():
    scores = {0: np.array([1.0, 3.0]), 1: np.array([2.0, 0.5])}
    assert rank_candidates(scores) == [(0, 1), (1, 0)]


def test_ties_order_by_sample_then_relation():
    scores = {1: np.array([2.0, 2.0]), 0: np.array([2.0])}
    assert rank_candidates(scores) == [(0, 0), (1, 0)]
    assert rank_candidates(scores, graph_constraint=False) == [
        (0, 0), (1, 0), (1, 1)]


def test_recall_hand_example():
    ranked = [(0, 1), (1, 0), (0, 0)]
    gts = {(0, 0), (1, 0)}
    assert recall_at_k(ranked, gts, 1) == 0.0
    assert recall_at_k(ranked, gts, 2) == 0.5
    assert recall_at_k(ranked, gts, 3) == 1.0


def test_recall_rejects_degenerate_inputs():
    with pytest.raises(DegenerateInputError):
        recall_at_k([(0, 0)], set(), 1)
    with pytest.raises(ConfigError):
        recall_at_k([(0, 0)], {(0, 0)}, 0)


def test_recall_is_monotone_in_k(rng):
    for _ in range(50):
        n_samples = int(rng.integers(1, 6))
        n_rel = int(rng.integers(1, 5))
        scores = {i: rng.standard_normal(n_rel) for i in range(n_samples)}
        gc = bool(rng.integers(0, 2))
        ranked = rank_candidates(scores, graph_constraint=gc)
        gts = {(int(rng.integers(0, n_samples)), int(rng.integers(0, n_rel)))
               for _ in range(3)}
        values = [recall_at_k(ranked, gts, k) for k in range(1, 8)]
        assert all(b >= a for a, b in zip(values, values[1:]))
        assert recall_at_k(ranked, gts, len(ranked)) == pytest.approx(
            len(set(ranked) & gts) / len(gts))


# ----------------------------------------------------------------- fixtures

def sims_fixture(sims_per_pair, gt_per_pair, pairs_per_image=2, dim=8, seed=3):
    """Fixture whose samples carry prescribed clip sims; features are noise."""
    rng = np.random.default_rng(seed)
    n_rel = len(sims_per_pair[0])
    markers = DirectionalMarkers(subject=unit_vec(rng, dim),
                                 object=unit_vec(rng, dim))

    def region():
        return RegionFeatures(cls=unit_vec(rng, dim),
                              patches=rng.standard_normal((2, dim)).astype(np.float32))

    samples = []
    for i, (sims, gt) in enumerate(zip(sims_per_pair, gt_per_pair)):
        samples.append(PairSample(
            subject=region(), object=region(),
            image_id=i // pairs_per_image, gt_relation=gt,
            clip_relation_sims=np.asarray(sims, dtype=np.float32)))
    names = [f"rel_{i}" for i in range(n_rel)]
    return dataio.build_fixture(samples, names, markers, {"kind": "test"})


def test_baseline_evaluation_matches_hand_computation(rng):
    # image 0: pair 0 correct at rank 1, pair 1's gt loses the argmax;
    # image 1: both pairs correct, found at K=1 and K=2 respectively.
    fx = sims_fixture(
        sims_per_pair=[[0.9, 0.1], [0.8, 0.2], [0.1, 0.7], [0.6, 0.05]],
        gt_per_pair=[0, 1, 1, 0])
    pack = random_pack(rng, relations=2, descriptions=3, dim=8)
    rep = evaluate(fx, pack, ["rel_0", "rel_1"], [1, 2], ScoringConfig(),
                   baseline=True)
    assert rep.n_groups == 2
    assert rep.n_ground_truths == 4
    assert rep.r_at_k == {"1": 0.5, "2": 0.75}
    assert rep.mr_at_k == {"1": 0.5, "2": 0.75}
    assert rep.per_predicate["1"] == {"rel_0": 0.5, "rel_1": 0.5}
    assert rep.per_predicate["2"] == {"rel_0": 1.0, "rel_1": 0.5}


def test_relaxing_the_graph_constraint_recovers_second_choices(rng):
    # pair 1's ground truth is its second-best relation: invisible under the
    # constraint, found at K=3 without it.
    fx = sims_fixture(
        sims_per_pair=[[0.9, 0.1], [0.8, 0.7]],
        gt_per_pair=[0, 1])
    pack = random_pack(rng, relations=2, descriptions=3, dim=8)
    constrained = evaluate(fx, pack, ["rel_0", "rel_1"], [3], ScoringConfig(),
                           baseline=True)
    relaxed = evaluate(fx, pack, ["rel_0", "rel_1"], [3], ScoringConfig(),
                       baseline=True, graph_constraint=False)
    assert constrained.r_at_k["3"] == 0.5
    assert relaxed.r_at_k["3"] == 1.0


def test_groups_without_in_split_truths_are_skipped(rng):
    fx = sims_fixture(
        sims_per_pair=[[0.9, 0.1], [0.8, 0.2], [0.1, 0.7], [0.2, 0.6]],
        gt_per_pair=[0, 0, 1, 1])
    pack = random_pack(rng, relations=2, descriptions=3, dim=8)
    rep = evaluate(fx, pack, ["rel_0"], [1], ScoringConfig(), baseline=True)
    assert rep.n_groups == 1          # the all-rel_1 image dropped out
    assert rep.n_ground_truths == 2
    with pytest.raises(DegenerateInputError):
        evaluate(sims_fixture([[0.5, 0.5]], [1]), pack, ["rel_0"], [1],
                 ScoringConfig(), baseline=True)


def test_mean_recall_pools_over_groups(rng):
    # rel_1 occurs once per image; pooling counts both occurrences together.
    fx = sims_fixture(
        sims_per_pair=[[0.9, 0.1], [0.2, 0.8], [0.3, 0.7], [0.6, 0.1]],
        gt_per_pair=[0, 1, 1, 0])
    pack = random_pack(rng, relations=2, descriptions=3, dim=8)
    rep = evaluate(fx, pack, ["rel_0", "rel_1"], [1], ScoringConfig(),
                   baseline=True)
    # group tops: (0.9, pair0, rel_0) and (0.7, pair2, rel_1)
    assert rep.per_predicate["1"] == {"rel_0": 0.5, "rel_1": 0.5}
    assert rep.mr_at_k["1"] == 0.5


def test_brute_force_agreement_on_random_baselines(rng):
    for _ in range(40):
        n_rel = int(rng.integers(2, 5))
        n_pairs = int(rng.integers(2, 9))
        per_image = int(rng.integers(1, 4))
        sims = rng.uniform(-1, 1, (n_pairs, n_rel)).round(3).tolist()
        gts = [int(g) for g in rng.integers(0, n_rel, n_pairs)]
        gc = bool(rng.integers(0, 2))
        k = int(rng.integers(1, 4))
        fx = sims_fixture(sims, gts, pairs_per_image=per_image)
        pack = random_pack(rng, relations=n_rel, descriptions=3, dim=8)
        names = [f"rel_{i}" for i in range(n_rel)]
        rep = evaluate(fx, pack, names, [k], ScoringConfig(), baseline=True,
                       graph_constraint=gc)

        # independent route: explicit per-image candidate lists
        recalls = []
        for img in sorted({s.image_id for s in fx.samples}):
            members = [i for i, s in enumerate(fx.samples)
                       if s.image_id == img]
            gtset = {(i, fx.samples[i].gt_relation) for i in members}
            rows = []
            for i in members:
                vals = [float(x) for x in fx.samples[i].clip_relation_sims]
                if gc:
                    best = vals.index(max(vals))
                    rows.append((-vals[best], i, best))
                else:
                    rows.extend((-v, i, r) for r, v in enumerate(vals))
            rows.sort()
            top = {(i, r) for _, i, r in rows[:k]}
            recalls.append(len(top & gtset) / len(gtset))
        assert rep.r_at_k[str(k)] == pytest.approx(float(np.mean(recalls)))


# ----------------------------------------------------------------- adapter mode

def test_adapter_scoring_is_independent_of_worker_count():
    pack = make_demo_pack()
    fx = dataio.synthesize(pack, images=4, pairs_per_image=2, seed=11)
    dims = AdapterDims(feature_dim=pack.embedding_dim)
    params = init_params(dims, seed=0)
    names = list(pack.relation_names[:4])
    reports = [evaluate(fx, pack, names, [1, 2], ScoringConfig(), params,
                        workers=w, checkpoint_id="abc123def456")
               for w in (1, 3)]
    assert reports[0].to_json_str() == reports[1].to_json_str()
    assert "workers" not in reports[0].config
    assert reports[0].config["checkpoint_id"] == "abc123def456"


def test_custom_groups_and_grouping_label():
    pack = make_demo_pack()
    fx = dataio.synthesize(pack, images=3, pairs_per_image=2, seed=11)
    fx1 = dataio.singleton_groups(fx)
    dims = AdapterDims(feature_dim=pack.embedding_dim)
    params = init_params(dims, seed=0)
    names = list(pack.relation_names)
    rep = evaluate(fx1, pack, names, [1], ScoringConfig(), params,
                   grouping="pair")
    assert rep.config["grouping"] == "pair"
    assert rep.n_groups == len(fx.samples)


def test_scoring_mode_must_be_unambiguous(rng):
    fx = sims_fixture([[0.5, 0.1]], [0])
    pack = random_pack(rng, relations=2, descriptions=3, dim=8)
    params = init_params(AdapterDims(feature_dim=8, down_dim=4, attn_dim=8,
                                     heads=2), seed=0)
    with pytest.raises(ConfigError):
        evaluate(fx, pack, ["rel_0"], [1], ScoringConfig())
    with pytest.raises(ConfigError):
        evaluate(fx, pack, ["rel_0"], [1], ScoringConfig(), params,
                 baseline=True)


def test_parameter_validation(rng):
    fx = sims_fixture([[0.5, 0.1]], [0])
    pack = random_pack(rng, relations=2, descriptions=3, dim=8)
    with pytest.raises(ConfigError):
        evaluate(fx, pack, ["rel_0"], [], ScoringConfig(), baseline=True)
    with pytest.raises(ConfigError):
        evaluate(fx, pack, ["rel_0"], [0], ScoringConfig(), baseline=True)
    with pytest.raises(ConfigError):
        evaluate(fx, pack, ["rel_0"], [1], ScoringConfig(), baseline=True,
                 workers=0)


def test_baseline_needs_sims_for_every_split_name(rng):
    # rel_2 exists in the pack but the fixture carries no sims column for it
    fx = sims_fixture([[0.5, 0.1]], [0])
    pack = random_pack(rng, relations=3, descriptions=3, dim=8)
    with pytest.raises(ValidationError) as err:
        evaluate(fx, pack, ["rel_0", "rel_2"], [1], ScoringConfig(),
                 baseline=True)
    assert "rel_2" in str(err.value)


# ----------------------------------------------------------------- report

def test_report_round_trips_and_saves_canonically(tmp_path, rng):
    fx = sims_fixture(
        sims_per_pair=[[0.9, 0.1], [0.8, 0.2]], gt_per_pair=[0, 1])
    pack = random_pack(rng, relations=2, descriptions=3, dim=8)
    rep = evaluate(fx, pack, ["rel_0", "rel_1"], [1, 2], ScoringConfig(),
                   baseline=True)
    blob = rep.to_json_str()
    data = json.loads(blob)
    assert data["r_at_k"] == rep.r_at_k
    assert data["split_names"] == ["rel_0", "rel_1"]
    assert data["config"]["baseline"] is True
    assert "engine_version" in data
    assert blob.endswith("\n")
    assert blob == json.dumps(data, indent=2, sort_keys=True) + "\n"

    p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
    rep.save(p1)
    rep.save(p2)
    assert p1.read_bytes() == p2.read_bytes()
    assert p1.read_text() == blob


def test_render_table_lists_every_k(rng):
    fx = sims_fixture([[0.9, 0.1], [0.8, 0.2]], [0, 1])
    pack = random_pack(rng, relations=2, descriptions=3, dim=8)
    rep = evaluate(fx, pack, ["rel_0", "rel_1"], [1, 5], ScoringConfig(),
                   baseline=True)
    table = rep.render_table()
    lines = table.splitlines()
    assert len(lines) == 3
    assert "R@K" in lines[0] and "mR@K" in lines[0]
    assert lines[1].split()[0] == "1"
    assert lines[2].split()[0] == "5"
