"""Pack-spec parsing and text embedding into loadable packs."""

import copy
import json

import numpy as np
import pytest

from descrel.pack import load_pack
from descrel.scoring import ScoringConfig, self_normalized_scores

from descrel_extractor.errors import ManifestError
from descrel_extractor.packs import (embed_pack_texts, load_pack_spec,
                                     parse_pack_spec)

from conftest import PACK_SPEC, PROJECTION_DIM


class TestParsePackSpec:
    def test_good_spec_parses(self):
        spec = parse_pack_spec(copy.deepcopy(PACK_SPEC))
        assert spec.relations == ("above", "below", "beside")
        assert spec.association_rows.shape == (3, 4)
        assert spec.association_rows.dtype == np.int8
        assert spec.descriptions[0][0].startswith("the subject sits higher")

    def test_association_length_must_cover_descriptions(self):
        data = copy.deepcopy(PACK_SPEC)
        data["relations"][1]["associations"] = [1, 0]
        with pytest.raises(ManifestError, match="relation 1.*'below'.*one value"):
            parse_pack_spec(data)

    @pytest.mark.parametrize("value", [2, -2, 0.5, "1", True])
    def test_association_values_are_ternary(self, value):
        data = copy.deepcopy(PACK_SPEC)
        data["relations"][0]["associations"][2] = value
        with pytest.raises(ManifestError, match="-1, 0, or 1"):
            parse_pack_spec(data)

    def test_duplicate_relation_names_abort(self):
        data = copy.deepcopy(PACK_SPEC)
        data["relations"][2]["name"] = "above"
        with pytest.raises(ManifestError, match="duplicate"):
            parse_pack_spec(data)

    def test_descriptions_need_both_sides(self):
        data = copy.deepcopy(PACK_SPEC)
        del data["descriptions"][1]["opposite"]
        with pytest.raises(ManifestError, match="description 1"):
            parse_pack_spec(data)

    def test_blank_texts_abort(self):
        data = copy.deepcopy(PACK_SPEC)
        data["descriptions"][3]["raw"] = "   "
        with pytest.raises(ManifestError, match="description 3.*non-empty"):
            parse_pack_spec(data)

    def test_load_from_disk(self, pack_spec_path):
        spec = load_pack_spec(pack_spec_path)
        assert len(spec.descriptions) == 4

    def test_broken_json_reports_the_path(self, tmp_path):
        path = tmp_path / "spec.json"
        path.write_text("[")
        with pytest.raises(ManifestError, match="not valid JSON"):
            load_pack_spec(path)


class TestEmbedPackTexts:
    def test_emitted_pack_loads_with_texts_and_associations(
            self, pack_spec_path, encoder, tmp_path):
        spec = load_pack_spec(pack_spec_path)
        embed_pack_texts(spec, encoder, tmp_path / "pack")
        pack = load_pack(tmp_path / "pack")
        assert pack.relation_names == ("above", "below", "beside")
        assert pack.embedding_dim == PROJECTION_DIM
        assert pack.pairs[2].raw_text == PACK_SPEC["descriptions"][2]["raw"]
        np.testing.assert_array_equal(
            pack.associations.values, spec.association_rows)

    def test_embeddings_are_unit_norm_within_tolerance(self, pack_spec_path,
                                                       encoder, tmp_path):
        spec = load_pack_spec(pack_spec_path)
        embed_pack_texts(spec, encoder, tmp_path / "pack")
        pack = load_pack(tmp_path / "pack")
        for pair in pack.pairs:
            for side in (pair.raw_embedding, pair.opposite_embedding):
                norm = np.linalg.norm(side.astype(np.float64))
                assert abs(norm - 1.0) <= 1e-4

    def test_re_embedding_is_byte_identical(self, pack_spec_path, encoder,
                                            tmp_path):
        spec = load_pack_spec(pack_spec_path)
        embed_pack_texts(spec, encoder, tmp_path / "a")
        embed_pack_texts(spec, encoder, tmp_path / "b")
        for name in ("pack.json", "embeddings.bin"):
            assert (tmp_path / "a" / name).read_bytes() == \
                (tmp_path / "b" / name).read_bytes()

    def test_emitted_pack_scores_region_embeddings(self, pack_spec_path,
                                                   encoder, tmp_path):
        spec = load_pack_spec(pack_spec_path)
        pack = embed_pack_texts(spec, encoder, tmp_path / "pack")
        rng = np.random.default_rng(3)
        scores = self_normalized_scores(
            rng.standard_normal(pack.embedding_dim).astype(np.float32),
            pack, ScoringConfig())
        assert scores.per_relation.shape == (3,)
        assert np.all(np.isfinite(scores.per_relation))
