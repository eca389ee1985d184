"""Encoder wrapper: geometry, projection consistency, determinism."""

import numpy as np
import torch
import pytest

from descrel_extractor.encoder import ClipEncoder
from descrel_extractor.errors import ExtractionError

from conftest import IMAGE_SIZE, PATCH_SIZE, PROJECTION_DIM, write_image


def load_images(tmp_path, count=5):
    from PIL import Image

    paths = [write_image(tmp_path / f"i{k}.png", seed=k) for k in range(count)]
    return [Image.open(p).convert("RGB") for p in paths]


class TestGeometry:
    def test_patch_count_comes_from_the_config(self, encoder):
        assert encoder.patch_count == (IMAGE_SIZE // PATCH_SIZE) ** 2 == 4

    def test_embedding_dim_is_the_joint_projection_width(self, encoder):
        assert encoder.embedding_dim == PROJECTION_DIM

    def test_missing_checkpoint_is_reported(self, tmp_path):
        with pytest.raises(ExtractionError, match="cannot load checkpoint"):
            ClipEncoder.from_checkpoint(tmp_path / "nope")


class TestRegionEncoding:
    def test_shapes_and_dtype(self, encoder, tmp_path):
        images = load_images(tmp_path, count=5)
        cls, patches = encoder.encode_regions(images, batch_size=2)
        assert cls.shape == (5, PROJECTION_DIM)
        assert patches.shape == (5, encoder.patch_count, PROJECTION_DIM)
        assert cls.dtype == patches.dtype == np.float32
        assert np.all(np.isfinite(cls)) and np.all(np.isfinite(patches))

    def test_cls_row_equals_the_pooled_image_feature(self, encoder, tmp_path):
        images = load_images(tmp_path, count=3)
        cls, _ = encoder.encode_regions(images)
        pixels = encoder.processor(images=images,
                                   return_tensors="pt")["pixel_values"]
        with torch.inference_mode():
            out = encoder.model.vision_model(pixel_values=pixels)
            pooled = encoder.model.visual_projection(out.pooler_output)
        np.testing.assert_array_equal(cls, pooled.numpy())

    def test_patch_rows_use_the_same_per_token_mapping(self, encoder, tmp_path):
        images = load_images(tmp_path, count=2)
        _, patches = encoder.encode_regions(images)
        pixels = encoder.processor(images=images,
                                   return_tensors="pt")["pixel_values"]
        with torch.inference_mode():
            out = encoder.model.vision_model(pixel_values=pixels)
            tokens = encoder.model.vision_model.post_layernorm(
                out.last_hidden_state)
            expected = encoder.model.visual_projection(tokens)[:, 1:]
        np.testing.assert_allclose(patches, expected.numpy(),
                                   rtol=1e-6, atol=1e-7)

    def test_batch_size_does_not_change_the_features(self, encoder, tmp_path):
        images = load_images(tmp_path, count=5)
        cls_a, patches_a = encoder.encode_regions(images, batch_size=1)
        cls_b, patches_b = encoder.encode_regions(images, batch_size=5)
        np.testing.assert_allclose(cls_a, cls_b, rtol=1e-5, atol=1e-6)
        np.testing.assert_allclose(patches_a, patches_b, rtol=1e-5, atol=1e-6)


class TestTextEncoding:
    TEXTS = ["a photo of subject", "a photo of object",
             "the subject leans on the object", "an empty room"]

    def test_rows_are_unit_norm_within_tolerance(self, encoder):
        emb = encoder.encode_texts(self.TEXTS)
        assert emb.shape == (4, PROJECTION_DIM)
        assert emb.dtype == np.float32
        np.testing.assert_allclose(
            np.linalg.norm(emb.astype(np.float64), axis=1), 1.0, atol=1e-4)

    def test_unnormalized_rows_are_available(self, encoder):
        raw = encoder.encode_texts(self.TEXTS, normalize=False)
        norms = np.linalg.norm(raw, axis=1)
        assert not np.allclose(norms, 1.0, atol=1e-3)
        unit = encoder.encode_texts(self.TEXTS)
        np.testing.assert_allclose(raw / norms[:, None], unit,
                                   rtol=1e-5, atol=1e-6)

    def test_batching_does_not_change_the_rows(self, encoder):
        one = encoder.encode_texts(self.TEXTS, batch_size=1)
        all_at_once = encoder.encode_texts(self.TEXTS, batch_size=4)
        np.testing.assert_allclose(one, all_at_once, rtol=1e-5, atol=1e-6)

    def test_different_texts_differ(self, encoder):
        emb = encoder.encode_texts(self.TEXTS)
        assert not np.allclose(emb[0], emb[3], atol=1e-3)


class TestDeterminism:
    def test_reloaded_encoder_reproduces_bytes(self, checkpoint, tmp_path):
        images = load_images(tmp_path, count=3)
        texts = ["a photo of subject", "two regions touching"]
        runs = []
        for _ in range(2):
            enc = ClipEncoder.from_checkpoint(checkpoint)
            cls, patches = enc.encode_regions(images, batch_size=2)
            emb = enc.encode_texts(texts)
            runs.append((cls.tobytes(), patches.tobytes(), emb.tobytes()))
        assert runs[0] == runs[1]
