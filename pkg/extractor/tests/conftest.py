"""Shared fixtures: a tiny randomly-initialized CLIP checkpoint and images.

The checkpoint is constructed locally (no downloads): a byte-level
vocabulary with no merges gives a working tokenizer for arbitrary ASCII
text, and a two-layer CLIP with a 32px image grid and 16px patches keeps
every forward pass tiny (4 patch tokens, joint dim 16). One checkpoint
directory is built per test session and reloaded from disk by the code
under test, exactly like a real model id.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest
import torch
from PIL import Image
from tokenizers import pre_tokenizers
from transformers import (CLIPConfig, CLIPImageProcessor, CLIPModel,
                          CLIPProcessor, CLIPTokenizer)
from transformers.utils import logging as hf_logging

hf_logging.disable_progress_bar()

IMAGE_SIZE = 32
PATCH_SIZE = 16
PROJECTION_DIM = 16


def build_tokenizer() -> CLIPTokenizer:
    alphabet = sorted(pre_tokenizers.ByteLevel.alphabet())
    vocab = {"<|startoftext|>": 0, "<|endoftext|>": 1}
    for char in alphabet:
        vocab[char] = len(vocab)
    for char in alphabet:
        vocab[char + "</w>"] = len(vocab)
    return CLIPTokenizer(vocab=vocab, merges=[])


def build_checkpoint(directory: Path, seed: int = 11) -> Path:
    tokenizer = build_tokenizer()
    config = CLIPConfig(
        projection_dim=PROJECTION_DIM,
        text_config=dict(
            vocab_size=len(tokenizer), hidden_size=20, intermediate_size=40,
            num_hidden_layers=2, num_attention_heads=2,
            max_position_embeddings=77,
            bos_token_id=tokenizer.bos_token_id,
            eos_token_id=tokenizer.eos_token_id,
            pad_token_id=tokenizer.pad_token_id),
        vision_config=dict(
            hidden_size=24, intermediate_size=48, num_hidden_layers=2,
            num_attention_heads=2, image_size=IMAGE_SIZE,
            patch_size=PATCH_SIZE, num_channels=3))
    torch.manual_seed(seed)
    model = CLIPModel(config).eval()
    image_processor = CLIPImageProcessor(
        do_resize=True, size={"shortest_edge": IMAGE_SIZE},
        do_center_crop=True,
        crop_size={"height": IMAGE_SIZE, "width": IMAGE_SIZE})
    processor = CLIPProcessor(image_processor=image_processor,
                              tokenizer=tokenizer)
    model.save_pretrained(directory)
    processor.save_pretrained(directory)
    return directory


@pytest.fixture(scope="session")
def checkpoint(tmp_path_factory) -> Path:
    return build_checkpoint(tmp_path_factory.mktemp("clip") / "ckpt")


@pytest.fixture(scope="session")
def encoder(checkpoint):
    from descrel_extractor.encoder import ClipEncoder

    return ClipEncoder.from_checkpoint(checkpoint)


def write_image(path: Path, seed: int, width: int = 48, height: int = 40) -> Path:
    rng = np.random.default_rng(seed)
    pixels = (rng.random((height, width, 3)) * 255).astype(np.uint8)
    Image.fromarray(pixels).save(path)
    return path


@pytest.fixture()
def scene_dir(tmp_path) -> Path:
    """Four images plus a six-pair request manifest over three relations."""
    directory = tmp_path / "scenes"
    directory.mkdir()
    for i in range(4):
        write_image(directory / f"img{i}.png", seed=100 + i)
    manifest = {
        "relations": ["above", "below", "beside"],
        "pairs": [
            {"image": "img0.png", "subject_box": [0, 0, 20, 18],
             "object_box": [10, 12, 40, 36], "relation": "above"},
            {"image": "img0.png", "subject_box": [4, 6, 30, 30],
             "object_box": [20, 2, 46, 22], "relation": "beside"},
            {"image": "img1.png", "subject_box": [2, 2, 24, 20],
             "object_box": [8, 16, 44, 38], "relation": "below"},
            {"image": "img2.png", "subject_box": [0, 8, 18, 32],
             "object_box": [16, 4, 40, 28], "relation": "above"},
            {"image": "img2.png", "subject_box": [12, 0, 36, 22],
             "object_box": [4, 14, 28, 38], "relation": "beside"},
            {"image": "img3.png", "subject_box": [6, 4, 30, 26],
             "object_box": [14, 10, 46, 40], "relation": "below"},
        ],
    }
    (directory / "requests.json").write_text(json.dumps(manifest, indent=2))
    return directory


PACK_SPEC = {
    "relations": [
        {"name": "above", "associations": [1, -1, 0, 0]},
        {"name": "below", "associations": [-1, 1, 0, 0]},
        {"name": "beside", "associations": [0, 0, 1, -1]},
    ],
    "descriptions": [
        {"raw": "the subject sits higher in the frame than the object",
         "opposite": "the subject sits lower in the frame than the object"},
        {"raw": "the object covers part of the area under the subject",
         "opposite": "nothing sits under the subject"},
        {"raw": "both regions share a horizontal band of the image",
         "opposite": "the regions occupy separate horizontal bands"},
        {"raw": "one region contains the other completely",
         "opposite": "neither region contains the other"},
    ],
}


@pytest.fixture()
def pack_spec_path(tmp_path) -> Path:
    path = tmp_path / "pack_spec.json"
    path.write_text(json.dumps(PACK_SPEC, indent=2))
    return path
