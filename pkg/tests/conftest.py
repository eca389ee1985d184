"""Shared helpers for the test suite."""

from __future__ import annotations

import numpy as np
import pytest

from descrel import pack as pack_mod


def unit_vec(rng: np.random.Generator, dim: int) -> np.ndarray:
    v = rng.standard_normal(dim)
    return (v / np.linalg.norm(v)).astype(np.float32)


def unit_rows(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    rows = rng.standard_normal((count, dim))
    rows /= np.linalg.norm(rows, axis=1, keepdims=True)
    return rows.astype(np.float32)


def numeric_grad(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of a scalar function, elementwise."""
    x = np.array(x, dtype=np.float64)
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def random_pack(rng: np.random.Generator, relations: int, descriptions: int,
                dim: int) -> pack_mod.DescriptionPack:
    """Pack with random unit embeddings and a random valid association table."""
    while True:
        assoc = rng.integers(-1, 2, size=(relations, descriptions))
        if assoc.astype(bool).any(axis=1).all():
            break
    texts = [(f"cue {i} present", f"cue {i} absent") for i in range(descriptions)]
    return pack_mod.build_pack(
        [f"rel_{i}" for i in range(relations)], assoc, texts,
        unit_rows(rng, descriptions, dim), unit_rows(rng, descriptions, dim))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240817)
