"""Shared fixture builders for the test suite."""

import numpy as np

from ccup import ClassManifest, EmbeddingMatrix


def unit_columns(rng: np.random.Generator, dim: int, count: int) -> np.ndarray:
    cols = rng.standard_normal((dim, count))
    return cols / np.linalg.norm(cols, axis=0)


def unit_matrix(rng: np.random.Generator, dim: int, count: int) -> EmbeddingMatrix:
    return EmbeddingMatrix(dim, count, unit_columns(rng, dim, count), normalized=True)


def f32_matrix(rng: np.random.Generator, dim: int, count: int) -> EmbeddingMatrix:
    """Random matrix whose entries are exactly float32-representable."""
    values = rng.standard_normal((dim, count)).astype(np.float32).astype(np.float64)
    return EmbeddingMatrix(dim, count, values)


def alternating_manifest(count: int) -> ClassManifest:
    return ClassManifest.from_pairs(
        (f"class_{i:03d}", "forget" if i % 2 == 0 else "retain") for i in range(count)
    )
