"""Cosine-similarity zero-shot classification over class text embeddings."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .store import EmbeddingMatrix, normalize_columns

SCORE_SCALE = 100.0


@dataclass(frozen=True)
class SimilarityScores:
    """Scaled cosine similarities (n_images x n_classes) and argmax picks."""

    scores: np.ndarray
    predictions: np.ndarray

    def __post_init__(self) -> None:
        scores = np.asarray(self.scores, dtype=np.float64)
        predictions = np.asarray(self.predictions, dtype=np.int64)
        if scores.ndim != 2 or predictions.shape != (scores.shape[0],):
            raise ValueError("scores must be n_images x n_classes with one prediction per row")
        scores.setflags(write=False)
        predictions.setflags(write=False)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "predictions", predictions)

    @property
    def image_count(self) -> int:
        return self.scores.shape[0]

    @property
    def class_count(self) -> int:
        return self.scores.shape[1]


def classify(features: EmbeddingMatrix, class_texts: EmbeddingMatrix) -> SimilarityScores:
    """Score every image against every class text embedding.

    scores[j, i] = 100 * x_j . (y_i / ||y_i||) with x_j unit-normalized
    (features are normalized here if their flag is unset).  Predictions
    are the per-row argmax; ties go to the lowest class index.
    """
    if features.dim != class_texts.dim:
        raise ValueError(
            f"feature dim {features.dim} does not match text dim {class_texts.dim}"
        )
    if class_texts.count < 1:
        raise ValueError("need at least one class text embedding")

    text_norms = np.linalg.norm(class_texts.values, axis=0)
    zero = np.flatnonzero(text_norms == 0.0)
    if zero.size:
        raise ValueError(f"class text embedding(s) {zero.tolist()} have zero norm")
    texts = class_texts.values / text_norms

    if features.normalized:
        images = features.values
    else:
        images = normalize_columns(features).values

    scores = SCORE_SCALE * (images.T @ texts)
    predictions = np.argmax(scores, axis=1)
    return SimilarityScores(scores=scores, predictions=predictions)


def subset_accuracy(
    predictions: np.ndarray,
    labels: np.ndarray,
    subset: set[int] | None = None,
) -> float:
    """Top-1 accuracy (percent) over images whose true label is in subset."""
    labels = np.asarray(labels, dtype=np.int64)
    predictions = np.asarray(predictions, dtype=np.int64)
    if labels.shape != predictions.shape:
        raise ValueError("labels and predictions must have equal length")
    if subset is None:
        mask = np.ones(labels.shape, dtype=bool)
    else:
        mask = np.isin(labels, sorted(subset))
    total = int(mask.sum())
    if total == 0:
        raise ValueError("accuracy is undefined: no image has a label in the subset")
    correct = int(np.sum(predictions[mask] == labels[mask]))
    return 100.0 * correct / total


def accuracy(
    scores: SimilarityScores,
    labels: list[int] | np.ndarray,
    subset: set[int] | None = None,
) -> float:
    """Top-1 accuracy (percent) of the argmax predictions.

    When ``subset`` is given, only images whose true label falls in the
    subset enter numerator and denominator.
    """
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape[0] != scores.image_count:
        raise ValueError(
            f"label list length {labels.shape[0]} does not match "
            f"image count {scores.image_count}"
        )
    return subset_accuracy(scores.predictions, labels, subset)
