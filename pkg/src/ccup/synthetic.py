"""Synthetic unit-sphere cluster benchmarks with known ground truth.

Each class gets a mean direction on the unit sphere; image vectors are
the mean plus isotropic Gaussian noise, renormalized, and the class text
embedding is the mean rotated by a fixed angle.  Mean directions start
mutually orthogonal; an ``overlap`` parameter blends each forget-class
mean toward a paired retain-class mean to impose a chosen cosine
similarity between them, which is the stress case where hard nullspace
erasure starts to damage retained classes.

The generator stands in for real image/text encoder output at desk
scale; it makes no attempt to mimic encoder statistics such as
anisotropy.  Everything is deterministic in the seed, with per-class
counter-based substreams so per-class generation order never matters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .classifier import classify, subset_accuracy
from .store import FORGET, RETAIN, ClassManifest, EmbeddingMatrix, LabeledDataset


class InfeasibleSpecError(ValueError):
    """The requested geometry cannot be realized."""


class UnsupportedConfigurationError(ValueError):
    """The analytic bound is not defined for this configuration."""


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of a generated unit-sphere cluster benchmark.

    ``concentration`` is the standard deviation of the isotropic
    perturbation added to a class mean before renormalization;
    ``text_noise`` is the angle (radians) between a class's text
    embedding and its image-cluster mean; ``overlap`` is the cosine
    similarity imposed between each forget-class mean and its paired
    retain-class mean.
    """

    dim: int
    n_classes: int
    images_per_class: int
    concentration: float
    text_noise: float = 0.0
    overlap: float = 0.0
    seed: int = 0
    forget_fraction: float = 0.4

    def __post_init__(self) -> None:
        if self.dim < 1 or self.n_classes < 1 or self.images_per_class < 1:
            raise ValueError("dim, n_classes, and images_per_class must be positive")
        for name in ("concentration", "text_noise", "overlap", "forget_fraction"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.concentration < 0 or self.text_noise < 0:
            raise ValueError("concentration and text_noise must be non-negative")
        if not 0.0 <= self.overlap <= 1.0:
            raise ValueError(f"overlap must lie in [0, 1], got {self.overlap}")
        if not 0.0 < self.forget_fraction < 1.0:
            raise ValueError("forget_fraction must lie in (0, 1)")

    @property
    def forget_classes(self) -> int:
        return math.ceil(self.forget_fraction * self.n_classes)

    def to_json_obj(self) -> dict:
        return {
            "dim": self.dim,
            "n_classes": self.n_classes,
            "images_per_class": self.images_per_class,
            "concentration": self.concentration,
            "text_noise": self.text_noise,
            "overlap": self.overlap,
            "seed": self.seed,
            "forget_fraction": self.forget_fraction,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "SyntheticSpec":
        return cls(**obj)


def _rng(entropy: np.random.SeedSequence) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(entropy))


def _unit(v: np.ndarray) -> np.ndarray:
    return v / np.linalg.norm(v)


def generate(spec: SyntheticSpec) -> tuple[LabeledDataset, ClassManifest, EmbeddingMatrix]:
    """Build (labeled image features, manifest, class text embeddings).

    Classes are named ``class_00`` onward; the first
    ceil(forget_fraction * n_classes) are the forget set, the rest the
    retain set (class means are exchangeable, so the assignment carries
    no bias).  Forget mean k is blended toward retain mean
    ``k mod n_retain`` when overlap > 0.
    """
    d, k_total = spec.dim, spec.n_classes
    if k_total > d:
        raise InfeasibleSpecError(
            f"{k_total} orthogonal class means do not fit in dimension {d}"
        )
    n_forget = spec.forget_classes
    n_retain = k_total - n_forget
    if n_retain == 0:
        raise InfeasibleSpecError("forget_fraction leaves no retain classes")
    if spec.overlap > 0.0 and n_retain < 1:
        raise InfeasibleSpecError("overlap requires at least one retain class")

    root = np.random.SeedSequence(spec.seed)
    mean_seq, text_seq, *image_seqs = root.spawn(2 + k_total)

    rng = _rng(mean_seq)
    raw = rng.standard_normal((d, k_total))
    means, _ = np.linalg.qr(raw)

    # Blend forget means toward their paired retain means to impose the
    # requested cosine similarity; retain means stay orthonormal.
    if spec.overlap > 0.0:
        means = means.copy()
        coeff = math.sqrt(1.0 - spec.overlap**2)
        for i in range(n_forget):
            partner = n_forget + (i % n_retain)
            means[:, i] = spec.overlap * means[:, partner] + coeff * means[:, i]

    text_rng = _rng(text_seq)
    texts = np.empty((d, k_total))
    for c in range(k_total):
        mean = means[:, c]
        w = text_rng.standard_normal(d)
        w -= (w @ mean) * mean
        w = _unit(w)
        texts[:, c] = _unit(
            math.cos(spec.text_noise) * mean + math.sin(spec.text_noise) * w
        )

    n_img = spec.images_per_class
    features = np.empty((d, k_total * n_img))
    labels = np.empty(k_total * n_img, dtype=np.int64)
    for c in range(k_total):
        class_rng = _rng(image_seqs[c])
        noise = class_rng.standard_normal((d, n_img))
        block = means[:, c : c + 1] + spec.concentration * noise
        norms = np.linalg.norm(block, axis=0)
        if np.any(norms == 0.0):
            raise InfeasibleSpecError(f"class {c} produced a zero image vector")
        features[:, c * n_img : (c + 1) * n_img] = block / norms
        labels[c * n_img : (c + 1) * n_img] = c

    manifest = ClassManifest.from_pairs(
        (f"class_{c:02d}", FORGET if c < n_forget else RETAIN) for c in range(k_total)
    )
    dataset = LabeledDataset(
        features=EmbeddingMatrix(d, k_total * n_img, features, normalized=True),
        labels=tuple(int(v) for v in labels),
    )
    class_texts = EmbeddingMatrix(d, k_total, texts, normalized=True)
    return dataset, manifest, class_texts


def oracle_retention_bound(
    spec: SyntheticSpec, manifest: ClassManifest | None = None
) -> float:
    """Reference ceiling for post-erasure retain accuracy.

    Returns the before-forgetting retain accuracy of the generated
    fixture; reports use it to contextualize the retention gap left by
    a transform that annihilates the forget-text span.  Only defined
    for orthogonal mean geometry (overlap = 0); other configurations
    are rejected because no analytic ceiling exists there.
    """
    if spec.overlap != 0.0:
        raise UnsupportedConfigurationError(
            f"retention bound is only defined for overlap = 0, got {spec.overlap}"
        )
    dataset, generated_manifest, class_texts = generate(spec)
    manifest = manifest or generated_manifest
    if len(manifest) != len(generated_manifest):
        raise ValueError(
            f"manifest lists {len(manifest)} classes but the spec generates "
            f"{len(generated_manifest)}"
        )
    scores = classify(dataset.features, class_texts)
    labels = np.asarray(dataset.labels, dtype=np.int64)
    return subset_accuracy(scores.predictions, labels, set(manifest.retain_indices))
