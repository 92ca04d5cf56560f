"""Projection and transformation matrices for class unlearning.

Given unit-norm text embeddings for the forget classes (columns of F)
and optionally the retain classes (columns of R), this module builds:

* the hard nullspace projector  P = I - F (F^T F)^-1 F^T,
  which zeroes every component lying in span(F);
* the regularized closed-form transform
  W = (I + mu R R^T) (I + lam F F^T + mu R R^T)^-1,
  the unique minimizer of
  ||W - I||_F^2 + lam ||W F||_F^2 + mu ||W R - R||_F^2;
* ablation variants of that objective with individual terms removed;
* a partial-strength projector interpolating identity and P.

With lam = 0 the closed form is exactly the identity (no unlearning);
with mu = 0 and lam -> infinity it converges to the nullspace projector.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import linalg as sla

from .store import PROVENANCE_SUFFIX, EmbeddingMatrix, read_emb1, write_emb1

C1 = "C1"  # identity preservation term ||W - I||^2
C2 = "C2"  # forgetting term lam ||W F||^2
C3 = "C3"  # retention term mu ||W R - R||^2
ALL_COMPONENTS = frozenset({C1, C2, C3})

METHOD_NULLSPACE = "nullspace"
METHOD_CCUP = "ccup"
METHOD_ABLATION = "ablation"
METHOD_PARTIAL = "partial"
METHOD_ORACLE = "oracle"

# Relative singular-value cutoff for rank-revealing factorizations.
RANK_CUTOFF = 1e-10
# Gram-inverse construction is used only below this condition estimate.
GRAM_COND_LIMIT = 1e6
# Projected columns with norm below this are treated as fully erased.
DEGENERATE_NORM = 1e-12


class ComponentConfigError(ValueError):
    """Invalid ablation component set."""


class DegenerateFeatureError(ValueError):
    """Projection collapsed one or more feature columns to numerical zero."""

    def __init__(self, indices: list[int]):
        self.indices = list(indices)
        super().__init__(
            f"projection left column(s) {self.indices} with norm below "
            f"{DEGENERATE_NORM:g}; these features lie in the erased subspace"
        )


@dataclass(frozen=True)
class RegularizationConfig:
    """Forgetting strength ``lam`` and retention strength ``mu``."""

    lam: float = 100.0
    mu: float = 1.0

    def __post_init__(self) -> None:
        for name, value in (("lam", self.lam), ("mu", self.mu)):
            if not np.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value}")
            if value < 0:
                raise ValueError(f"{name} must be non-negative, got {value}")


@dataclass(frozen=True)
class Provenance:
    """How a projection matrix was constructed."""

    method: str
    lam: float | None = None
    mu: float | None = None
    components: tuple[str, ...] | None = None
    alpha: float | None = None

    def to_json_obj(self) -> dict:
        return {
            "method": self.method,
            "lambda": self.lam,
            "mu": self.mu,
            "components": list(self.components) if self.components is not None else None,
            "alpha": self.alpha,
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "Provenance":
        components = obj.get("components")
        return cls(
            method=obj["method"],
            lam=obj.get("lambda"),
            mu=obj.get("mu"),
            components=tuple(components) if components is not None else None,
            alpha=obj.get("alpha"),
        )


@dataclass(frozen=True)
class ProjectionMatrix:
    """A d x d transform with a record of how it was built."""

    dim: int
    values: np.ndarray
    provenance: Provenance

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (self.dim, self.dim):
            raise ValueError(
                f"projection values shape {values.shape} does not match dim {self.dim}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("projection matrix entries must all be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


def _as_columns(matrix: EmbeddingMatrix | np.ndarray) -> np.ndarray:
    if isinstance(matrix, EmbeddingMatrix):
        return matrix.values
    arr = np.asarray(matrix, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError("expected a 2-D column stack")
    if not np.all(np.isfinite(arr)):
        raise ValueError("embedding columns must be finite")
    return arr


def _orthonormal_basis(columns: np.ndarray) -> np.ndarray:
    """Rank-revealing orthonormal basis of the column space."""
    u, s, _ = np.linalg.svd(columns, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return u[:, :0]
    rank = int(np.sum(s > RANK_CUTOFF * s[0]))
    return u[:, :rank]


def nullspace_projector(
    forget_texts: EmbeddingMatrix | np.ndarray,
    construction: str = "auto",
) -> ProjectionMatrix:
    """Projector that annihilates the span of the forget-class embeddings.

    ``construction`` selects the Gram-inverse form I - F (F^T F)^-1 F^T
    ("gram"), the orthonormal-basis form I - Q Q^T ("basis"), or picks
    automatically: Gram when F has full column rank and the Gram matrix
    is well conditioned, basis otherwise.  The two coincide in the
    full-rank case; the basis form also handles rank deficiency, which
    is not an error.
    """
    cols = _as_columns(forget_texts)
    d, m = cols.shape
    if m < 1:
        raise ValueError("nullspace projector needs at least one forget column")

    if construction not in ("auto", "gram", "basis"):
        raise ValueError(f"unknown construction {construction!r}")

    if construction == "auto":
        s = np.linalg.svd(cols, compute_uv=False)
        full_rank = s.size > 0 and s[-1] > RANK_CUTOFF * s[0]
        gram_cond = (s[0] / s[-1]) ** 2 if full_rank else np.inf
        construction = "gram" if full_rank and gram_cond <= GRAM_COND_LIMIT else "basis"

    if construction == "gram":
        gram = cols.T @ cols
        solved = sla.solve(gram, cols.T, assume_a="pos")
        values = np.eye(d) - cols @ solved
    else:
        basis = _orthonormal_basis(cols)
        values = np.eye(d) - basis @ basis.T

    return ProjectionMatrix(d, values, Provenance(method=METHOD_NULLSPACE, alpha=1.0))


def ccup_matrix(
    forget_texts: EmbeddingMatrix | np.ndarray,
    retain_texts: EmbeddingMatrix | np.ndarray,
    config: RegularizationConfig,
) -> ProjectionMatrix:
    """Closed-form minimizer of the regularized unlearning objective.

    Computes W = N D^-1 with N = I + mu R R^T and
    D = I + lam F F^T + mu R R^T.  D is symmetric positive definite for
    lam, mu >= 0, so the product is obtained from a Cholesky solve; the
    inverse is never materialized.  lam = 0 makes numerator and
    denominator identical, so the identity is returned exactly.
    """
    f_cols = _as_columns(forget_texts)
    r_cols = _as_columns(retain_texts)
    d = f_cols.shape[0]
    if f_cols.shape[1] < 1:
        raise ValueError("need at least one forget-class column")
    if r_cols.shape[0] != d:
        raise ValueError(
            f"dimension mismatch: forget columns have dim {d}, "
            f"retain columns have dim {r_cols.shape[0]}"
        )

    provenance = Provenance(method=METHOD_CCUP, lam=config.lam, mu=config.mu)
    values = _solve_regularized(f_cols, r_cols, config.lam, config.mu)
    return ProjectionMatrix(d, values, provenance)


def _solve_regularized(
    f_cols: np.ndarray, r_cols: np.ndarray, lam: float, mu: float
) -> np.ndarray:
    d = f_cols.shape[0]
    if lam == 0.0:
        if mu == 0.0:
            warnings.warn(
                "lam = 0 and mu = 0: the transform is the identity and "
                "performs no unlearning",
                stacklevel=3,
            )
        # Numerator equals denominator, so the solution is exactly I.
        return np.eye(d)
    retain_gram = mu * (r_cols @ r_cols.T)
    numer = np.eye(d) + retain_gram
    denom = numer + lam * (f_cols @ f_cols.T)
    factor = sla.cho_factor(denom)
    # W = N D^-1; both N and D are symmetric, so W^T = D^-1 N.
    return sla.cho_solve(factor, numer).T


def ablation_matrix(
    forget_texts: EmbeddingMatrix | np.ndarray,
    retain_texts: EmbeddingMatrix | np.ndarray,
    config: RegularizationConfig,
    components: frozenset[str] | set[str],
) -> ProjectionMatrix:
    """Minimize the unlearning objective with omitted terms removed.

    The forgetting term (C2) is mandatory; a variant without it is not
    an unlearning method.  C1+C2+C3 reproduces the full closed form,
    C1+C2 gives (I + lam F F^T)^-1, and C2+C3 gives the
    minimum-Frobenius-norm minimizer
    W = mu R R^T pinv(lam F F^T + mu R R^T).
    """
    components = frozenset(components)
    if not components <= ALL_COMPONENTS:
        raise ComponentConfigError(
            f"unknown component(s) {sorted(components - ALL_COMPONENTS)}"
        )
    if C2 not in components:
        raise ComponentConfigError(
            "component C2 (the forgetting term) must be present"
        )

    f_cols = _as_columns(forget_texts)
    r_cols = _as_columns(retain_texts)
    d = f_cols.shape[0]
    if r_cols.shape[0] != d:
        raise ValueError("dimension mismatch between forget and retain columns")

    lam, mu = config.lam, config.mu
    has_c1 = C1 in components
    has_c3 = C3 in components

    if has_c1 and has_c3:
        values = _solve_regularized(f_cols, r_cols, lam, mu)
    elif has_c1:
        if lam == 0.0:
            values = np.eye(d)
        else:
            denom = np.eye(d) + lam * (f_cols @ f_cols.T)
            values = sla.cho_solve(sla.cho_factor(denom), np.eye(d))
    else:
        retain_gram = mu * (r_cols @ r_cols.T)
        denom = lam * (f_cols @ f_cols.T) + retain_gram
        values = retain_gram @ np.linalg.pinv(denom, rcond=RANK_CUTOFF, hermitian=True)

    provenance = Provenance(
        method=METHOD_ABLATION,
        lam=lam,
        mu=mu,
        components=tuple(sorted(components)),
    )
    return ProjectionMatrix(d, values, provenance)


def partial_projector(
    forget_texts: EmbeddingMatrix | np.ndarray,
    alpha: float,
) -> ProjectionMatrix:
    """Fractional-strength erasure P_alpha = I - alpha Q Q^T.

    alpha = 0 is the identity, alpha = 1 reproduces the full nullspace
    projector, and a unit vector inside the erased span keeps norm
    1 - alpha.
    """
    if not np.isfinite(alpha) or not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    base = nullspace_projector(forget_texts)
    d = base.dim
    values = (1.0 - alpha) * np.eye(d) + alpha * base.values
    return ProjectionMatrix(d, values, Provenance(method=METHOD_PARTIAL, alpha=float(alpha)))


def project_columns(
    proj_values: np.ndarray, columns: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Apply a transform column-wise and renormalize.

    Returns the transformed unit columns plus the indices of columns
    whose image had norm below the degenerate cutoff; those columns are
    zeroed rather than renormalized from numerical dust.
    """
    transformed = proj_values @ columns
    norms = np.linalg.norm(transformed, axis=0)
    degenerate = np.flatnonzero(norms < DEGENERATE_NORM)
    safe = norms.copy()
    safe[degenerate] = 1.0
    result = transformed / safe
    if degenerate.size:
        result[:, degenerate] = 0.0
    return result, degenerate


def apply_projection(
    proj: ProjectionMatrix, features: EmbeddingMatrix
) -> EmbeddingMatrix:
    """Transform image features: x -> W x / ||W x||.

    A column that lands almost entirely in the erased subspace (norm
    below 1e-12) is an error listing the offending indices.
    """
    if proj.dim != features.dim:
        raise ValueError(
            f"projection dim {proj.dim} does not match feature dim {features.dim}"
        )
    result, degenerate = project_columns(proj.values, features.values)
    if degenerate.size:
        raise DegenerateFeatureError(degenerate.tolist())
    return EmbeddingMatrix(features.dim, features.count, result, normalized=True)


def save_projection(proj: ProjectionMatrix, path: str | Path) -> None:
    """Serialize to an EMB1 container plus a provenance sidecar."""
    matrix = EmbeddingMatrix(proj.dim, proj.dim, proj.values)
    write_emb1(matrix, path)
    sidecar = Path(path).with_suffix(PROVENANCE_SUFFIX)
    sidecar.write_text(json.dumps(proj.provenance.to_json_obj(), indent=2) + "\n")


def load_projection(path: str | Path) -> ProjectionMatrix:
    matrix = read_emb1(path)
    if matrix.dim != matrix.count:
        raise ValueError(
            f"projection container must be square, got {matrix.dim} x {matrix.count}"
        )
    sidecar = Path(path).with_suffix(PROVENANCE_SUFFIX)
    if not sidecar.exists():
        raise FileNotFoundError(f"provenance sidecar not found: {sidecar}")
    provenance = Provenance.from_json_obj(json.loads(sidecar.read_text()))
    return ProjectionMatrix(matrix.dim, matrix.values, provenance)
