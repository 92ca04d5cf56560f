"""Independent verification of the closed-form transform.

Evaluates the regularized unlearning objective

    J(W) = ||W - I||_F^2 + lam ||W F||_F^2 + mu ||W R - R||_F^2

term by term, provides its analytic gradient

    dJ/dW = 2 (W - I) + 2 lam W F F^T + 2 mu (W R - R) R^T,

and minimizes J by plain gradient descent with backtracking line
search.  J is strictly convex in W (its Hessian is positive definite),
so the descent result must match the closed-form solution; disagreement
indicates a defect in one of the two routes.  None of this code shares
a solve path with the closed form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .projections import (
    METHOD_ORACLE,
    Provenance,
    ProjectionMatrix,
    RegularizationConfig,
)
from .store import EmbeddingMatrix

ARMIJO_C = 1e-4
MAX_HALVINGS = 60


class NonConvergenceError(RuntimeError):
    """Descent hit the iteration cap; carries the best iterate seen."""

    def __init__(self, best: np.ndarray, gradient_norm: float, iterations: int):
        self.best = best
        self.gradient_norm = gradient_norm
        self.iterations = iterations
        super().__init__(
            f"gradient norm {gradient_norm:.3e} after {iterations} iterations "
            f"did not reach tolerance"
        )


@dataclass(frozen=True)
class ObjectiveValue:
    """Term-by-term objective evaluation; total is the exact sum."""

    total: float
    identity_term: float
    forget_term: float
    retain_term: float


def _coerce(
    w: ProjectionMatrix | np.ndarray,
    forget_texts: EmbeddingMatrix | np.ndarray,
    retain_texts: EmbeddingMatrix | np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    w_arr = w.values if isinstance(w, ProjectionMatrix) else np.asarray(w, dtype=np.float64)
    f = forget_texts.values if isinstance(forget_texts, EmbeddingMatrix) else np.asarray(forget_texts, dtype=np.float64)
    r = retain_texts.values if isinstance(retain_texts, EmbeddingMatrix) else np.asarray(retain_texts, dtype=np.float64)
    d = f.shape[0]
    if w_arr.shape != (d, d) or r.shape[0] != d:
        raise ValueError(
            f"dimension mismatch: W is {w_arr.shape}, forget columns live in "
            f"R^{d}, retain columns in R^{r.shape[0]}"
        )
    return w_arr, f, r


def objective(
    w: ProjectionMatrix | np.ndarray,
    forget_texts: EmbeddingMatrix | np.ndarray,
    retain_texts: EmbeddingMatrix | np.ndarray,
    config: RegularizationConfig,
) -> ObjectiveValue:
    w_arr, f, r = _coerce(w, forget_texts, retain_texts)
    eye = np.eye(w_arr.shape[0])
    identity_term = float(np.sum((w_arr - eye) ** 2))
    forget_term = float(config.lam * np.sum((w_arr @ f) ** 2))
    retain_term = float(config.mu * np.sum((w_arr @ r - r) ** 2))
    return ObjectiveValue(
        total=identity_term + forget_term + retain_term,
        identity_term=identity_term,
        forget_term=forget_term,
        retain_term=retain_term,
    )


def gradient(
    w: ProjectionMatrix | np.ndarray,
    forget_texts: EmbeddingMatrix | np.ndarray,
    retain_texts: EmbeddingMatrix | np.ndarray,
    config: RegularizationConfig,
) -> np.ndarray:
    w_arr, f, r = _coerce(w, forget_texts, retain_texts)
    eye = np.eye(w_arr.shape[0])
    grad = 2.0 * (w_arr - eye)
    grad += 2.0 * config.lam * (w_arr @ f) @ f.T
    grad += 2.0 * config.mu * (w_arr @ r - r) @ r.T
    return grad


def finite_difference_gradient(
    w: ProjectionMatrix | np.ndarray,
    forget_texts: EmbeddingMatrix | np.ndarray,
    retain_texts: EmbeddingMatrix | np.ndarray,
    config: RegularizationConfig,
    step: float = 1e-6,
) -> np.ndarray:
    """Central-difference gradient, entry by entry (small dims only)."""
    w_arr, f, r = _coerce(w, forget_texts, retain_texts)
    d = w_arr.shape[0]
    grad = np.empty((d, d))
    for i in range(d):
        for j in range(d):
            bumped = w_arr.copy()
            bumped[i, j] = w_arr[i, j] + step
            plus = objective(bumped, f, r, config).total
            bumped[i, j] = w_arr[i, j] - step
            minus = objective(bumped, f, r, config).total
            grad[i, j] = (plus - minus) / (2.0 * step)
    return grad


def minimize(
    forget_texts: EmbeddingMatrix | np.ndarray,
    retain_texts: EmbeddingMatrix | np.ndarray,
    config: RegularizationConfig,
    max_iters: int = 50000,
    tolerance: float = 1e-5,
) -> ProjectionMatrix:
    """Gradient descent from W = I until the gradient norm reaches tolerance.

    Backtracking line search: step halves until the Armijo decrease
    condition (constant 1e-4) holds.  Raises NonConvergenceError with
    the best iterate if the cap is hit first.
    """
    if tolerance <= 0:
        raise ValueError(f"tolerance must be positive, got {tolerance}")
    f = forget_texts.values if isinstance(forget_texts, EmbeddingMatrix) else np.asarray(forget_texts, dtype=np.float64)
    r = retain_texts.values if isinstance(retain_texts, EmbeddingMatrix) else np.asarray(retain_texts, dtype=np.float64)
    d = f.shape[0]
    if r.shape[0] != d:
        raise ValueError(
            f"dimension mismatch: forget columns live in R^{d}, retain in R^{r.shape[0]}"
        )

    w = np.eye(d)
    value = objective(w, f, r, config).total
    step = 1.0
    best_w, best_value, best_norm = w, value, np.inf

    for iteration in range(max_iters + 1):
        grad = gradient(w, f, r, config)
        grad_norm = float(np.linalg.norm(grad))
        if grad_norm < best_norm:
            best_w, best_value, best_norm = w, value, grad_norm
        if grad_norm <= tolerance:
            return ProjectionMatrix(
                d,
                w,
                Provenance(method=METHOD_ORACLE, lam=config.lam, mu=config.mu),
            )
        if iteration == max_iters:
            break

        step = min(1.0, 2.0 * step)
        sq_norm = grad_norm**2
        for _ in range(MAX_HALVINGS):
            candidate = w - step * grad
            candidate_value = objective(candidate, f, r, config).total
            if candidate_value <= value - ARMIJO_C * step * sq_norm:
                break
            step *= 0.5
        else:
            break
        w, value = candidate, candidate_value

    raise NonConvergenceError(best_w, best_norm, max_iters)
