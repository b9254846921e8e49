"""Split conformal prediction for point regressors.

Nonconformity is the absolute residual.  With calibration scores
``r_1..r_N`` and miscoverage ``alpha``, the interval half-width is the
``ceil((1 - alpha) * (N + 1))``-th smallest score (the largest score when
that rank exceeds ``N``), and intervals are the point prediction plus or
minus that half-width.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._validation import check_alpha, check_matrix, check_scores, check_vector


def absolute_scores(model: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Absolute residuals ``|y - x @ model|``."""
    model = check_vector(model, "model")
    x = check_matrix(x, "x", dim=model.shape[0])
    y = check_vector(y, "y", dim=x.shape[0])
    return np.abs(y - x @ model)


def conformal_rank(n: int, alpha: float) -> int:
    """1-based order statistic picked from ``n`` scores, clamped to ``n``."""
    if n < 1:
        raise ValueError(f"need at least one score, got {n}")
    check_alpha(alpha)
    return min(math.ceil((1.0 - alpha) * (n + 1)), n)


def conformal_quantile(scores: np.ndarray, alpha: float) -> float:
    """Finite-sample-corrected upper quantile of the scores."""
    scores = check_scores(scores, "scores")
    rank = conformal_rank(scores.shape[0], alpha)
    return float(np.partition(scores, rank - 1)[rank - 1])


def pooled_quantile(score_sets: list[np.ndarray], alpha: float) -> float:
    """Conformal quantile of all clients' scores pooled into one multiset.

    Empty per-client sets are allowed and contribute nothing; at least one
    score must be present overall.
    """
    arrays = [np.asarray(s, dtype=float).ravel() for s in score_sets]
    pooled = np.concatenate(arrays) if arrays else np.empty(0)
    if pooled.size == 0:
        raise ValueError("pooled score sets must contain at least one score")
    return conformal_quantile(pooled, alpha)


@dataclass(frozen=True)
class PredictionInterval:
    """Symmetric interval around a point prediction."""

    center: float
    radius: float

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError(f"radius must be non-negative, got {self.radius}")

    @property
    def lower(self) -> float:
        return self.center - self.radius

    @property
    def upper(self) -> float:
        return self.center + self.radius

    @property
    def width(self) -> float:
        return 2.0 * self.radius

    def contains(self, y: float) -> bool:
        return self.lower <= y <= self.upper


def predict_interval(
    model: np.ndarray, x: np.ndarray, radius: float
) -> PredictionInterval:
    """Interval for one input at the given half-width."""
    model = check_vector(model, "model")
    x = check_vector(x, "x", dim=model.shape[0])
    return PredictionInterval(center=float(model @ x), radius=float(radius))


def coverage_and_width(
    model: np.ndarray, x: np.ndarray, y: np.ndarray, radius: float
) -> tuple[float, float]:
    """Fraction of targets inside their interval, and the (constant) width.

    Containment is inclusive at both endpoints.
    """
    if radius < 0:
        raise ValueError(f"radius must be non-negative, got {radius}")
    residuals = absolute_scores(model, x, y)
    return float(np.mean(residuals <= radius)), 2.0 * float(radius)
