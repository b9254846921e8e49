"""Robust federated calibration from histogram sketches.

Clients never ship raw calibration scores.  Each one normalizes its scores
into [0, 1], bins them into a shared histogram grid, and reports the
resulting frequency vector (a point on the probability simplex) plus its
sample count.  The server compares the reported vectors pairwise, scores
each client by the average distance to its nearest neighbors, keeps the
clients that sit in the dense majority, and reads the conformal quantile
off the mixture histogram of the kept clients.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._validation import (
    check_alpha,
    check_index_range,
    check_positive,
    check_scores,
    check_vector,
)

#: Scale factor that makes the MAD a consistent sigma estimate for Gaussians.
MAD_CONSISTENCY = 1.4826

#: Default cutoff (in consistent-MAD units) for the unknown-count detector.
MAD_CUTOFF = 3.0

KNOWN_COUNT = "known-count"
MAD = "mad"


@dataclass(frozen=True)
class HistogramSpec:
    """Shared binning grid: edges over [0, 1] plus the normalization scale."""

    boundaries: np.ndarray
    score_scale: float

    def __post_init__(self):
        edges = np.asarray(self.boundaries, dtype=float)
        if edges.ndim != 1 or edges.size < 2:
            raise ValueError("boundaries must be a 1-D array of at least 2 edges")
        if edges[0] != 0.0 or edges[-1] != 1.0:
            raise ValueError("boundaries must start at 0 and end at 1")
        if not np.all(np.diff(edges) > 0):
            raise ValueError("boundaries must be strictly increasing")
        check_positive(self.score_scale, "score_scale")
        object.__setattr__(self, "boundaries", edges)

    @classmethod
    def uniform(cls, n_bins: int, score_scale: float) -> "HistogramSpec":
        """``n_bins`` equal-width bins over [0, 1]."""
        check_positive(n_bins, "n_bins")
        return cls(np.linspace(0.0, 1.0, n_bins + 1), score_scale)

    @property
    def n_bins(self) -> int:
        return int(self.boundaries.size - 1)


@dataclass(frozen=True)
class CharacterizationVector:
    """One client's report: bin frequencies and the count behind them."""

    probabilities: np.ndarray
    n_points: int

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=float)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("probabilities must be a non-empty 1-D array")
        if self.n_points < 1:
            raise ValueError(f"n_points must be positive, got {self.n_points}")
        if np.any(p < 0):
            raise ValueError("probabilities must be non-negative")
        if abs(p.sum() - 1.0) > 1e-9:
            raise ValueError(f"probabilities must sum to 1, got {p.sum()!r}")
        counts = p * self.n_points
        if np.max(np.abs(counts - np.round(counts))) > 1e-6:
            raise ValueError("probabilities must be empirical frequencies")
        object.__setattr__(self, "probabilities", p)

    @property
    def n_bins(self) -> int:
        return int(self.probabilities.size)


def characterize(scores: np.ndarray, spec: HistogramSpec) -> CharacterizationVector:
    """Summarize raw scores into the shared histogram grid.

    Scores are divided by the normalization scale and clipped into [0, 1];
    bins are left-closed except the last, which also includes its right
    edge, so a normalized score of exactly 1 is counted rather than dropped.
    """
    scores = check_scores(scores, "scores")
    normalized = np.clip(scores / spec.score_scale, 0.0, 1.0)
    counts, _ = np.histogram(normalized, bins=spec.boundaries)
    return CharacterizationVector(
        probabilities=counts / scores.shape[0], n_points=scores.shape[0]
    )


def _stack(vectors: list[CharacterizationVector]) -> np.ndarray:
    if not vectors:
        raise ValueError("vectors must not be empty")
    n_bins = vectors[0].n_bins
    if any(v.n_bins != n_bins for v in vectors):
        raise ValueError("all characterization vectors must share the bin count")
    return np.stack([v.probabilities for v in vectors])


def pairwise_distances(vectors: list[CharacterizationVector]) -> np.ndarray:
    """Euclidean distance between every pair of reported vectors."""
    p = _stack(vectors)
    diff = p[:, None, :] - p[None, :, :]
    return np.sqrt(np.sum(diff * diff, axis=2))


def maliciousness_scores(distances: np.ndarray, n_benign: int) -> np.ndarray:
    """Average distance from each client to its ``n_benign - 1`` nearest peers.

    A client surrounded by many similar reports scores low; a client whose
    reports sit away from every dense cluster scores high.
    """
    d = np.asarray(distances, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError("distances must be a square matrix")
    n_clients = d.shape[0]
    if not 2 <= n_benign <= n_clients:
        raise ValueError(
            f"n_benign must lie in [2, {n_clients}], got {n_benign}"
        )
    work = d.copy()
    np.fill_diagonal(work, np.inf)
    nearest = np.sort(work, axis=1)[:, : n_benign - 1]
    return np.mean(nearest, axis=1)


def select_benign_known(maliciousness: np.ndarray, n_benign: int) -> np.ndarray:
    """Indices of the ``n_benign`` lowest-scoring clients, ties by index."""
    m = check_vector(maliciousness, "maliciousness")
    check_index_range(n_benign, "n_benign", 1, m.shape[0])
    order = np.argsort(m, kind="stable")
    return np.sort(order[:n_benign])


def select_benign_mad(
    maliciousness: np.ndarray, cutoff: float = MAD_CUTOFF
) -> np.ndarray:
    """Clients whose score sits within ``cutoff`` consistent-MADs of the median.

    When the MAD degenerates to 0 (at least half the scores identical), only
    the clients exactly at the median are kept.
    """
    m = check_vector(maliciousness, "maliciousness")
    if m.shape[0] < 3:
        raise ValueError(f"need at least 3 clients, got {m.shape[0]}")
    check_positive(cutoff, "cutoff")
    median = np.median(m)
    deviation = np.abs(m - median)
    mad = np.median(deviation)
    if mad == 0.0:
        keep = deviation == 0.0
    else:
        keep = deviation <= cutoff * MAD_CONSISTENCY * mad
    return np.flatnonzero(keep)


@dataclass(frozen=True)
class MaliciousnessReport:
    """Outcome of one detection pass over the clients' reports."""

    maliciousness: np.ndarray
    benign: np.ndarray
    method: str

    def __post_init__(self):
        if self.method not in (KNOWN_COUNT, MAD):
            raise ValueError(f"unknown detection method {self.method!r}")
        m = check_vector(self.maliciousness, "maliciousness")
        benign = np.asarray(self.benign, dtype=np.intp)
        if benign.ndim != 1 or benign.size == 0:
            raise ValueError("benign must be a non-empty 1-D index array")
        if benign.min() < 0 or benign.max() >= m.shape[0]:
            raise ValueError("benign indices out of range")
        object.__setattr__(self, "maliciousness", m)
        object.__setattr__(self, "benign", benign)


def detect_benign(
    vectors: list[CharacterizationVector],
    n_benign: int | None = None,
    *,
    cutoff: float = MAD_CUTOFF,
) -> MaliciousnessReport:
    """Full detection pass: distances, maliciousness, benign selection.

    With ``n_benign`` given, exactly that many clients are kept.  Without
    it, neighbor counts assume a simple majority of honest clients and the
    MAD rule decides how many to keep.
    """
    n_clients = len(vectors)
    if n_benign is None:
        neighbors_from = n_clients // 2 + 1
    else:
        check_index_range(n_benign, "n_benign", 2, n_clients)
        neighbors_from = n_benign
    distances = pairwise_distances(vectors)
    maliciousness = maliciousness_scores(distances, neighbors_from)
    if n_benign is None:
        benign = select_benign_mad(maliciousness, cutoff)
        method = MAD
    else:
        benign = select_benign_known(maliciousness, n_benign)
        method = KNOWN_COUNT
    return MaliciousnessReport(
        maliciousness=maliciousness, benign=benign, method=method
    )


def histogram_quantile(
    vectors: list[CharacterizationVector],
    spec: HistogramSpec,
    alpha: float,
) -> float:
    """Conformal quantile read off the kept clients' mixture histogram.

    The mixture weights each client's vector by its sample count.  The
    target level carries the same finite-sample correction as the raw-score
    quantile; the value is linearly interpolated inside the bin where the
    cumulative mass crosses the level, then mapped back to the raw scale.
    """
    check_alpha(alpha)
    p = _stack(vectors)
    if p.shape[1] != spec.n_bins:
        raise ValueError("vectors do not match the histogram grid")
    weights = np.array([v.n_points for v in vectors], dtype=float)
    n_total = weights.sum()
    # work on whole sample counts, not probabilities: the cumulative count
    # is exact, so the crossing bin cannot drift by a rounding ulp
    counts = np.rint(weights @ p)
    rank = min(math.ceil((1.0 - alpha) * (n_total + 1)), n_total)
    cum = np.cumsum(counts)
    h = int(np.searchsorted(cum, rank, side="left"))
    h = min(h, spec.n_bins - 1)
    below = cum[h - 1] if h > 0 else 0.0
    if counts[h] > 0.0:
        frac = min(max((rank - below) / counts[h], 0.0), 1.0)
    else:
        frac = 1.0
    left, right = spec.boundaries[h], spec.boundaries[h + 1]
    return float((left + frac * (right - left)) * spec.score_scale)
