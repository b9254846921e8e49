"""Byzantine client behaviour, for training uploads and calibration reports.

Training-time attackers intermittently add Gaussian noise to the model they
upload; the perturbation lives on the wire only, so the attacker's own local
model keeps training cleanly.  Calibration-time attackers ignore their data
and fabricate the normalized score vector they report.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._validation import check_nonnegative, check_vector


@dataclass(frozen=True)
class TrainingAttackConfig:
    """Intermittent additive-noise model poisoning.

    Each round, each Byzantine client flips a coin with success probability
    ``attack_probability``; on success it adds zero-mean Gaussian noise with
    per-coordinate variance ``noise_variance`` to its upload.
    """

    attack_probability: float
    noise_variance: float
    byzantine: tuple[int, ...] = ()

    def __post_init__(self):
        if not 0.0 <= self.attack_probability <= 1.0:
            raise ValueError(
                f"attack_probability must lie in [0, 1], got {self.attack_probability}"
            )
        check_nonnegative(self.noise_variance, "noise_variance")
        byz = tuple(int(k) for k in self.byzantine)
        if any(k < 0 for k in byz):
            raise ValueError("byzantine client indices must be non-negative")
        if len(set(byz)) != len(byz):
            raise ValueError("byzantine client indices must not repeat")
        object.__setattr__(self, "byzantine", tuple(sorted(byz)))

    def is_byzantine(self, client: int) -> bool:
        return client in self.byzantine


def corrupt_upload(
    update: np.ndarray,
    is_byzantine: bool,
    attack: TrainingAttackConfig,
    rng: np.random.Generator,
) -> np.ndarray:
    """The vector that actually reaches the server.

    Benign uploads pass through untouched (and consume no randomness).  A
    Byzantine upload is perturbed with probability ``attack_probability``;
    the noise is drawn over every coordinate, so whatever coordinate subset
    the round shares, the shared part carries the perturbation.
    """
    update = check_vector(update, "update")
    if not is_byzantine or attack.attack_probability == 0.0:
        return update
    if rng.random() >= attack.attack_probability:
        return update
    if attack.noise_variance == 0.0:
        return update
    noise = np.sqrt(attack.noise_variance) * rng.standard_normal(update.shape[0])
    return update + noise


EFFICIENCY = "efficiency"
COVERAGE = "coverage"
RANDOM = "random"
NONE = "none"

_CALIBRATION_KINDS = (EFFICIENCY, COVERAGE, RANDOM, NONE)


@dataclass(frozen=True)
class CalibrationAttack:
    """Fabricated normalized-score reports.

    ``efficiency`` reports all zeros (drags the quantile down, shrinking
    coverage), ``coverage`` reports all ones (drags it up, inflating
    intervals), ``random`` reports uniform draws from ``[low, high)``.
    ``none`` marks the honest baseline and cannot fabricate.
    """

    kind: str = NONE
    low: float = 0.8
    high: float = 1.0

    def __post_init__(self):
        if self.kind not in _CALIBRATION_KINDS:
            raise ValueError(
                f"kind must be one of {_CALIBRATION_KINDS}, got {self.kind!r}"
            )
        if not 0.0 <= self.low <= self.high <= 1.0:
            raise ValueError(
                f"need 0 <= low <= high <= 1, got low={self.low}, high={self.high}"
            )
        if self.kind == RANDOM and not self.low < self.high:
            raise ValueError("random fabrication needs low < high")

    @classmethod
    def none(cls) -> "CalibrationAttack":
        return cls(kind=NONE)

    @classmethod
    def efficiency(cls) -> "CalibrationAttack":
        return cls(kind=EFFICIENCY)

    @classmethod
    def coverage(cls) -> "CalibrationAttack":
        return cls(kind=COVERAGE)

    @classmethod
    def random(cls, low: float = 0.8, high: float = 1.0) -> "CalibrationAttack":
        return cls(kind=RANDOM, low=low, high=high)

    @property
    def active(self) -> bool:
        return self.kind != NONE


def fabricate_scores(
    attack: CalibrationAttack, n: int, rng: np.random.Generator
) -> np.ndarray:
    """``n`` fabricated scores on the normalized [0, 1] scale."""
    if n < 0:
        raise ValueError(f"n must be non-negative, got {n}")
    if attack.kind == EFFICIENCY:
        return np.zeros(n)
    if attack.kind == COVERAGE:
        return np.ones(n)
    if attack.kind == RANDOM:
        return attack.low + (attack.high - attack.low) * rng.random(n)
    raise ValueError("an inactive attack cannot fabricate scores")
