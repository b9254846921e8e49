"""Synthetic non-IID linear regression streams for federated simulation.

Each client observes pairs ``(x, y)`` with ``y = w_star . x + noise``:
inputs are zero-mean Gaussian with a client-specific variance, noise is
zero-mean Gaussian with a client-specific variance, and the ground-truth
coefficient vector is shared by the whole network.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._validation import check_positive, check_vector
from .rng import generator, seed_sequence, substream

INPUT_VARIANCE_RANGE = (0.2, 1.2)
NOISE_VARIANCE_RANGE = (0.005, 0.025)

#: Default train/calibration/test split of the 1000-sample per-client budget.
DEFAULT_SPLIT = (600, 200, 200)


def unit_model(dim: int) -> np.ndarray:
    """Unit-energy ground-truth vector ``(1/sqrt(dim)) * ones``."""
    check_positive(dim, "dim")
    return np.full(dim, 1.0 / math.sqrt(dim))


@dataclass(frozen=True)
class ClientDataConfig:
    """Per-client distribution parameters and sample budget."""

    input_variance: float
    noise_variance: float
    n_train: int = DEFAULT_SPLIT[0]
    n_cal: int = DEFAULT_SPLIT[1]
    n_test: int = DEFAULT_SPLIT[2]

    def __post_init__(self):
        check_positive(self.input_variance, "input_variance")
        check_positive(self.noise_variance, "noise_variance")
        for name in ("n_train", "n_cal", "n_test"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def n_total(self) -> int:
        return self.n_train + self.n_cal + self.n_test


def draw_client_configs(
    n_clients: int,
    rng: np.random.Generator,
    *,
    input_variance_range: tuple[float, float] = INPUT_VARIANCE_RANGE,
    noise_variance_range: tuple[float, float] = NOISE_VARIANCE_RANGE,
    split: tuple[int, int, int] = DEFAULT_SPLIT,
) -> list[ClientDataConfig]:
    """Draw per-client variances uniformly from the configured ranges.

    One row of uniforms is consumed per client, in client order, so the
    configs of existing clients are unchanged when ``n_clients`` grows.
    """
    if n_clients < 1:
        raise ValueError(f"n_clients must be at least 1, got {n_clients}")
    lo_in, hi_in = input_variance_range
    lo_no, hi_no = noise_variance_range
    if not (0 < lo_in < hi_in and 0 < lo_no < hi_no):
        raise ValueError("variance ranges must be positive and increasing")
    u = rng.random((n_clients, 2))
    n_train, n_cal, n_test = split
    return [
        ClientDataConfig(
            input_variance=lo_in + (hi_in - lo_in) * u[k, 0],
            noise_variance=lo_no + (hi_no - lo_no) * u[k, 1],
            n_train=n_train,
            n_cal=n_cal,
            n_test=n_test,
        )
        for k in range(n_clients)
    ]


def generate_sample(
    true_model: np.ndarray,
    config: ClientDataConfig,
    rng: np.random.Generator,
    *,
    x: np.ndarray | None = None,
    noise: float | None = None,
) -> tuple[np.ndarray, float]:
    """One ``(x, y)`` pair from the client's stream.

    ``x`` and ``noise`` may be injected to pin the randomness in tests;
    injected parts consume nothing from ``rng``.
    """
    w = check_vector(true_model, "true_model")
    if x is None:
        x = math.sqrt(config.input_variance) * rng.standard_normal(w.shape[0])
    else:
        x = check_vector(x, "x", dim=w.shape[0])
    if noise is None:
        noise = math.sqrt(config.noise_variance) * rng.standard_normal()
    return x, float(w @ x) + float(noise)


def generate_samples(
    true_model: np.ndarray,
    config: ClientDataConfig,
    n: int,
    rng: np.random.Generator,
) -> tuple[np.ndarray, np.ndarray]:
    """``n`` stream-ordered pairs as arrays ``(X, y)``.

    Draws one row of ``dim + 1`` standard normals per sample (inputs first,
    noise last), which makes the batch consume the generator exactly like
    ``n`` successive :func:`generate_sample` calls.
    """
    w = check_vector(true_model, "true_model")
    if n < 0:
        raise ValueError(f"n must be non-negative, got {n}")
    z = rng.standard_normal((n, w.shape[0] + 1))
    x = math.sqrt(config.input_variance) * z[:, :-1]
    noise = math.sqrt(config.noise_variance) * z[:, -1]
    return x, x @ w + noise


@dataclass(frozen=True)
class ClientDataset:
    """Contiguous train/calibration/test partition of one client's stream."""

    train_x: np.ndarray
    train_y: np.ndarray
    cal_x: np.ndarray
    cal_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray


def build_dataset(
    true_model: np.ndarray,
    config: ClientDataConfig,
    rng: np.random.Generator,
) -> ClientDataset:
    """Generate the client's full stream and split it contiguously."""
    x, y = generate_samples(true_model, config, config.n_total, rng)
    a, b = config.n_train, config.n_train + config.n_cal
    return ClientDataset(
        train_x=x[:a],
        train_y=y[:a],
        cal_x=x[a:b],
        cal_y=y[a:b],
        test_x=x[b:],
        test_y=y[b:],
    )


def build_federated_datasets(
    true_model: np.ndarray,
    configs: list[ClientDataConfig],
    seed=None,
) -> list[ClientDataset]:
    """One dataset per client, each from its own child stream of ``seed``."""
    root = seed_sequence(seed)
    return [
        build_dataset(true_model, cfg, generator(substream(root, k)))
        for k, cfg in enumerate(configs)
    ]
