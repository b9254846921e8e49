"""Tests for synthetic data generation."""

import math

import numpy as np
import pytest

from fedconformal.data import (
    DEFAULT_SPLIT,
    INPUT_VARIANCE_RANGE,
    NOISE_VARIANCE_RANGE,
    ClientDataConfig,
    build_dataset,
    build_federated_datasets,
    draw_client_configs,
    generate_sample,
    generate_samples,
    unit_model,
)
from fedconformal.rng import generator, seed_sequence, substream


def test_unit_model_has_unit_energy():
    for dim in (1, 2, 50):
        w = unit_model(dim)
        assert w.shape == (dim,)
        assert np.all(w == w[0])
        assert w @ w == pytest.approx(1.0, abs=1e-12)


def test_unit_model_rejects_nonpositive_dim():
    with pytest.raises(ValueError):
        unit_model(0)
    with pytest.raises(ValueError):
        unit_model(-3)


def test_client_config_validation():
    with pytest.raises(ValueError):
        ClientDataConfig(input_variance=0.0, noise_variance=0.01)
    with pytest.raises(ValueError):
        ClientDataConfig(input_variance=0.5, noise_variance=-0.01)
    with pytest.raises(ValueError):
        ClientDataConfig(input_variance=0.5, noise_variance=0.01, n_train=-1)
    cfg = ClientDataConfig(input_variance=0.5, noise_variance=0.01)
    assert cfg.n_total == sum(DEFAULT_SPLIT)


def test_draw_client_configs_within_ranges():
    configs = draw_client_configs(100, generator(7))
    assert len(configs) == 100
    for cfg in configs:
        assert INPUT_VARIANCE_RANGE[0] <= cfg.input_variance <= INPUT_VARIANCE_RANGE[1]
        assert NOISE_VARIANCE_RANGE[0] <= cfg.noise_variance <= NOISE_VARIANCE_RANGE[1]
        assert (cfg.n_train, cfg.n_cal, cfg.n_test) == DEFAULT_SPLIT


def test_draw_client_configs_deterministic_and_prefix_stable():
    few = draw_client_configs(3, generator(11))
    many = draw_client_configs(8, generator(11))
    # growing the population must not reshuffle the existing clients
    for a, b in zip(few, many):
        assert a == b


def test_draw_client_configs_rejects_empty_population():
    with pytest.raises(ValueError):
        draw_client_configs(0, generator(1))


def test_draw_client_configs_mean_matches_uniform_law():
    # mean of U(a, b) is (a + b) / 2: 0.7 for inputs, 0.015 for noise
    configs = draw_client_configs(20000, generator(13))
    in_mean = np.mean([c.input_variance for c in configs])
    no_mean = np.mean([c.noise_variance for c in configs])
    assert in_mean == pytest.approx(0.7, abs=0.01)
    assert no_mean == pytest.approx(0.015, abs=0.0003)


def test_generate_sample_with_injected_randomness():
    # y = w . x + noise exactly when both parts are pinned
    cfg = ClientDataConfig(input_variance=4.0, noise_variance=0.09)
    w = np.array([0.6, 0.8])
    x, y = generate_sample(w, cfg, generator(0), x=np.array([1.0, 2.0]), noise=0.5)
    assert np.array_equal(x, [1.0, 2.0])
    assert y == pytest.approx(0.6 + 1.6 + 0.5, abs=1e-12)

    w50 = unit_model(50)
    _, y50 = generate_sample(w50, cfg, generator(0), x=np.ones(50), noise=0.0)
    assert y50 == pytest.approx(math.sqrt(50), abs=1e-12)


def test_generate_samples_statistics():
    # Var(y) = input_variance * |w|^2 + noise_variance for the unit model
    cfg = ClientDataConfig(input_variance=0.5, noise_variance=0.02)
    w = unit_model(4)
    x, y = generate_samples(w, cfg, 200000, generator(17))
    assert abs(x.mean()) < 0.01
    assert x.var() == pytest.approx(0.5, rel=0.03)
    assert y.var() == pytest.approx(0.52, rel=0.03)
    assert (y - x @ w).var() == pytest.approx(0.02, rel=0.03)


def test_generate_samples_matches_sequential_draws():
    cfg = ClientDataConfig(input_variance=0.8, noise_variance=0.01)
    w = unit_model(3)
    batch_x, batch_y = generate_samples(w, cfg, 25, generator(23))
    rng = generator(23)
    for i in range(25):
        x, y = generate_sample(w, cfg, rng)
        assert np.array_equal(batch_x[i], x)
        assert batch_y[i] == pytest.approx(y, abs=1e-12)


def test_generate_samples_rejects_negative_count():
    cfg = ClientDataConfig(input_variance=0.5, noise_variance=0.01)
    with pytest.raises(ValueError):
        generate_samples(unit_model(2), cfg, -1, generator(0))


def test_build_dataset_splits_the_stream_contiguously():
    cfg = ClientDataConfig(
        input_variance=0.5, noise_variance=0.01, n_train=7, n_cal=4, n_test=3
    )
    w = unit_model(5)
    ds = build_dataset(w, cfg, generator(31))
    full_x, full_y = generate_samples(w, cfg, cfg.n_total, generator(31))
    assert ds.train_x.shape == (7, 5)
    assert ds.cal_x.shape == (4, 5)
    assert ds.test_x.shape == (3, 5)
    assert np.array_equal(np.vstack([ds.train_x, ds.cal_x, ds.test_x]), full_x)
    assert np.array_equal(
        np.concatenate([ds.train_y, ds.cal_y, ds.test_y]), full_y
    )


def test_build_dataset_allows_empty_parts():
    cfg = ClientDataConfig(
        input_variance=0.5, noise_variance=0.01, n_train=0, n_cal=1, n_test=0
    )
    ds = build_dataset(unit_model(2), cfg, generator(0))
    assert ds.train_x.shape == (0, 2)
    assert ds.cal_x.shape == (1, 2)
    assert ds.test_x.shape == (0, 2)


def test_build_federated_datasets_per_client_streams():
    w = unit_model(4)
    configs = [
        ClientDataConfig(
            input_variance=0.3 + 0.1 * k,
            noise_variance=0.01,
            n_train=5,
            n_cal=2,
            n_test=2,
        )
        for k in range(4)
    ]
    datasets = build_federated_datasets(w, configs, seed=101)
    again = build_federated_datasets(w, configs, seed=101)
    for a, b in zip(datasets, again):
        assert np.array_equal(a.train_x, b.train_x)
        assert np.array_equal(a.test_y, b.test_y)

    # each client reads its own child stream, so dropping the tail clients
    # leaves the remaining ones untouched
    prefix = build_federated_datasets(w, configs[:2], seed=101)
    for a, b in zip(prefix, datasets):
        assert np.array_equal(a.train_x, b.train_x)
        assert np.array_equal(a.cal_y, b.cal_y)

    # and each client's stream is the documented child of the root seed
    root = seed_sequence(101)
    direct = build_dataset(w, configs[2], generator(substream(root, 2)))
    assert np.array_equal(direct.train_x, datasets[2].train_x)
