"""Tests for the partial-sharing federated training loop."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fedconformal.attacks import TrainingAttackConfig
from fedconformal.data import (
    build_federated_datasets,
    draw_client_configs,
    unit_model,
)
from fedconformal.oracles import check_full_sharing_equivalence
from fedconformal.rng import generator, seed_sequence, substream
from fedconformal.training import (
    SELECTION_STREAM,
    SelectionMask,
    TrainingConfig,
    client_innovation,
    client_update,
    draw_mask,
    draw_round_masks,
    mse_objective,
    run_training,
    server_aggregate,
)


def _federated_sets(n_clients, dim, n_train, seed):
    root = seed_sequence(seed)
    configs = draw_client_configs(
        n_clients, generator(substream(root, 0)), split=(n_train, 0, 0)
    )
    w = unit_model(dim)
    datasets = build_federated_datasets(w, configs, substream(root, 1))
    return w, [(d.train_x, d.train_y) for d in datasets], substream(root, 2)


class TestSelectionMask:
    def test_basic_properties(self):
        mask = SelectionMask([2, 0], dim=4)
        assert mask.n_shared == 2
        assert np.array_equal(mask.indices, [0, 2])
        assert np.array_equal(mask.flags, [True, False, True, False])
        assert mask == SelectionMask([0, 2], dim=4)
        assert mask != SelectionMask([0, 2], dim=5)

    def test_rejects_bad_indices(self):
        with pytest.raises(ValueError):
            SelectionMask([0, 0], dim=3)
        with pytest.raises(ValueError):
            SelectionMask([3], dim=3)
        with pytest.raises(ValueError):
            SelectionMask([-1], dim=3)

    def test_blend_picks_shared_coordinates(self):
        mask = SelectionMask([0], dim=2)
        out = mask.blend(np.array([2.0, 5.0]), np.array([3.0, 7.0]))
        assert np.array_equal(out, [2.0, 7.0])

    def test_blend_with_itself_is_identity(self):
        mask = SelectionMask([1, 3], dim=5)
        v = np.arange(5.0)
        assert np.array_equal(mask.blend(v, v), v)

    @given(
        st.lists(
            st.floats(allow_nan=False, allow_infinity=False, width=32),
            min_size=1,
            max_size=8,
        ),
        st.data(),
    )
    @settings(max_examples=50, deadline=None)
    def test_blend_and_project_properties(self, values, data):
        dim = len(values)
        n_shared = data.draw(st.integers(min_value=0, max_value=dim))
        picks = data.draw(
            st.permutations(range(dim)).map(lambda p: sorted(p[:n_shared]))
        )
        mask = SelectionMask(np.array(picks, dtype=int), dim=dim)
        v = np.array(values, dtype=float)
        zero = np.zeros(dim)
        # projecting twice is the same as projecting once
        assert np.array_equal(mask.project(mask.project(v)), mask.project(v))
        # a blend splits the vector into complementary parts
        assert np.array_equal(
            mask.blend(v, zero) + mask.blend(zero, v), v
        )


class TestDrawMasks:
    def test_extreme_sizes(self):
        rng = generator(0)
        assert draw_mask(4, 4, rng).n_shared == 4
        assert draw_mask(4, 0, rng).n_shared == 0
        with pytest.raises(ValueError):
            draw_mask(4, 5, rng)
        with pytest.raises(ValueError):
            draw_mask(4, -1, rng)

    def test_each_row_has_exactly_n_shared(self):
        flags = draw_round_masks(200, 50, 15, generator(3))
        assert flags.shape == (200, 50)
        assert np.all(flags.sum(axis=1) == 15)

    def test_inclusion_is_uniform_over_coordinates(self):
        # every coordinate is shared with frequency n_shared / dim
        flags = draw_round_masks(4000, 50, 15, generator(5))
        freq = flags.mean(axis=0)
        assert np.all(np.abs(freq - 0.3) < 0.025)

    def test_consumption_is_independent_of_n_shared(self):
        # two runs differing only in subset size draw the same uniforms,
        # leave the generator in the same state, and produce nested subsets
        rng_a, rng_b = generator(9), generator(9)
        small = draw_round_masks(10, 8, 3, rng_a)
        large = draw_round_masks(10, 8, 7, rng_b)
        assert np.all(large[small])
        assert rng_a.random() == rng_b.random()


class TestClientStep:
    def test_innovation_hand_example(self):
        mask = SelectionMask([0], dim=2)
        err = client_innovation(
            np.array([2.0, 5.0]), np.array([3.0, 7.0]), mask,
            np.array([1.0, 1.0]), 10.0,
        )
        assert err == pytest.approx(1.0, abs=1e-12)

    def test_innovation_full_and_empty_masks(self):
        g, l = np.array([0.0, 0.0]), np.array([1.0, 0.0])
        x = np.array([1.0, 0.0])
        assert client_innovation(g, l, SelectionMask([0, 1], 2), x, 1.0) == 1.0
        # with nothing shared the local model makes the prediction
        assert client_innovation(g, l, SelectionMask([], 2), x, 1.0) == 0.0

    def test_update_hand_example(self):
        mask = SelectionMask([0], dim=2)
        out = client_update(
            np.array([2.0, 5.0]), np.array([3.0, 7.0]), mask,
            np.array([1.0, 1.0]), 10.0, 0.1,
        )
        assert np.allclose(out, [2.1, 7.1], atol=1e-12)

    def test_update_moves_along_the_input(self):
        mask = SelectionMask([0, 1], dim=2)
        out = client_update(
            np.zeros(2), np.zeros(2), mask, np.array([1.0, 0.0]), 1.0, 0.5
        )
        assert np.array_equal(out, [0.5, 0.0])

    def test_update_with_zero_input_keeps_the_blend(self):
        mask = SelectionMask([1], dim=2)
        g, l = np.array([4.0, 9.0]), np.array([1.0, 2.0])
        out = client_update(g, l, mask, np.zeros(2), 3.0, 0.2)
        assert np.array_equal(out, mask.blend(g, l))

    def test_update_rejects_nonpositive_step(self):
        mask = SelectionMask([0], dim=1)
        with pytest.raises(ValueError):
            client_update(np.zeros(1), np.zeros(1), mask, np.ones(1), 1.0, 0.0)


class TestServerAggregate:
    def test_single_full_upload_replaces_the_model(self):
        up = np.array([3.0, 4.0])
        out = server_aggregate(np.zeros(2), [(0, SelectionMask([0, 1], 2), up)])
        assert np.array_equal(out, up)

    def test_single_empty_upload_keeps_the_model(self):
        g = np.array([3.0, 4.0])
        out = server_aggregate(g, [(0, SelectionMask([], 2), np.ones(2))])
        assert np.array_equal(out, g)

    def test_two_client_hand_example(self):
        g = np.zeros(2)
        uploads = [
            (0, SelectionMask([0], 2), np.array([1.0, 9.0])),
            (1, SelectionMask([1], 2), np.array([9.0, 2.0])),
        ]
        out = server_aggregate(g, uploads)
        assert np.allclose(out, [0.5, 1.0], atol=1e-12)

    def test_upload_order_does_not_matter(self):
        g = np.array([1.0, -1.0, 0.5])
        uploads = [
            (2, SelectionMask([0], 3), np.array([3.0, 0.0, 0.0])),
            (0, SelectionMask([1, 2], 3), np.array([0.0, 2.0, 2.0])),
            (1, SelectionMask([0, 2], 3), np.array([-1.0, 0.0, 4.0])),
        ]
        assert np.array_equal(
            server_aggregate(g, uploads), server_aggregate(g, uploads[::-1])
        )

    def test_rejects_empty_uploads(self):
        with pytest.raises(ValueError):
            server_aggregate(np.zeros(2), [])


def test_mse_objective_values():
    assert mse_objective(np.array([1.0]), np.array([[2.0]]), np.array([5.0])) == 9.0
    w = unit_model(3)
    x = generator(0).standard_normal((10, 3))
    assert mse_objective(w, x, x @ w) == pytest.approx(0.0, abs=1e-15)
    with pytest.raises(ValueError):
        mse_objective(w, np.empty((0, 3)), np.empty(0))


class TestTrainingConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            TrainingConfig(dim=4, n_clients=2, n_shared=5)
        with pytest.raises(ValueError):
            TrainingConfig(dim=4, n_clients=2, n_shared=2, participants_per_round=3)
        with pytest.raises(ValueError):
            TrainingConfig(dim=4, n_clients=2, n_shared=2, n_rounds=-1)
        with pytest.raises(ValueError):
            TrainingConfig(dim=4, n_clients=2, n_shared=2, step_size=0.0)

    def test_degenerate_sizes_are_allowed(self):
        cfg = TrainingConfig(dim=4, n_clients=2, n_shared=0, n_rounds=0)
        assert cfg.participants == 2


class TestRunTraining:
    def test_zero_rounds_returns_the_initial_state(self):
        _, sets, seed = _federated_sets(3, 4, 5, seed=0)
        cfg = TrainingConfig(dim=4, n_clients=3, n_shared=2, n_rounds=0)
        out = run_training(cfg, sets, seed=seed)
        assert np.array_equal(out.model, np.zeros(4))
        assert np.array_equal(out.local_models, np.zeros((3, 4)))
        assert out.rounds == 0

    def test_validates_train_sets(self):
        cfg = TrainingConfig(dim=3, n_clients=2, n_shared=1)
        good = (np.ones((4, 3)), np.ones(4))
        with pytest.raises(ValueError):
            run_training(cfg, [good])
        with pytest.raises(ValueError):
            run_training(cfg, [good, (np.ones((4, 2)), np.ones(4))])
        with pytest.raises(ValueError):
            run_training(cfg, [good, (np.empty((0, 3)), np.empty(0))])

    def test_converges_without_attack(self):
        w, sets, seed = _federated_sets(20, 10, 100, seed=42)
        cfg = TrainingConfig(
            dim=10, n_clients=20, n_shared=3, step_size=0.08,
            participants_per_round=5, n_rounds=400,
        )
        out = run_training(cfg, sets, true_model=w, seed=seed)
        assert out.mse_trace.shape == (400,)
        assert out.mse_trace[0] > 0.5
        assert out.mse_trace[-1] < 0.02
        assert np.mean(out.mse_trace[-50:]) < 0.01

    def test_traces_are_consistent_with_the_final_model(self):
        w, sets, seed = _federated_sets(4, 3, 10, seed=7)
        cfg = TrainingConfig(dim=3, n_clients=4, n_shared=2, n_rounds=20)
        out = run_training(
            cfg, sets, true_model=w, seed=seed, record_models=True
        )
        assert out.model_trace.shape == (20, 3)
        assert np.array_equal(out.model_trace[-1], out.model)
        dev = out.model - w
        assert out.mse_trace[-1] == pytest.approx(dev @ dev, abs=1e-15)

    def test_unselected_clients_never_move(self):
        _, sets, seed = _federated_sets(5, 3, 10, seed=3)
        cfg = TrainingConfig(
            dim=3, n_clients=5, n_shared=2, participants_per_round=2, n_rounds=3
        )
        out = run_training(cfg, sets, seed=seed)
        # replay the selection stream to learn who participated
        sel = generator(substream(seed_sequence(seed), SELECTION_STREAM))
        chosen = set()
        for _ in range(3):
            chosen.update(int(k) for k in sel.choice(5, size=2, replace=False))
        for k in range(5):
            if k not in chosen:
                assert np.array_equal(out.local_models[k], np.zeros(3))
        assert any(not np.array_equal(out.local_models[k], np.zeros(3))
                   for k in chosen)

    def test_cursors_walk_the_stream_cyclically(self):
        # tiling a client's data must not change what the rounds consume
        w, sets, seed = _federated_sets(2, 3, 3, seed=11)
        tiled = [(np.tile(x, (2, 1)), np.tile(y, 2)) for x, y in sets]
        cfg = TrainingConfig(dim=3, n_clients=2, n_shared=1, n_rounds=7)
        out_a = run_training(cfg, sets, seed=seed)
        out_b = run_training(cfg, tiled, seed=seed)
        assert np.array_equal(out_a.model, out_b.model)

    def test_same_seed_reproduces_bitwise(self):
        w, sets, seed = _federated_sets(6, 4, 8, seed=13)
        cfg = TrainingConfig(
            dim=4, n_clients=6, n_shared=2, participants_per_round=3, n_rounds=25
        )
        atk = TrainingAttackConfig(0.5, 0.2, byzantine=(0, 1))
        out_a = run_training(cfg, sets, attack=atk, seed=seed)
        out_b = run_training(cfg, sets, attack=atk, seed=seed)
        assert np.array_equal(out_a.model, out_b.model)
        assert np.array_equal(out_a.local_models, out_b.local_models)

    def test_corruption_stays_on_the_wire(self):
        # after one all-shared round the attacker's stored local model is the
        # clean LMS step, while the aggregated model carries the perturbation
        _, sets, seed = _federated_sets(1, 2, 4, seed=17)
        x0, y0 = sets[0][0][0], sets[0][1][0]
        clean = np.zeros(2) + 0.05 * (y0 - 0.0) * x0
        cfg = TrainingConfig(dim=2, n_clients=1, n_shared=2, n_rounds=1)
        atk = TrainingAttackConfig(1.0, 1.0, byzantine=(0,))
        out = run_training(cfg, sets, attack=atk, seed=seed)
        assert np.allclose(out.local_models[0], clean, atol=1e-12)
        assert not np.array_equal(out.model, out.local_models[0])

        benign = run_training(cfg, sets, seed=seed)
        assert np.allclose(benign.model, clean, atol=1e-12)
        assert np.array_equal(benign.model, benign.local_models[0])

    def test_partial_sharing_attenuates_poisoning(self):
        # with the same poisoned population, sharing a small coordinate
        # subset leaves far less perturbation in the aggregate than sharing
        # everything; check the steady-state deviation ordering per seed
        for seed in range(4):
            root = seed_sequence(seed)
            cfgs = draw_client_configs(
                30, generator(substream(root, 0)), split=(80, 0, 0)
            )
            w = unit_model(20)
            sets = [
                (d.train_x, d.train_y)
                for d in build_federated_datasets(w, cfgs, substream(root, 1))
            ]
            atk = TrainingAttackConfig(0.25, 0.1, byzantine=tuple(range(6)))
            steady = {}
            for n_shared in (6, 20):
                cfg = TrainingConfig(
                    dim=20, n_clients=30, n_shared=n_shared, step_size=0.08,
                    participants_per_round=5, n_rounds=600,
                )
                out = run_training(
                    cfg, sets, true_model=w, attack=atk, seed=substream(root, 2)
                )
                steady[n_shared] = np.mean(out.mse_trace[-100:])
            assert steady[6] < steady[20]


def test_full_sharing_matches_the_plain_lms_reference():
    check = check_full_sharing_equivalence()
    assert check.passed, check.detail
