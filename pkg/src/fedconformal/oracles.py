"""Independent reference implementations used to cross-check the library.

Two checks live here.  The full-sharing reference reimplements online LMS
with periodic averaging from scratch (no masks, no local state) and must
match the partial-sharing trainer bit for bit when every coordinate is
shared.  The quantile agreement check compares the histogram-mixture
quantile against the exact pooled-score quantile on random configurations;
the two may differ by at most one bin width.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .calibration import HistogramSpec, characterize, histogram_quantile
from .conformal import pooled_quantile
from .data import ClientDataConfig, build_dataset, unit_model
from .rng import generator, seed_sequence, substream
from .training import TrainingConfig, run_training


@dataclass(frozen=True)
class OracleCheck:
    """Outcome of one oracle comparison."""

    name: str
    passed: bool
    detail: str


def full_sharing_reference(
    train_sets: list[tuple[np.ndarray, np.ndarray]],
    *,
    step_size: float,
    participants_per_round: int,
    n_rounds: int,
    seed,
) -> np.ndarray:
    """Online LMS with periodic averaging, written without any masking.

    One global model; each round the sampled participants take one LMS step
    from it on their next sample and the server averages the results.  The
    participant sampling consumes the same stream the trainer uses (child
    stream 0 of the seed), which is the whole point: given full sharing the
    two algorithms must agree exactly, so they must see identical draws.
    """
    n_clients = len(train_sets)
    dim = train_sets[0][0].shape[1]
    sel_rng = generator(substream(seed_sequence(seed), 0))
    model = np.zeros(dim)
    cursors = [0] * n_clients
    trace = np.empty((n_rounds, dim))
    for n in range(n_rounds):
        if participants_per_round == n_clients:
            participants = np.arange(n_clients)
        else:
            participants = np.sort(
                sel_rng.choice(n_clients, size=participants_per_round, replace=False)
            )
        steps = np.empty((participants.size, dim))
        for i, k in enumerate(participants):
            x_set, y_set = train_sets[k]
            row = cursors[k] % x_set.shape[0]
            cursors[k] += 1
            x, y = x_set[row], y_set[row]
            err = y - model @ x
            steps[i] = model + step_size * err * x
        model = np.mean(steps, axis=0)
        trace[n] = model
    return trace


def check_full_sharing_equivalence(
    seed=2718, n_rounds: int = 100
) -> OracleCheck:
    """Partial-sharing trainer at M=D versus the from-scratch LMS reference."""
    n_clients, dim, participants = 20, 10, 7
    root = seed_sequence(seed)
    data_rng = generator(substream(root, 0))
    w_star = unit_model(dim)
    train_sets = []
    for k in range(n_clients):
        cfg = ClientDataConfig(
            input_variance=0.2 + data_rng.random(),
            noise_variance=0.005 + 0.02 * data_rng.random(),
            n_train=40,
            n_cal=0,
            n_test=0,
        )
        ds = build_dataset(w_star, cfg, generator(substream(root, 1, k)))
        train_sets.append((ds.train_x, ds.train_y))
    run_seed = substream(root, 2)
    config = TrainingConfig(
        dim=dim,
        n_clients=n_clients,
        n_shared=dim,
        step_size=0.05,
        participants_per_round=participants,
        n_rounds=n_rounds,
    )
    outcome = run_training(config, train_sets, seed=run_seed, record_models=True)
    reference = full_sharing_reference(
        train_sets,
        step_size=0.05,
        participants_per_round=participants,
        n_rounds=n_rounds,
        seed=run_seed,
    )
    identical = np.array_equal(outcome.model_trace, reference)
    if identical:
        detail = f"{n_rounds} rounds bit-identical to the full-sharing reference"
    else:
        diff = np.abs(outcome.model_trace - reference)
        first = int(np.argwhere(diff.any(axis=1))[0][0]) if diff.any() else -1
        detail = (
            f"divergence from round {first}, max abs diff {diff.max():.3e}"
        )
    return OracleCheck("full-sharing-equivalence", identical, detail)


def check_quantile_agreement(
    n_configs: int = 100, n_bins: int = 100, seed=1618
) -> OracleCheck:
    """Histogram-mixture quantile versus the exact pooled-score quantile.

    Random configurations vary the client count, per-client sample sizes,
    score shapes, the normalization scale, and the miscoverage level.  The
    scores are kept inside [0, scale) so no clipping occurs; the histogram
    answer must then sit within one bin width of the pooled answer.
    """
    root = seed_sequence(seed)
    worst = 0.0
    worst_bound = None
    for c in range(n_configs):
        rng = generator(substream(root, c))
        n_clients = int(rng.integers(2, 13))
        scale = float(0.5 + 4.5 * rng.random())
        alpha = float(0.02 + 0.33 * rng.random())
        spec = HistogramSpec.uniform(n_bins, scale)
        score_sets = []
        for _ in range(n_clients):
            n_k = int(rng.integers(30, 401))
            shape = rng.random()
            u = rng.random(n_k)
            if shape < 0.34:
                scores = u * scale * (0.3 + 0.7 * rng.random())
            elif shape < 0.67:
                scores = (u ** 2.5) * scale * 0.999
            else:
                scores = (1.0 - (1.0 - u) ** 2) * scale * 0.999
            score_sets.append(scores)
        vectors = [characterize(s, spec) for s in score_sets]
        estimated = histogram_quantile(vectors, spec, alpha)
        exact = pooled_quantile(score_sets, alpha)
        deviation = abs(estimated - exact)
        bound = scale / n_bins
        if worst_bound is None or deviation - bound > worst - worst_bound:
            worst, worst_bound = deviation, bound
        if deviation > bound + 1e-12:
            return OracleCheck(
                "quantile-agreement",
                False,
                f"config {c}: |{estimated:.6f} - {exact:.6f}| = {deviation:.6f}"
                f" exceeds bin width {bound:.6f}",
            )
    return OracleCheck(
        "quantile-agreement",
        True,
        f"{n_configs} configs within one bin width"
        f" (worst {worst:.6f} vs bound {worst_bound:.6f})",
    )


def run_all(seed=None) -> list[OracleCheck]:
    """Both oracle checks, optionally re-seeded."""
    if seed is None:
        return [check_full_sharing_equivalence(), check_quantile_agreement()]
    root = seed_sequence(int(seed))
    return [
        check_full_sharing_equivalence(substream(root, 0)),
        check_quantile_agreement(seed=substream(root, 1)),
    ]
