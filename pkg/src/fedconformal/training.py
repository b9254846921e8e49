"""Partial-sharing online federated LMS training.

The server keeps a global coefficient vector; each client keeps a local one.
Every round, each selected client blends the entries of the global model it
received (a random subset of coordinates, the rest taken from its own local
model), runs one LMS step on its next sample, and uploads a (possibly
different) random subset of the updated coordinates.  The server averages
the uploads, filling unshared coordinates with the previous global model.

Uploads travel over an untrusted channel: a Byzantine client's wire copy can
be perturbed without touching its local state (see :mod:`.attacks`).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._validation import check_positive, check_vector
from .rng import generator, seed_sequence, substream
from .attacks import TrainingAttackConfig, corrupt_upload

# Child-stream indices under the training seed.  Keeping the three draws on
# separate streams means e.g. changing how masks are drawn cannot shift
# which clients get selected.
SELECTION_STREAM = 0
MASK_STREAM = 1
ATTACK_STREAM = 2


class SelectionMask:
    """An M-of-D coordinate subset used for both downloads and uploads."""

    def __init__(self, indices, dim: int):
        indices = np.asarray(indices, dtype=np.intp)
        if indices.ndim != 1:
            raise ValueError("indices must be one-dimensional")
        check_positive(dim, "dim")
        if indices.size > 0:
            if indices.min() < 0 or indices.max() >= dim:
                raise ValueError(f"indices must lie in [0, {dim})")
        unique = np.unique(indices)
        if unique.size != indices.size:
            raise ValueError("indices must not repeat")
        self.indices = unique
        self.dim = int(dim)
        flags = np.zeros(dim, dtype=bool)
        flags[unique] = True
        self.flags = flags

    @property
    def n_shared(self) -> int:
        return int(self.indices.size)

    def blend(self, shared: np.ndarray, private: np.ndarray) -> np.ndarray:
        """Selected coordinates from ``shared``, the rest from ``private``."""
        shared = check_vector(shared, "shared", dim=self.dim)
        private = check_vector(private, "private", dim=self.dim)
        return np.where(self.flags, shared, private)

    def project(self, vector: np.ndarray) -> np.ndarray:
        """Zero out the unselected coordinates."""
        vector = check_vector(vector, "vector", dim=self.dim)
        return np.where(self.flags, vector, 0.0)

    def __eq__(self, other):
        return (
            isinstance(other, SelectionMask)
            and self.dim == other.dim
            and np.array_equal(self.indices, other.indices)
        )

    def __repr__(self):
        return f"SelectionMask({self.indices.tolist()}, dim={self.dim})"


def draw_mask(dim: int, n_shared: int, rng: np.random.Generator) -> SelectionMask:
    """Uniformly random M-of-D subset (M may be 0: share nothing)."""
    flags = _draw_flag_rows(1, dim, n_shared, rng)
    return SelectionMask(np.flatnonzero(flags[0]), dim)


def draw_round_masks(
    n_clients: int, dim: int, n_shared: int, rng: np.random.Generator
) -> np.ndarray:
    """Boolean ``(n_clients, dim)`` mask block, one row per client.

    Consumes ``n_clients * dim`` uniforms regardless of ``n_shared``, so runs
    that differ only in how many coordinates are shared see identical
    selection, data and attack randomness.
    """
    return _draw_flag_rows(n_clients, dim, n_shared, rng)


def _draw_flag_rows(rows, dim, n_shared, rng):
    check_positive(dim, "dim")
    if not 0 <= n_shared <= dim:
        raise ValueError(f"n_shared must lie in [0, {dim}], got {n_shared}")
    u = rng.random((rows, dim))
    # rank-of-rank: rank[i, j] is the position of u[i, j] in row i's sort
    rank = np.argsort(np.argsort(u, axis=1), axis=1)
    return rank < n_shared


@dataclass(frozen=True)
class TrainingConfig:
    """Shapes and hyperparameters of one federated training run."""

    dim: int
    n_clients: int
    n_shared: int
    step_size: float = 0.05
    participants_per_round: int | None = None
    n_rounds: int = 2000

    def __post_init__(self):
        check_positive(self.dim, "dim")
        check_positive(self.n_clients, "n_clients")
        check_positive(self.step_size, "step_size")
        if self.n_rounds < 0:
            raise ValueError(f"n_rounds must be non-negative, got {self.n_rounds}")
        if not 0 <= self.n_shared <= self.dim:
            raise ValueError(
                f"n_shared must lie in [0, {self.dim}], got {self.n_shared}"
            )
        p = self.participants
        if not 1 <= p <= self.n_clients:
            raise ValueError(
                f"participants_per_round must lie in [1, {self.n_clients}], got {p}"
            )

    @property
    def participants(self) -> int:
        if self.participants_per_round is None:
            return self.n_clients
        return self.participants_per_round


def client_innovation(
    global_model: np.ndarray,
    local_model: np.ndarray,
    mask: SelectionMask,
    x: np.ndarray,
    y: float,
) -> float:
    """Prediction error of the blend of downloaded and local coordinates."""
    blended = mask.blend(global_model, local_model)
    return float(y) - float(blended @ check_vector(x, "x", dim=mask.dim))


def client_update(
    global_model: np.ndarray,
    local_model: np.ndarray,
    mask: SelectionMask,
    x: np.ndarray,
    y: float,
    step_size: float,
) -> np.ndarray:
    """One LMS step from the blend of global (masked) and local models."""
    check_positive(step_size, "step_size")
    x = check_vector(x, "x", dim=mask.dim)
    blended = mask.blend(global_model, local_model)
    err = float(y) - float(blended @ x)
    return blended + step_size * err * x


def server_aggregate(
    global_model: np.ndarray,
    uploads: list[tuple[int, SelectionMask, np.ndarray]],
) -> np.ndarray:
    """Average the participants' masked uploads.

    Each participant contributes its uploaded coordinates; its unshared
    coordinates are filled from the previous global model.  Contributions
    are averaged in ascending client order.
    """
    if not uploads:
        raise ValueError("uploads must not be empty")
    global_model = check_vector(global_model, "global_model")
    contribs = []
    for _, mask, vector in sorted(uploads, key=lambda item: item[0]):
        vector = check_vector(vector, "upload", dim=global_model.shape[0])
        if mask.dim != global_model.shape[0]:
            raise ValueError("mask dimension does not match the model")
        contribs.append(np.where(mask.flags, vector, global_model))
    return np.mean(np.stack(contribs), axis=0)


def mse_objective(model: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
    """Mean squared prediction error of ``model`` on the given samples."""
    model = check_vector(model, "model")
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != model.shape[0]:
        raise ValueError("x must be an (n, dim) array matching the model")
    y = check_vector(y, "y", dim=x.shape[0])
    if x.shape[0] == 0:
        raise ValueError("samples must not be empty")
    residual = y - x @ model
    return float(np.mean(residual * residual))


@dataclass
class TrainingResult:
    """Final state and per-round diagnostics of a training run."""

    model: np.ndarray
    mse_trace: np.ndarray | None = None
    model_trace: np.ndarray | None = None
    local_models: np.ndarray | None = None
    rounds: int = 0
    extra: dict = field(default_factory=dict)


def run_training(
    config: TrainingConfig,
    train_sets: list[tuple[np.ndarray, np.ndarray]],
    *,
    true_model: np.ndarray | None = None,
    attack: TrainingAttackConfig | None = None,
    seed=None,
    record_models: bool = False,
) -> TrainingResult:
    """Run the full training loop.

    ``train_sets`` holds one ``(X, y)`` pair per client; each client walks
    its rows cyclically, advancing only on rounds it participates in.
    ``true_model`` enables the per-round squared-deviation trace.  ``attack``
    perturbs Byzantine uploads on the wire; local models stay clean.
    """
    if len(train_sets) != config.n_clients:
        raise ValueError(
            f"expected {config.n_clients} train sets, got {len(train_sets)}"
        )
    for x, y in train_sets:
        if x.ndim != 2 or x.shape[1] != config.dim:
            raise ValueError("train inputs must be (n, dim) arrays")
        if y.shape != (x.shape[0],) or x.shape[0] == 0:
            raise ValueError("train targets must be non-empty (n,) arrays")
    if true_model is not None:
        true_model = check_vector(true_model, "true_model", dim=config.dim)

    root = seed_sequence(seed)
    sel_rng = generator(substream(root, SELECTION_STREAM))
    mask_rng = generator(substream(root, MASK_STREAM))
    attack_rng = generator(substream(root, ATTACK_STREAM))

    k_total = config.n_clients
    dim = config.dim
    global_model = np.zeros(dim)
    local_models = np.zeros((k_total, dim))
    # masks drawn last round, used for this round's download blend
    masks_prev = draw_round_masks(k_total, dim, config.n_shared, mask_rng)
    cursors = np.zeros(k_total, dtype=np.intp)

    mse_trace = np.empty(config.n_rounds) if true_model is not None else None
    model_trace = (
        np.empty((config.n_rounds, dim)) if record_models else None
    )

    for n in range(config.n_rounds):
        if config.participants == k_total:
            participants = np.arange(k_total)
        else:
            participants = np.sort(
                sel_rng.choice(k_total, size=config.participants, replace=False)
            )
        masks_new = draw_round_masks(k_total, dim, config.n_shared, mask_rng)

        contribs = np.empty((participants.size, dim))
        for i, k in enumerate(participants):
            x_set, y_set = train_sets[k]
            row = cursors[k] % x_set.shape[0]
            cursors[k] += 1
            x, y = x_set[row], y_set[row]

            blended = np.where(masks_prev[k], global_model, local_models[k])
            err = y - blended @ x
            updated = blended + config.step_size * err * x
            local_models[k] = updated

            upload = updated
            if attack is not None:
                upload = corrupt_upload(
                    updated, attack.is_byzantine(k), attack, attack_rng
                )
            contribs[i] = np.where(masks_new[k], upload, global_model)

        global_model = np.mean(contribs, axis=0)
        masks_prev = masks_new

        if mse_trace is not None:
            diff = global_model - true_model
            mse_trace[n] = diff @ diff
        if model_trace is not None:
            model_trace[n] = global_model

    return TrainingResult(
        model=global_model,
        mse_trace=mse_trace,
        model_trace=model_trace,
        local_models=local_models,
        rounds=config.n_rounds,
    )
