"""Monte Carlo experiment harness.

One :class:`ExperimentConfig` describes a full study: the data law, the
training hyperparameters, the attack on both phases, the histogram grid,
and the method under test.  ``run_experiment`` executes seeded independent
trials and aggregates the metrics; the ``emit_*`` helpers persist results
as CSV/JSON for tables and plots.

Methods
-------
``fcp``
    Full sharing (every coordinate exchanged) and a quantile pooled over
    every client's reported raw scores, fabricated ones included.
``rob-fcp``
    Full sharing, but calibration reports travel as histogram vectors and
    suspicious clients are excluded before the quantile.
``psofed-rob``
    Partial sharing as configured plus the same robust calibration.
"""
from __future__ import annotations

import dataclasses
import json
import math
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from . import attacks as attacks_mod
from ._validation import check_alpha
from .attacks import CalibrationAttack, TrainingAttackConfig, fabricate_scores
from .calibration import HistogramSpec, characterize, detect_benign, histogram_quantile
from .conformal import absolute_scores, coverage_and_width, pooled_quantile
from .data import (
    DEFAULT_SPLIT,
    INPUT_VARIANCE_RANGE,
    NOISE_VARIANCE_RANGE,
    build_dataset,
    draw_client_configs,
    unit_model,
)
from .rng import generator, seed_sequence, substream
from .training import TrainingConfig, run_training

METHOD_FCP = "fcp"
METHOD_ROB_FCP = "rob-fcp"
METHOD_PSOFED_ROB = "psofed-rob"
METHODS = (METHOD_FCP, METHOD_ROB_FCP, METHOD_PSOFED_ROB)

DETECTOR_KNOWN = "known"
DETECTOR_MAD = "mad"

CALIBRATION_ATTACKS = (
    attacks_mod.EFFICIENCY,
    attacks_mod.COVERAGE,
    attacks_mod.RANDOM,
)

#: Columns of the per-trial CSV, in order.
CSV_COLUMNS = (
    "trial",
    "method",
    "attack",
    "coverage",
    "mean_width",
    "final_mse",
    "q_hat",
    "n_detected_true_benign",
    "n_detected_false_benign",
)

PLOT_METRICS = ("coverage", "mean_width", "final_mse")


class ConfigError(ValueError):
    """A config document that cannot be turned into an ExperimentConfig."""


@dataclass(frozen=True)
class DataSection:
    """Population shape and per-client sampling law."""

    n_clients: int = 100
    dim: int = 50
    input_variance_range: tuple[float, float] = INPUT_VARIANCE_RANGE
    noise_variance_range: tuple[float, float] = NOISE_VARIANCE_RANGE
    n_train: int = DEFAULT_SPLIT[0]
    n_cal: int = DEFAULT_SPLIT[1]
    n_test: int = DEFAULT_SPLIT[2]

    def __post_init__(self):
        if self.n_clients < 1:
            raise ConfigError("data.n_clients must be at least 1")
        if self.dim < 1:
            raise ConfigError("data.dim must be at least 1")
        if self.n_train < 1 or self.n_cal < 1 or self.n_test < 1:
            raise ConfigError("data split sizes must all be at least 1")
        for name in ("input_variance_range", "noise_variance_range"):
            lo, hi = getattr(self, name)
            if not 0 < lo < hi:
                raise ConfigError(f"data.{name} must be positive and increasing")
            object.__setattr__(self, name, (float(lo), float(hi)))


@dataclass(frozen=True)
class TrainingSection:
    """Hyperparameters of the federated training phase.

    The step size default is tuned for the default population (it sits
    safely inside the partial-sharing stability region, which ends near
    0.1 for 50 dimensions and input variances up to 1.2).
    """

    n_shared: int = 15
    step_size: float = 0.085
    participants_per_round: int = 10
    n_rounds: int = 2000

    def __post_init__(self):
        if self.n_shared < 1:
            raise ConfigError("training.n_shared must be at least 1")
        if not self.step_size > 0:
            raise ConfigError("training.step_size must be positive")
        if self.participants_per_round < 1:
            raise ConfigError("training.participants_per_round must be at least 1")
        if self.n_rounds < 1:
            raise ConfigError("training.n_rounds must be at least 1")


@dataclass(frozen=True)
class AttackSection:
    """Byzantine population and its behavior in both phases."""

    n_byzantine: int = 20
    attack_probability: float = 0.25
    noise_variance: float = 0.1
    calibration: str = attacks_mod.NONE
    low: float = 0.8
    high: float = 1.0
    random_byzantine: bool = False

    def __post_init__(self):
        if self.n_byzantine < 0:
            raise ConfigError("attack.n_byzantine must be non-negative")
        if not 0.0 <= self.attack_probability <= 1.0:
            raise ConfigError("attack.attack_probability must lie in [0, 1]")
        if self.noise_variance < 0:
            raise ConfigError("attack.noise_variance must be non-negative")
        allowed = CALIBRATION_ATTACKS + (attacks_mod.NONE,)
        if self.calibration not in allowed:
            raise ConfigError(
                f"attack.calibration must be one of {allowed}, got {self.calibration!r}"
            )
        try:
            self.calibration_attack()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def calibration_attack(self) -> CalibrationAttack:
        return CalibrationAttack(kind=self.calibration, low=self.low, high=self.high)


@dataclass(frozen=True)
class HistogramSection:
    """Calibration sketch grid and score normalization."""

    n_bins: int = 100
    score_scale: float | None = None
    scale_multiplier: float = 5.0

    def __post_init__(self):
        if self.n_bins < 1:
            raise ConfigError("histogram.n_bins must be at least 1")
        if self.score_scale is not None and not self.score_scale > 0:
            raise ConfigError("histogram.score_scale must be positive when given")
        if not self.scale_multiplier > 0:
            raise ConfigError("histogram.scale_multiplier must be positive")


_SECTIONS = {
    "data": DataSection,
    "training": TrainingSection,
    "attack": AttackSection,
    "histogram": HistogramSection,
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Complete, validated description of one experiment."""

    method: str = METHOD_PSOFED_ROB
    alpha: float = 0.1
    n_trials: int = 20
    master_seed: int = 0
    detector: str = DETECTOR_KNOWN
    include_byzantine_test: bool = False
    data: DataSection = field(default_factory=DataSection)
    training: TrainingSection = field(default_factory=TrainingSection)
    attack: AttackSection = field(default_factory=AttackSection)
    histogram: HistogramSection = field(default_factory=HistogramSection)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        try:
            check_alpha(self.alpha)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.n_trials < 1:
            raise ConfigError("n_trials must be at least 1")
        if not 0 <= int(self.master_seed):
            raise ConfigError("master_seed must be a non-negative integer")
        if self.detector not in (DETECTOR_KNOWN, DETECTOR_MAD):
            raise ConfigError(
                f"detector must be '{DETECTOR_KNOWN}' or '{DETECTOR_MAD}',"
                f" got {self.detector!r}"
            )
        if self.training.n_shared > self.data.dim:
            raise ConfigError("training.n_shared cannot exceed data.dim")
        if self.training.participants_per_round > self.data.n_clients:
            raise ConfigError(
                "training.participants_per_round cannot exceed data.n_clients"
            )
        if self.attack.n_byzantine >= self.data.n_clients:
            raise ConfigError("attack.n_byzantine must leave at least one benign client")
        n_benign = self.data.n_clients - self.attack.n_byzantine
        if self.method != METHOD_FCP and self.detector == DETECTOR_KNOWN and n_benign < 2:
            raise ConfigError("robust calibration needs at least 2 benign clients")
        if self.method != METHOD_FCP and self.detector == DETECTOR_MAD and self.data.n_clients < 3:
            raise ConfigError("the mad detector needs at least 3 clients")

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        """Build from a parsed JSON document; unknown keys are errors."""
        if not isinstance(doc, dict):
            raise ConfigError("config document must be a JSON object")
        top_fields = {
            f.name for f in dataclasses.fields(cls) if f.name not in _SECTIONS
        }
        kwargs = {}
        for key, value in doc.items():
            if key in _SECTIONS:
                if not isinstance(value, dict):
                    raise ConfigError(f"section {key!r} must be an object")
                section_cls = _SECTIONS[key]
                names = {f.name for f in dataclasses.fields(section_cls)}
                unknown = set(value) - names
                if unknown:
                    raise ConfigError(
                        f"unknown keys in section {key!r}: {sorted(unknown)}"
                    )
                section_kwargs = {
                    k: tuple(v) if isinstance(v, list) else v
                    for k, v in value.items()
                }
                kwargs[key] = section_cls(**section_kwargs)
            elif key in top_fields:
                kwargs[key] = value
            else:
                raise ConfigError(f"unknown config key: {key!r}")
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        doc = {
            "method": self.method,
            "alpha": self.alpha,
            "n_trials": self.n_trials,
            "master_seed": self.master_seed,
            "detector": self.detector,
            "include_byzantine_test": self.include_byzantine_test,
        }
        for name, value in (
            ("data", self.data),
            ("training", self.training),
            ("attack", self.attack),
            ("histogram", self.histogram),
        ):
            section = dataclasses.asdict(value)
            for k, v in section.items():
                if isinstance(v, tuple):
                    section[k] = list(v)
            doc[name] = section
        return doc

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class TrialRecord:
    """Metrics of one seeded trial."""

    trial: int
    method: str
    attack: str
    coverage: float
    mean_width: float
    final_mse: float
    q_hat: float
    detected_benign: tuple[int, ...] | None = None
    n_detected_true_benign: int | None = None
    n_detected_false_benign: int | None = None
    characterizations: list | None = dataclasses.field(default=None, repr=False)

    def as_row(self) -> list:
        return [
            self.trial,
            self.method,
            self.attack,
            _fmt(self.coverage),
            _fmt(self.mean_width),
            _fmt(self.final_mse),
            _fmt(self.q_hat),
            "" if self.n_detected_true_benign is None else self.n_detected_true_benign,
            "" if self.n_detected_false_benign is None else self.n_detected_false_benign,
        ]

    def as_json(self) -> dict:
        return {
            "trial": self.trial,
            "method": self.method,
            "attack": self.attack,
            "coverage": self.coverage,
            "mean_width": self.mean_width,
            "final_mse": self.final_mse,
            "q_hat": self.q_hat,
            "detected_benign": (
                None if self.detected_benign is None else list(self.detected_benign)
            ),
            "n_detected_true_benign": self.n_detected_true_benign,
            "n_detected_false_benign": self.n_detected_false_benign,
        }


def _fmt(value: float) -> str:
    return repr(float(value))


@dataclass
class ExperimentResult:
    """All trial records plus mean/std aggregates."""

    config: ExperimentConfig
    records: list[TrialRecord]
    aggregates: dict

    @property
    def mean(self) -> dict:
        return {k: v["mean"] for k, v in self.aggregates.items()}


def _aggregate(records: list[TrialRecord]) -> dict:
    out = {}
    for key in ("coverage", "mean_width", "final_mse", "q_hat"):
        values = np.array([getattr(r, key) for r in records], dtype=float)
        out[key] = {"mean": float(values.mean()), "std": float(values.std())}
    return out


def _byzantine_set(config: ExperimentConfig, trial_root) -> tuple[int, ...]:
    n_byz = config.attack.n_byzantine
    if n_byz == 0:
        return ()
    if config.attack.random_byzantine:
        rng = generator(substream(trial_root, 4))
        picks = rng.choice(config.data.n_clients, size=n_byz, replace=False)
        return tuple(sorted(int(k) for k in picks))
    return tuple(range(n_byz))


def run_trial(
    config: ExperimentConfig,
    trial_seed,
    trial_index: int = 0,
    *,
    keep_characterizations: bool = False,
) -> TrialRecord:
    """Execute one end-to-end trial: data, training, calibration, metrics.

    ``trial_seed`` owns every random draw in the trial; the coverage metric
    is evaluated on the benign clients' held-out test points.
    """
    root = seed_sequence(trial_seed)
    data_cfg = config.data
    client_configs = draw_client_configs(
        data_cfg.n_clients,
        generator(substream(root, 0)),
        input_variance_range=data_cfg.input_variance_range,
        noise_variance_range=data_cfg.noise_variance_range,
        split=(data_cfg.n_train, data_cfg.n_cal, data_cfg.n_test),
    )
    true_model = unit_model(data_cfg.dim)
    datasets = [
        build_dataset(true_model, c, generator(substream(root, 1, k)))
        for k, c in enumerate(client_configs)
    ]

    byzantine = _byzantine_set(config, root)
    byz_set = set(byzantine)
    training_attack = None
    if byzantine:
        training_attack = TrainingAttackConfig(
            attack_probability=config.attack.attack_probability,
            noise_variance=config.attack.noise_variance,
            byzantine=byzantine,
        )

    n_shared = (
        data_cfg.dim if config.method in (METHOD_FCP, METHOD_ROB_FCP)
        else config.training.n_shared
    )
    train_cfg = TrainingConfig(
        dim=data_cfg.dim,
        n_clients=data_cfg.n_clients,
        n_shared=n_shared,
        step_size=config.training.step_size,
        participants_per_round=config.training.participants_per_round,
        n_rounds=config.training.n_rounds,
    )
    outcome = run_training(
        train_cfg,
        [(d.train_x, d.train_y) for d in datasets],
        true_model=true_model,
        attack=training_attack,
        seed=substream(root, 2),
    )
    model = outcome.model

    score_scale = config.histogram.score_scale
    if score_scale is None:
        score_scale = config.histogram.scale_multiplier * max(
            math.sqrt(c.noise_variance) for c in client_configs
        )

    cal_attack = config.attack.calibration_attack()
    fab_rng = generator(substream(root, 3))
    reports = []
    for k in range(data_cfg.n_clients):
        if k in byz_set and cal_attack.active:
            fabricated = fabricate_scores(
                cal_attack, datasets[k].cal_y.shape[0], fab_rng
            )
            reports.append(fabricated * score_scale)
        else:
            reports.append(
                absolute_scores(model, datasets[k].cal_x, datasets[k].cal_y)
            )

    detected = None
    characterizations = None
    if config.method == METHOD_FCP:
        q_hat = pooled_quantile(reports, config.alpha)
    else:
        grid = HistogramSpec.uniform(config.histogram.n_bins, score_scale)
        vectors = [characterize(r, grid) for r in reports]
        if config.detector == DETECTOR_KNOWN:
            n_benign = data_cfg.n_clients - config.attack.n_byzantine
            report = detect_benign(vectors, n_benign)
        else:
            report = detect_benign(vectors, None)
        detected = tuple(int(k) for k in report.benign)
        q_hat = histogram_quantile(
            [vectors[k] for k in report.benign], grid, config.alpha
        )
        if keep_characterizations:
            characterizations = [
                {
                    "client": k,
                    "role": "byzantine" if k in byz_set else "benign",
                    "n_points": vectors[k].n_points,
                    "probabilities": vectors[k].probabilities.tolist(),
                }
                for k in range(data_cfg.n_clients)
            ]

    if config.include_byzantine_test:
        evaluated = list(range(data_cfg.n_clients))
    else:
        evaluated = [k for k in range(data_cfg.n_clients) if k not in byz_set]
    test_x = np.vstack([datasets[k].test_x for k in evaluated])
    test_y = np.concatenate([datasets[k].test_y for k in evaluated])
    coverage, width = coverage_and_width(model, test_x, test_y, q_hat)
    deviation = model - true_model
    final_mse = float(deviation @ deviation)

    n_true = n_false = None
    if detected is not None:
        n_true = sum(1 for k in detected if k not in byz_set)
        n_false = len(detected) - n_true

    return TrialRecord(
        trial=trial_index,
        method=config.method,
        attack=config.attack.calibration,
        coverage=coverage,
        mean_width=width,
        final_mse=final_mse,
        q_hat=float(q_hat),
        detected_benign=detected,
        n_detected_true_benign=n_true,
        n_detected_false_benign=n_false,
        characterizations=characterizations,
    )


def run_experiment(
    config: ExperimentConfig, *, keep_characterizations: bool = False
) -> ExperimentResult:
    """Run the configured number of independent seeded trials.

    Trial ``t`` uses the child stream of ``master_seed`` at index ``t``, so
    results are reproducible and any subset of trials can be recomputed in
    isolation.  Characterization vectors, when kept, are stored for trial 0
    only (they are a per-client diagnostic, one example is enough to plot).
    """
    master = seed_sequence(int(config.master_seed))
    records = [
        run_trial(
            config,
            substream(master, t),
            t,
            keep_characterizations=keep_characterizations and t == 0,
        )
        for t in range(config.n_trials)
    ]
    return ExperimentResult(
        config=config, records=records, aggregates=_aggregate(records)
    )


def _atomic_write(path: str, text: str):
    directory = os.path.dirname(os.path.abspath(path))
    try:
        fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", newline="") as handle:
                handle.write(text)
            os.replace(tmp, path)
        except BaseException:
            os.unlink(tmp)
            raise
    except OSError as exc:
        raise OSError(f"failed to write {path}: {exc}") from exc


def _csv_text(records: list[TrialRecord]) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for record in records:
        lines.append(",".join(str(v) for v in record.as_row()))
    return "\n".join(lines) + "\n"


def emit_results(result: ExperimentResult, path: str, format: str = "csv"):
    """Persist one experiment's records (and, for JSON, its aggregates).

    The file is written atomically: a temp file in the target directory is
    renamed over ``path`` only after the full payload is flushed.
    """
    if format == "csv":
        _atomic_write(path, _csv_text(result.records))
    elif format == "json":
        payload = {
            "config": result.config.to_dict(),
            "records": [r.as_json() for r in result.records],
            "aggregates": result.aggregates,
        }
        _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")
    else:
        raise ValueError(f"format must be 'csv' or 'json', got {format!r}")


def emit_sweep(results: list[ExperimentResult], path: str, format: str = "csv"):
    """Persist several experiments' records into one file."""
    if not results:
        raise ValueError("results must not be empty")
    if format == "csv":
        records = [r for result in results for r in result.records]
        _atomic_write(path, _csv_text(records))
    elif format == "json":
        payload = {
            "runs": [
                {
                    "config": result.config.to_dict(),
                    "records": [r.as_json() for r in result.records],
                    "aggregates": result.aggregates,
                }
                for result in results
            ]
        }
        _atomic_write(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")
    else:
        raise ValueError(f"format must be 'csv' or 'json', got {format!r}")


def emit_plotdata(results: list[ExperimentResult], path: str):
    """Long-format tidy table: one row per (trial, method, attack, metric)."""
    if not results:
        raise ValueError("results must not be empty")
    lines = ["trial,method,attack,metric,value"]
    for result in results:
        for record in result.records:
            for metric in PLOT_METRICS:
                value = _fmt(getattr(record, metric))
                lines.append(
                    f"{record.trial},{record.method},{record.attack},{metric},{value}"
                )
    _atomic_write(path, "\n".join(lines) + "\n")


def emit_histograms(results: list[ExperimentResult], path: str):
    """Per-client characterization vectors, for histogram figures.

    Only records that carried characterization vectors contribute rows.
    """
    if not results:
        raise ValueError("results must not be empty")
    lines = ["method,attack,trial,client,role,n_points,bin,probability"]
    for result in results:
        for record in result.records:
            if not record.characterizations:
                continue
            for entry in record.characterizations:
                for h, p in enumerate(entry["probabilities"]):
                    lines.append(
                        f"{record.method},{record.attack},{record.trial},"
                        f"{entry['client']},{entry['role']},{entry['n_points']},"
                        f"{h},{_fmt(p)}"
                    )
    _atomic_write(path, "\n".join(lines) + "\n")
