"""Byzantine-resilient federated conformal prediction.

A seedable simulator and library: partial-sharing online federated LMS
training under model-poisoning attacks, plus histogram-sketch robust
conformal calibration that screens out malicious clients before quantile
estimation.
"""
from .attacks import (
    CalibrationAttack,
    TrainingAttackConfig,
    corrupt_upload,
    fabricate_scores,
)
from .calibration import (
    CharacterizationVector,
    HistogramSpec,
    MaliciousnessReport,
    characterize,
    detect_benign,
    histogram_quantile,
    maliciousness_scores,
    pairwise_distances,
    select_benign_known,
    select_benign_mad,
)
from .conformal import (
    PredictionInterval,
    absolute_scores,
    conformal_quantile,
    conformal_rank,
    coverage_and_width,
    pooled_quantile,
    predict_interval,
)
from .data import (
    ClientDataConfig,
    ClientDataset,
    build_dataset,
    build_federated_datasets,
    draw_client_configs,
    generate_sample,
    generate_samples,
    unit_model,
)
from .estimators import FederatedConformalRegressor, PSOFedRegressor
from .experiment import (
    ConfigError,
    ExperimentConfig,
    ExperimentResult,
    METHODS,
    TrialRecord,
    emit_histograms,
    emit_plotdata,
    emit_results,
    emit_sweep,
    run_experiment,
    run_trial,
)
from .training import (
    SelectionMask,
    TrainingConfig,
    TrainingResult,
    client_innovation,
    client_update,
    draw_mask,
    draw_round_masks,
    mse_objective,
    run_training,
    server_aggregate,
)

__version__ = "0.1.0"

__all__ = [
    "CalibrationAttack",
    "TrainingAttackConfig",
    "corrupt_upload",
    "fabricate_scores",
    "CharacterizationVector",
    "HistogramSpec",
    "MaliciousnessReport",
    "characterize",
    "detect_benign",
    "histogram_quantile",
    "maliciousness_scores",
    "pairwise_distances",
    "select_benign_known",
    "select_benign_mad",
    "PredictionInterval",
    "absolute_scores",
    "conformal_quantile",
    "conformal_rank",
    "coverage_and_width",
    "pooled_quantile",
    "predict_interval",
    "ClientDataConfig",
    "ClientDataset",
    "build_dataset",
    "build_federated_datasets",
    "draw_client_configs",
    "generate_sample",
    "generate_samples",
    "unit_model",
    "FederatedConformalRegressor",
    "PSOFedRegressor",
    "ConfigError",
    "ExperimentConfig",
    "ExperimentResult",
    "METHODS",
    "TrialRecord",
    "emit_histograms",
    "emit_plotdata",
    "emit_results",
    "emit_sweep",
    "run_experiment",
    "run_trial",
    "SelectionMask",
    "TrainingConfig",
    "TrainingResult",
    "client_innovation",
    "client_update",
    "draw_mask",
    "draw_round_masks",
    "mse_objective",
    "run_training",
    "server_aggregate",
]
