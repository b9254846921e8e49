"""Estimator-style wrappers around the functional core.

``PSOFedRegressor`` exposes the federated trainer as a regressor: rows are
grouped into clients by a label column, fit simulates the training rounds,
and the learned global model becomes ``coef_``.  ``FederatedConformalRegressor``
wraps any fitted point regressor and calibrates symmetric prediction
intervals, either from the pooled raw scores or through the robust
histogram path that screens out clients with anomalous score reports.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .attacks import TrainingAttackConfig
from .calibration import (
    MAD_CUTOFF,
    HistogramSpec,
    characterize,
    detect_benign,
    histogram_quantile,
)
from .conformal import conformal_quantile, pooled_quantile
from .training import TrainingConfig, run_training

POOLED = "pooled"
ROBUST = "robust"


def _split_by_client(x, y, client):
    """Per-client (X, y) pairs in sorted label order, plus the labels."""
    if client is None:
        return [None], [(x, y)]
    client = np.asarray(client)
    if client.shape != (x.shape[0],):
        raise ValueError(
            f"client must have shape ({x.shape[0]},), got {client.shape}"
        )
    labels = np.unique(client)
    sets = [(x[client == label], y[client == label]) for label in labels]
    return list(labels), sets


class PSOFedRegressor(RegressorMixin, BaseEstimator):
    """Linear regressor trained by partial-sharing online federated LMS.

    Parameters
    ----------
    n_shared : int or None
        Coordinates exchanged per client per round; None shares everything.
    step_size : float
        LMS step size.
    n_rounds : int
        Training rounds to simulate.
    participants_per_round : int or None
        Clients sampled each round; None selects all clients.
    byzantine : tuple of int
        Positions (in the sorted unique client labels) of attacking clients.
    attack_probability, attack_noise_variance : float
        Per-round corruption law of byzantine uploads.
    true_coef : array-like or None
        When given, ``mse_trace_`` records the squared deviation from it
        after every round.
    random_state : int or None
        Seed for participant sampling, masks, and attack noise.
    """

    def __init__(
        self,
        n_shared=None,
        step_size=0.05,
        n_rounds=2000,
        participants_per_round=None,
        byzantine=(),
        attack_probability=0.0,
        attack_noise_variance=0.0,
        true_coef=None,
        random_state=None,
    ):
        self.n_shared = n_shared
        self.step_size = step_size
        self.n_rounds = n_rounds
        self.participants_per_round = participants_per_round
        self.byzantine = byzantine
        self.attack_probability = attack_probability
        self.attack_noise_variance = attack_noise_variance
        self.true_coef = true_coef
        self.random_state = random_state

    def fit(self, X, y, client=None):
        X, y = check_X_y(X, y, y_numeric=True)
        labels, train_sets = _split_by_client(X, y, client)
        dim = X.shape[1]
        config = TrainingConfig(
            dim=dim,
            n_clients=len(train_sets),
            n_shared=dim if self.n_shared is None else self.n_shared,
            step_size=self.step_size,
            participants_per_round=self.participants_per_round,
            n_rounds=self.n_rounds,
        )
        attack = None
        if len(self.byzantine) > 0:
            attack = TrainingAttackConfig(
                attack_probability=self.attack_probability,
                noise_variance=self.attack_noise_variance,
                byzantine=tuple(self.byzantine),
            )
            if max(attack.byzantine) >= len(train_sets):
                raise ValueError("byzantine positions exceed the client count")
        true_model = None
        if self.true_coef is not None:
            true_model = np.asarray(self.true_coef, dtype=float)
            if true_model.shape != (dim,):
                raise ValueError(f"true_coef must have shape ({dim},)")
        result = run_training(
            config,
            train_sets,
            true_model=true_model,
            attack=attack,
            seed=self.random_state,
        )
        self.coef_ = result.model
        self.n_features_in_ = dim
        self.client_labels_ = labels
        self.local_coefs_ = result.local_models
        self.mse_trace_ = result.mse_trace
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(
                f"X has {X.shape[1]} features, expected {self.n_features_in_}"
            )
        return X @ self.coef_


class FederatedConformalRegressor(BaseEstimator):
    """Symmetric conformal prediction intervals around a fitted regressor.

    Parameters
    ----------
    estimator : object with ``predict``
        The fitted point model whose residuals are calibrated.
    alpha : float
        Target miscoverage; intervals aim at 1 - alpha coverage.
    method : {"robust", "pooled"}
        "pooled" takes the conformal quantile of all clients' raw scores.
        "robust" bins each client's scores into histogram reports, drops
        clients whose reports sit away from the majority, and reads the
        quantile off the mixture of the kept reports.
    n_bins : int
        Histogram resolution of the robust path.
    score_scale : float or None
        Normalization scale; None uses the largest observed score.
    n_benign : int or None
        Number of clients to keep (when the benign count is known); None
        lets the median-absolute-deviation rule decide.
    mad_cutoff : float
        Threshold of the MAD rule, in consistent-MAD units.
    """

    def __init__(
        self,
        estimator=None,
        alpha=0.1,
        method=ROBUST,
        n_bins=100,
        score_scale=None,
        n_benign=None,
        mad_cutoff=MAD_CUTOFF,
    ):
        self.estimator = estimator
        self.alpha = alpha
        self.method = method
        self.n_bins = n_bins
        self.score_scale = score_scale
        self.n_benign = n_benign
        self.mad_cutoff = mad_cutoff

    def fit(self, X, y, client=None):
        if self.estimator is None or not hasattr(self.estimator, "predict"):
            raise ValueError("estimator must be a fitted object with predict()")
        if self.method not in (POOLED, ROBUST):
            raise ValueError(
                f"method must be '{POOLED}' or '{ROBUST}', got {self.method!r}"
            )
        X, y = check_X_y(X, y, y_numeric=True)
        scores = np.abs(y - np.asarray(self.estimator.predict(X), dtype=float))
        labels, sets = _split_by_client(X, scores, client)
        score_sets = [s for _, s in sets]
        self.client_labels_ = labels
        self.n_features_in_ = X.shape[1]

        if self.method == POOLED:
            if len(score_sets) == 1:
                self.quantile_ = conformal_quantile(score_sets[0], self.alpha)
            else:
                self.quantile_ = pooled_quantile(score_sets, self.alpha)
            self.benign_clients_ = list(labels)
            self.maliciousness_ = None
            self.characterizations_ = None
            return self

        if len(score_sets) < 2:
            raise ValueError(
                "robust calibration needs at least 2 clients; use method='pooled'"
            )
        scale = self.score_scale
        if scale is None:
            largest = max(float(np.max(s)) for s in score_sets if s.size)
            scale = largest if largest > 0 else 1.0
        grid = HistogramSpec.uniform(self.n_bins, scale)
        vectors = [characterize(s, grid) for s in score_sets]
        report = detect_benign(vectors, self.n_benign, cutoff=self.mad_cutoff)
        self.maliciousness_ = report.maliciousness
        self.characterizations_ = vectors
        self.benign_clients_ = [labels[k] for k in report.benign]
        self.quantile_ = histogram_quantile(
            [vectors[k] for k in report.benign], grid, self.alpha
        )
        return self

    def predict(self, X):
        check_is_fitted(self, "quantile_")
        X = check_array(X)
        return np.asarray(self.estimator.predict(X), dtype=float)

    def predict_interval(self, X):
        """Lower/upper interval bounds, shape (n_samples, 2)."""
        centers = self.predict(X)
        return np.column_stack(
            (centers - self.quantile_, centers + self.quantile_)
        )
