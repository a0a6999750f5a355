"""Estimator-style facade over the design pipeline.

``fit`` takes a belief distribution (object, config mapping or a two-column
``(s, f)`` density table) and solves the designer's problem. ``predict``
maps ``(own belief, others' likelihood ratio)`` rows to allocation
probabilities; ``transform`` maps beliefs to the optimal indirect utility.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .distributions import BeliefDistribution, Tabulated, from_config, validate
from .first_best import efficient_envelope, efficient_value
from .likelihood import DEFAULT_POINTS, DEFAULT_RANGE
from .mechanisms import designer_value, extract_mechanism, solve_logconcave
from .optimizer import check_extreme_structure, objective_weights, solve_reduced

METHODS = ("auto", "lp", "logconcave")


def check_beliefs(X, n_columns: int | None = None) -> np.ndarray:
    """Validate a 2-D float array whose first column holds beliefs in [0, 1]."""
    X = check_array(X, dtype=float, ensure_2d=True)
    if n_columns is not None and X.shape[1] != n_columns:
        raise ValueError(f"expected {n_columns} columns, got {X.shape[1]}")
    if np.any((X[:, 0] < 0) | (X[:, 0] > 1)):
        raise ValueError("beliefs must lie in [0, 1]")
    return X


def as_distribution(X) -> BeliefDistribution:
    if isinstance(X, BeliefDistribution):
        return X
    if isinstance(X, (Mapping, str)):
        return from_config(X)
    table = check_array(X, dtype=float)
    if table.shape[1] != 2:
        raise ValueError("density table needs columns (s, f)")
    return Tabulated(tuple(table[:, 0]), tuple(table[:, 1]))


class OptimalMechanismDesigner(TransformerMixin, BaseEstimator):
    """Solve for the allocation-maximizing BIC mechanism.

    Parameters
    ----------
    n : int
        Number of agents.
    grid_k : int
        Belief grid size for the LP.
    grid_n : int
        Log-likelihood-ratio grid size (power of two plus one).
    log_range : float
        Half-width of the log-likelihood-ratio grid.
    method : {"auto", "lp", "logconcave"}
        ``auto`` uses the closed-form two-threshold construction when the
        density is log-concave and symmetric, else the LP solution.
    """

    def __init__(self, n=2, grid_k=2001, grid_n=DEFAULT_POINTS, log_range=DEFAULT_RANGE, method="auto"):
        self.n = n
        self.grid_k = grid_k
        self.grid_n = grid_n
        self.log_range = log_range
        self.method = method

    def fit(self, X, y=None):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if int(self.n) < 1:
            raise ValueError("n must be positive")
        d = as_distribution(X)
        validate(d)
        n, N, L = int(self.n), int(self.grid_n), float(self.log_range)
        self.distribution_ = d
        self.envelope_ = efficient_envelope(d, n, int(self.grid_k), N, L)
        self.weights_ = objective_weights(d, int(self.grid_k))
        self.utility_ = solve_reduced(self.weights_, self.envelope_)
        self.structure_ = check_extreme_structure(self.utility_, self.envelope_)
        use_closed = self.method == "logconcave" or (
            self.method == "auto" and n >= 2 and d.log_concave and d.symmetric_about_half
        )
        self.tau_ = None
        if use_closed:
            sol = solve_logconcave(d, n, N, L)
            self.mechanism_, self.tau_ = sol.mechanism, sol.tau
        else:
            self.mechanism_ = extract_mechanism(self.utility_, self.envelope_, d, n, N, L)
        self.value_ = designer_value(self.mechanism_)
        self.lp_value_ = self.utility_.lp_stats["objective"]
        self.efficient_value_ = efficient_value(d, n, N, L)
        return self

    def predict(self, X):
        """Allocation probability for rows ``(s_i, LR of the others)``."""
        check_is_fitted(self, "mechanism_")
        X = check_beliefs(X, 2)
        if np.any(X[:, 1] < 0):
            raise ValueError("likelihood ratios must be nonnegative")
        with np.errstate(divide="ignore"):
            return self.mechanism_.allocate_log(X[:, 0], np.log(X[:, 1]))

    def transform(self, X):
        """Optimal indirect utility at each belief in the first column."""
        check_is_fitted(self, "utility_")
        X = check_beliefs(X)
        return self.utility_(X[:, 0]).reshape(-1, 1)

    def score(self, X=None, y=None):
        """Ex-ante allocation probability of the fitted mechanism."""
        check_is_fitted(self, "value_")
        return self.value_
