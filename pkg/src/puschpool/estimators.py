"""Estimator-style wrappers around the golden receive-chain kernels.

They follow the scikit-learn conventions (constructor parameters only, learned
state in trailing-underscore attributes, ``fit`` returning ``self``) so the
kernels compose with ``sklearn.base.clone`` and parameter grids.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from . import numerics
from .pipeline import evm


def _check_fitted(est, attr):
    if not hasattr(est, attr):
        raise NotFittedError(f"{type(est).__name__} is not fitted yet; call fit first")


class ChannelEstimator(BaseEstimator):
    """Least-squares estimate on the pilot comb, averaged over coherence blocks.

    ``fit(Y_pilot, X_pilot)`` with ``Y_pilot`` (N_pilot, N_B, N_SC) and ``X_pilot``
    (N_pilot, N_L, N_SC). ``channel_`` is (N_SC, N_B, N_L).
    """

    def __init__(self, coherence_sc=None):
        self.coherence_sc = coherence_sc

    def fit(self, Y_pilot, X_pilot):
        y = np.asarray(Y_pilot, np.complex64)
        x = np.asarray(X_pilot, np.complex64)
        if y.ndim == 2:
            y, x = y[None], x[None]
        n_l, n_sc = x.shape[-2:]
        block = self.coherence_sc or n_sc
        self.per_subcarrier_ = numerics.channel_estimate_ls(y, x)
        self.channel_ = numerics.comb_average(self.per_subcarrier_, n_l, block)
        return self


class NoiseVarianceEstimator(BaseEstimator):
    """Mean residual power ``sigma2_`` of the pilots given a channel estimate."""

    def fit(self, Y_pilot, H_hat, X_pilot):
        self.sigma2_ = numerics.noise_variance_estimate(Y_pilot, H_hat, X_pilot)
        return self


class MMSEEqualizer(BaseEstimator):
    """Per-subcarrier MMSE detection through Cholesky and two triangular solves.

    ``fit(H)`` factors ``H^H H + sigma2 I`` for H (..., N_B, N_L); ``predict(Y)``
    returns x_hat (..., N_L) for Y (..., N_B) broadcast against the fitted H.
    """

    def __init__(self, sigma2=0.0):
        self.sigma2 = sigma2

    def fit(self, H, y=None):
        self.channel_ = np.asarray(H, np.complex64)
        self.factor_ = numerics.cholesky_crout(numerics.gramian(self.channel_, self.sigma2))
        return self

    def predict(self, Y):
        _check_fitted(self, "factor_")
        z = numerics.matched_filter(self.channel_, Y)
        return numerics.solve_upper(self.factor_, numerics.solve_lower(self.factor_, z))

    def score(self, Y, X):
        """Negative EVM of the detected symbols against the reference ``X``."""
        return -evm(self.predict(Y), X)


__all__ = ["ChannelEstimator", "NoiseVarianceEstimator", "MMSEEqualizer"]
