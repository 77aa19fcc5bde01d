"""scikit-learn style front end.

``fit`` precomputes everything that does not depend on the measurement
outcome (cavity fields, rates, deterministic phases) for records of a given
length; ``predict`` then maps current records ``X`` of shape
``(n_records, K)`` to qubit states ``(n_records, 3)`` holding
``rho11, Re rho12, Im rho12`` at the end of each record.

>>> sim = HomodyneSimulator(chi=0.5, t_m=1.0, dt=1e-3)
>>> X, Y = sim.sample(4, seed=0)
>>> est = ExactBayesEstimator(chi=0.5, dt=1e-3).fit(X)
>>> est.predict(X).shape
(4, 3)
"""
from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import bayes
from .cavity import CavityQubitParams, build_rate_grid
from .trajectory import CurrentRecord, QubitState, simulate_ito_batch, simulate_stratonovich
from .validation import check_currents, check_rho0, check_states

__all__ = [
    "ExactBayesEstimator",
    "GaussianBayesEstimator",
    "KorotkovBayesEstimator",
    "TrajectoryFilter",
    "HomodyneSimulator",
]


class _CavityParamsMixin:
    def _cavity_params(self) -> CavityQubitParams:
        return CavityQubitParams(delta_r=self.delta_r, chi=self.chi, kappa=self.kappa,
                                 epsilon_m=self.epsilon_m, phi=self.phi,
                                 omega_q=self.omega_q, alpha0=self.alpha0)


class _StateEstimator(_CavityParamsMixin, BaseEstimator):
    def __init__(self, chi=0.5, kappa=2.0, delta_r=0.0, epsilon_m=1.0, phi=math.pi / 4,
                 omega_q=0.0, alpha0=0j, dt=1e-4, rho11_0=0.5, rho12_0=0.5 + 0j):
        self.chi = chi
        self.kappa = kappa
        self.delta_r = delta_r
        self.epsilon_m = epsilon_m
        self.phi = phi
        self.omega_q = omega_q
        self.alpha0 = alpha0
        self.dt = dt
        self.rho11_0 = rho11_0
        self.rho12_0 = rho12_0

    def fit(self, X, y=None):
        X = check_currents(X)
        self.params_ = self._cavity_params()
        self.rho0_ = check_rho0(self.rho11_0, self.rho12_0)
        self.n_features_in_ = X.shape[1]
        self.grid_ = build_rate_grid(self.params_, X.shape[1] * self.dt, self.dt)
        return self

    def _records(self, X):
        check_is_fitted(self, "grid_")
        X = check_currents(X, self.n_features_in_)
        return [CurrentRecord(self.dt, row) for row in X]

    def predict_path(self, X) -> np.ndarray:
        """States at every horizon ``t_k``: shape ``(n_records, K + 1, 3)``."""
        out = []
        for rec in self._records(X):
            r11, r12 = self._path(rec)
            out.append(np.column_stack([r11, r12.real, r12.imag]))
        return np.stack(out)

    def predict(self, X) -> np.ndarray:
        return np.array([self._endpoint(rec).as_tuple() for rec in self._records(X)])

    def score(self, X, y) -> float:
        """Negative worst elementwise deviation from the true end states ``y``."""
        pred = self.predict(X)
        y = check_states(y, pred.shape[0])
        return -float(np.max(np.abs(pred - y)))


class ExactBayesEstimator(_StateEstimator):
    """Exact one-step Bayesian rule (time-resolved likelihoods and corrections)."""

    def _endpoint(self, rec):
        return bayes.exact_update(self.rho0_, bayes.bayes_factors(rec, self.grid_, self.rho0_))

    def _path(self, rec):
        return bayes.exact_path(self.rho0_, rec, self.grid_)


class GaussianBayesEstimator(_StateEstimator):
    """Gaussian likelihoods of the mean current with the exact correction factors."""

    def _endpoint(self, rec):
        return bayes.gaussian_update(self.rho0_, rec, self.grid_)

    def _path(self, rec):
        return bayes.gaussian_path(self.rho0_, rec, self.grid_)


class KorotkovBayesEstimator(_StateEstimator):
    """Bad-cavity rule with steady-state constant rates."""

    def _endpoint(self, rec):
        return bayes.korotkov_update(self.rho0_, rec, self.params_)

    def _path(self, rec):
        return bayes.korotkov_path(self.rho0_, rec, self.params_)


class TrajectoryFilter(_StateEstimator):
    """Multi-step reference: Stratonovich integration driven by the record."""

    def _path(self, rec):
        tr = simulate_stratonovich(self.params_, self.rho0_, rec, self.grid_)
        return tr.rho11, tr.rho12

    def _endpoint(self, rec):
        r11, r12 = self._path(rec)
        return QubitState(r11[-1], r12[-1])


class HomodyneSimulator(_CavityParamsMixin, BaseEstimator):
    """Draws current records and the conditional states they produce."""

    def __init__(self, chi=0.5, kappa=2.0, delta_r=0.0, epsilon_m=1.0, phi=math.pi / 4,
                 omega_q=0.0, alpha0=0j, t_m=10.0, dt=1e-4, rho11_0=0.5, rho12_0=0.5 + 0j,
                 scheme="milstein"):
        self.chi = chi
        self.kappa = kappa
        self.delta_r = delta_r
        self.epsilon_m = epsilon_m
        self.phi = phi
        self.omega_q = omega_q
        self.alpha0 = alpha0
        self.t_m = t_m
        self.dt = dt
        self.rho11_0 = rho11_0
        self.rho12_0 = rho12_0
        self.scheme = scheme

    def sample(self, n_records: int, seed: int = 0):
        """Return ``(X, Y)``: currents ``(n, K)`` and end states ``(n, 3)``."""
        trs = simulate_ito_batch(self._cavity_params(), check_rho0(self.rho11_0, self.rho12_0),
                                 self.t_m, self.dt, seed, range(n_records), scheme=self.scheme)
        X = np.stack([tr.record.currents for tr in trs])
        Y = np.array([tr.final.as_tuple() for tr in trs])
        return X, Y
