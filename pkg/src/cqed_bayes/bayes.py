"""One-step Bayesian reconstruction of the qubit state from a current record.

Three rules share the update shape

    rho11 = rho11(0) P1 / N,    rho22 = rho22(0) P2 / N,
    rho12 = rho12(0) sqrt(P1 P2) / N * D * exp(-i (Phi1 + Phi2)),
    N = rho11(0) P1 + rho22(0) P2,

and differ in the likelihoods and correction factors they feed into it:

``E`` (exact)
    likelihoods from the time-resolved squared residual of the current
    against ``-/+ sqrt(G_ci(t))``, plus time-dependent ``D, Phi1, Phi2``.
``G`` (Gaussian)
    Gaussian likelihoods of the time-averaged current, same ``D, Phi1, Phi2``.
``K`` (bad-cavity)
    Gaussian likelihoods with steady-state constant rates, ``D = 1``.

Likelihoods are kept in log space and rescaled by their maximum; the update
depends only on their ratio. Integrals of deterministic rates against the
current use midpoint rates times per-bin currents.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cavity import CavityQubitParams, RateGrid, rates, steady_fields
from .trajectory import CurrentRecord, QubitState, _as_state

__all__ = [
    "BayesFactors",
    "PointContactParams",
    "integrated_signal",
    "exact_likelihoods",
    "correction_factors",
    "bayes_factors",
    "exact_update",
    "gaussian_update",
    "korotkov_update",
    "point_contact_update",
    "exact_path",
    "gaussian_path",
    "korotkov_path",
    "RULES",
]

RULES = ("E", "G", "K")


@dataclass(frozen=True)
class BayesFactors:
    """Everything the update needs from one record.

    ``P1`` and ``P2`` are rescaled so the larger equals 1; ``N`` is built from
    the rescaled values.
    """

    X: float
    P1: float
    P2: float
    N: float
    D: float
    Phi1: float
    Phi2: float
    V: float


@dataclass(frozen=True)
class PointContactParams:
    """Charge qubit read out by a point contact.

    ``gamma`` is the information-gain rate, ``gamma_prime`` the ensemble
    decoherence rate and ``omega_q0`` the qubit splitting.
    """

    gamma: float
    gamma_prime: float
    omega_q0: float = 0.0

    def __post_init__(self):
        if not 0 <= self.gamma <= self.gamma_prime:
            raise ValueError(
                f"need 0 <= gamma <= gamma_prime, got gamma={self.gamma}, "
                f"gamma_prime={self.gamma_prime}"
            )


def _check_mesh(record: CurrentRecord, grid: RateGrid):
    if not grid.same_mesh(record.dt, record.n_steps):
        raise ValueError(
            f"record mesh (dt={record.dt}, K={record.n_steps}) does not match "
            f"rate grid (dt={grid.dt}, K={grid.n_steps})"
        )


def integrated_signal(record: CurrentRecord, grid: RateGrid) -> float:
    """``X = sum_k sqrt(G_ci,k) I_k dt``."""
    _check_mesh(record, grid)
    return float(np.dot(grid.sqrt_gamma_ci, record.currents) * record.dt)


def _normalise_logs(log_p1, log_p2):
    top = np.maximum(log_p1, log_p2)
    return np.exp(log_p1 - top), np.exp(log_p2 - top)


def exact_likelihoods(record: CurrentRecord, grid: RateGrid) -> tuple[float, float]:
    """``P_j = exp(-1/2 sum_k (I_k - Ibar_j,k)^2 dt)`` with ``Ibar = -/+ sqrt(G_ci)``.

    The common Gaussian prefactor is dropped; both values are divided by the
    larger one.
    """
    _check_mesh(record, grid)
    s = grid.sqrt_gamma_ci
    i = record.currents
    log_p1 = -0.5 * float(np.sum((i + s) ** 2)) * record.dt
    log_p2 = -0.5 * float(np.sum((i - s) ** 2)) * record.dt
    p1, p2 = _normalise_logs(log_p1, log_p2)
    return float(p1), float(p2)


def correction_factors(record: CurrentRecord, grid: RateGrid,
                       omega_q: float | None = None) -> tuple[float, float, float]:
    """Purity factor ``D`` and phases ``Phi1`` (deterministic), ``Phi2`` (record-driven)."""
    _check_mesh(record, grid)
    if omega_q is None:
        omega_q = grid.params.omega_q
    s = grid.samples
    dt = record.dt
    d = math.exp(-float(np.sum(s.gamma_d - 0.5 * s.gamma_m)) * dt)
    phi1 = omega_q * grid.t_m + float(np.sum(s.b_shift)) * dt
    phi2 = -float(np.dot(grid.sqrt_gamma_ba, record.currents)) * dt
    return d, phi1, phi2


def bayes_factors(record: CurrentRecord, grid: RateGrid, rho0=None,
                  omega_q: float | None = None) -> BayesFactors:
    state = _as_state(rho0)
    p1, p2 = exact_likelihoods(record, grid)
    d, phi1, phi2 = correction_factors(record, grid, omega_q)
    n = state.rho11 * p1 + state.rho22 * p2
    return BayesFactors(X=integrated_signal(record, grid), P1=p1, P2=p2, N=n, D=d,
                        Phi1=phi1, Phi2=phi2, V=1.0 / record.t_m)


def _update(state: QubitState, p1, p2, d, phase):
    """Shared update shape; works on scalars or arrays of horizons."""
    n = state.rho11 * p1 + state.rho22 * p2
    r11 = state.rho11 * p1 / n
    r12 = state.rho12 * np.sqrt(p1 * p2) / n * d * np.exp(-1j * phase)
    return r11, r12


def exact_update(rho0, factors: BayesFactors) -> QubitState:
    state = _as_state(rho0)
    r11, r12 = _update(state, factors.P1, factors.P2, factors.D, factors.Phi1 + factors.Phi2)
    return QubitState(float(r11), complex(r12))


def _gaussian_logs(i_mean, ibar, t_m):
    """Log of ``(2 pi V)^{-1/2} exp(-(I_m - Ibar_j)^2 / 2V)`` with ``V = 1/t_m``, ``Ibar_1,2 = -/+ ibar``."""
    v = 1.0 / t_m
    pref = -0.5 * np.log(2 * np.pi * v)
    return pref - (i_mean + ibar) ** 2 / (2 * v), pref - (i_mean - ibar) ** 2 / (2 * v)


def gaussian_update(rho0, record: CurrentRecord, grid: RateGrid,
                    omega_q: float | None = None) -> QubitState:
    """Gaussian likelihoods of the mean current, centred on ``-/+ <sqrt(G_ci)>``."""
    _check_mesh(record, grid)
    state = _as_state(rho0)
    t_m = record.t_m
    i_mean = float(np.sum(record.currents)) * record.dt / t_m
    ibar = float(np.sum(grid.sqrt_gamma_ci)) * record.dt / t_m
    p1, p2 = _normalise_logs(*_gaussian_logs(i_mean, ibar, t_m))
    d, phi1, phi2 = correction_factors(record, grid, omega_q)
    r11, r12 = _update(state, p1, p2, d, phi1 + phi2)
    return QubitState(float(r11), complex(r12))


def _steady_constants(params: CavityQubitParams):
    r = rates(params, steady_fields(params))
    return math.sqrt(r.gamma_ci), math.sqrt(r.gamma_ba), r.b_shift


def korotkov_update(rho0, record: CurrentRecord, params: CavityQubitParams) -> QubitState:
    """Bad-cavity rule: steady-state rates from ``t = 0``, no purity correction."""
    state = _as_state(rho0)
    s_ci, s_ba, b_bar = _steady_constants(params)
    t_m = record.t_m
    i_sum = float(np.sum(record.currents)) * record.dt
    p1, p2 = _normalise_logs(*_gaussian_logs(i_sum / t_m, s_ci, t_m))
    phase = (params.omega_q + b_bar) * t_m - s_ba * i_sum
    r11, r12 = _update(state, p1, p2, 1.0, phase)
    return QubitState(float(r11), complex(r12))


def point_contact_update(rho0, pc: PointContactParams, I_m: float, t_m: float) -> QubitState:
    """Bayesian update for a point-contact detector from the mean current ``I_m``.

    State |1> gives mean current ``+2 sqrt(gamma)``, state |2> ``-2 sqrt(gamma)``.
    With the dephasing superoperator ``D[s_z] rho = s_z rho s_z - rho`` the
    coherence decays as ``exp(-2 (gamma' - gamma) t_m)`` beyond the
    measurement back-action.
    """
    if not t_m > 0:
        raise ValueError(f"t_m must be positive, got {t_m}")
    state = _as_state(rho0)
    ibar = 2.0 * math.sqrt(pc.gamma)
    p1, p2 = _normalise_logs(*_gaussian_logs(I_m, -ibar, t_m))
    d = math.exp(-2.0 * (pc.gamma_prime - pc.gamma) * t_m)
    r11, r12 = _update(state, p1, p2, d, pc.omega_q0 * t_m)
    return QubitState(float(r11), complex(r12))


# Paths: the rule applied to every truncated record, via prefix sums.

def _prefix(values, dt):
    out = np.empty(values.shape[-1] + 1, dtype=values.dtype)
    out[0] = 0
    np.cumsum(values, out=out[1:])
    return out * dt


def exact_path(rho0, record: CurrentRecord, grid: RateGrid,
               omega_q: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """``(rho11, rho12)`` of the exact rule at every horizon ``t_k``, ``k = 0..K``."""
    _check_mesh(record, grid)
    state = _as_state(rho0)
    if omega_q is None:
        omega_q = grid.params.omega_q
    dt = record.dt
    s, i = grid.sqrt_gamma_ci, record.currents
    log_p1 = -0.5 * _prefix((i + s) ** 2, dt)
    log_p2 = -0.5 * _prefix((i - s) ** 2, dt)
    p1, p2 = _normalise_logs(log_p1, log_p2)
    smp = grid.samples
    d = np.exp(-_prefix(smp.gamma_d - 0.5 * smp.gamma_m, dt))
    phase = omega_q * grid.times + _prefix(smp.b_shift, dt) - _prefix(grid.sqrt_gamma_ba * i, dt)
    return _update(state, p1, p2, d, phase)


def gaussian_path(rho0, record: CurrentRecord, grid: RateGrid,
                  omega_q: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    _check_mesh(record, grid)
    state = _as_state(rho0)
    if omega_q is None:
        omega_q = grid.params.omega_q
    dt = record.dt
    t = grid.times
    i_sum = _prefix(record.currents, dt)
    s_sum = _prefix(grid.sqrt_gamma_ci, dt)
    p1 = np.ones_like(t)
    p2 = np.ones_like(t)
    tk = t[1:]
    p1[1:], p2[1:] = _normalise_logs(*_gaussian_logs(i_sum[1:] / tk, s_sum[1:] / tk, tk))
    smp = grid.samples
    d = np.exp(-_prefix(smp.gamma_d - 0.5 * smp.gamma_m, dt))
    phase = omega_q * t + _prefix(smp.b_shift, dt) - _prefix(grid.sqrt_gamma_ba * record.currents, dt)
    return _update(state, p1, p2, d, phase)


def korotkov_path(rho0, record: CurrentRecord,
                  params: CavityQubitParams) -> tuple[np.ndarray, np.ndarray]:
    state = _as_state(rho0)
    s_ci, s_ba, b_bar = _steady_constants(params)
    dt = record.dt
    t = np.arange(record.n_steps + 1) * dt
    i_sum = _prefix(record.currents, dt)
    p1 = np.ones_like(t)
    p2 = np.ones_like(t)
    tk = t[1:]
    p1[1:], p2[1:] = _normalise_logs(*_gaussian_logs(i_sum[1:] / tk, s_ci, tk))
    phase = (params.omega_q + b_bar) * t - s_ba * i_sum
    return _update(state, p1, p2, 1.0, phase)
