"""Qubit-conditioned cavity fields and the measurement rates derived from them.

All quantities are in reduced units: frequencies in units of the drive
amplitude ``epsilon_m`` and times in units of ``1/epsilon_m``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = [
    "CavityQubitParams",
    "FieldPair",
    "RateSample",
    "RateGrid",
    "effective_detunings",
    "cavity_fields",
    "steady_fields",
    "rates",
    "build_rate_grid",
    "integrate_fields_ode",
    "grid_size",
]


@dataclass(frozen=True)
class CavityQubitParams:
    """Effective parameters of the dispersive readout setup.

    Defaults are the stronger-response parameter set (``chi = 0.5``) used for
    the exact-vs-approximate rule comparison.
    """

    delta_r: float = 0.0
    chi: float = 0.5
    kappa: float = 2.0
    epsilon_m: float = 1.0
    phi: float = math.pi / 4
    omega_q: float = 0.0
    alpha0: complex = 0j

    def __post_init__(self):
        for name in ("delta_r", "chi", "kappa", "epsilon_m", "phi", "omega_q"):
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ValueError(f"{name} must be finite, got {value!r}")
        if not self.kappa > 0:
            raise ValueError(f"kappa must be positive, got {self.kappa}")
        if self.chi < 0:
            raise ValueError(f"chi must be non-negative, got {self.chi}")
        if not 0.0 <= self.phi < 2 * math.pi:
            raise ValueError(f"phi must lie in [0, 2*pi), got {self.phi}")
        a0 = complex(self.alpha0)
        if not (math.isfinite(a0.real) and math.isfinite(a0.imag)):
            raise ValueError(f"alpha0 must be finite, got {self.alpha0!r}")
        object.__setattr__(self, "alpha0", a0)

    def replace(self, **changes) -> "CavityQubitParams":
        values = {k: getattr(self, k) for k in self.__dataclass_fields__}
        values.update(changes)
        return CavityQubitParams(**values)


@dataclass(frozen=True)
class FieldPair:
    """Cavity fields conditioned on qubit states |1> and |2>.

    ``alpha1``, ``alpha2`` and ``t`` may be scalars or equally shaped arrays.
    ``t`` is ``inf`` for steady-state fields.
    """

    alpha1: complex | np.ndarray
    alpha2: complex | np.ndarray
    t: float | np.ndarray


@dataclass(frozen=True)
class RateSample:
    """Measurement rates and ac-Stark shift at one time (or an array of times)."""

    gamma_ci: float | np.ndarray
    gamma_ba: float | np.ndarray
    gamma_d: float | np.ndarray
    gamma_m: float | np.ndarray
    b_shift: float | np.ndarray
    beta_mod: float | np.ndarray
    beta_arg: float | np.ndarray


def effective_detunings(params: CavityQubitParams) -> tuple[complex, complex]:
    """Complex cavity detunings seen with the qubit in |1> and in |2>.

    State |1> pulls the cavity to ``delta_r - chi``, state |2> to
    ``delta_r + chi``; this pairing makes the steady-state decoherence rate
    positive.
    """
    half_kappa = 0.5 * params.kappa
    d1 = complex(params.delta_r - params.chi, -half_kappa)
    d2 = complex(params.delta_r + params.chi, -half_kappa)
    return d1, d2


def cavity_fields(params: CavityQubitParams, t) -> FieldPair:
    """Closed-form fields ``alpha_j(t) = abar_j (1 - e^{-i d_j t}) + alpha0 e^{-i d_j t}``."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("cavity fields are defined for t >= 0")
    d1, d2 = effective_detunings(params)
    abar1, abar2 = -params.epsilon_m / d1, -params.epsilon_m / d2
    e1 = np.exp(-1j * d1 * t_arr)
    e2 = np.exp(-1j * d2 * t_arr)
    a1 = abar1 * (1.0 - e1) + params.alpha0 * e1
    a2 = abar2 * (1.0 - e2) + params.alpha0 * e2
    if t_arr.ndim == 0:
        return FieldPair(complex(a1), complex(a2), float(t_arr))
    return FieldPair(a1, a2, t_arr)


def steady_fields(params: CavityQubitParams) -> FieldPair:
    d1, d2 = effective_detunings(params)
    return FieldPair(-params.epsilon_m / d1, -params.epsilon_m / d2, math.inf)


def rates(params: CavityQubitParams, fields: FieldPair) -> RateSample:
    """Information-gain, back-action and decoherence rates plus the Stark shift.

    Works elementwise on array-valued fields. Where ``beta = alpha2 - alpha1``
    vanishes its phase is taken as 0; both Gamma rates vanish there anyway.
    """
    a1 = np.asarray(fields.alpha1, dtype=complex)
    a2 = np.asarray(fields.alpha2, dtype=complex)
    beta = a2 - a1
    beta_mod = np.abs(beta)
    beta_arg = np.where(beta_mod > 0, np.angle(beta), 0.0)
    total = params.kappa * beta_mod**2
    angle = params.phi - beta_arg
    gamma_ci = total * np.cos(angle) ** 2
    gamma_ba = total * np.sin(angle) ** 2
    overlap = a1 * np.conj(a2)
    gamma_d = 2.0 * params.chi * overlap.imag
    b_shift = 2.0 * params.chi * overlap.real
    out = dict(
        gamma_ci=gamma_ci,
        gamma_ba=gamma_ba,
        gamma_d=gamma_d,
        gamma_m=gamma_ci + gamma_ba,
        b_shift=b_shift,
        beta_mod=beta_mod,
        beta_arg=beta_arg,
    )
    if beta.ndim == 0:
        out = {k: float(v) for k, v in out.items()}
    return RateSample(**out)


def grid_size(t_m: float, dt: float) -> int:
    """Number of steps ``K`` with ``K * dt == t_m`` up to rounding.

    Raises ValueError when ``t_m / dt`` is not an integer within a few ulps.
    """
    if not (dt > 0 and t_m > 0):
        raise ValueError(f"need t_m > 0 and dt > 0, got t_m={t_m}, dt={dt}")
    if dt > t_m:
        raise ValueError(f"dt={dt} exceeds t_m={t_m}")
    ratio = t_m / dt
    k = int(round(ratio))
    if abs(ratio - k) > 4 * np.finfo(float).eps * max(1.0, ratio):
        raise ValueError(f"t_m={t_m} is not an integer multiple of dt={dt}")
    return k


@dataclass(frozen=True)
class RateGrid:
    """Rates on the midpoints ``t_k + dt/2`` of a uniform grid ``t_k = k dt``.

    ``samples`` and ``fields`` hold length-``K`` arrays; ``times`` has ``K + 1``
    entries.
    """

    params: CavityQubitParams
    dt: float
    n_steps: int
    times: np.ndarray = field(repr=False)
    samples: RateSample = field(repr=False)
    fields: FieldPair = field(repr=False)

    @property
    def t_m(self) -> float:
        return self.n_steps * self.dt

    @property
    def midpoints(self) -> np.ndarray:
        return self.fields.t

    @cached_property
    def sqrt_gamma_ci(self) -> np.ndarray:
        return np.sqrt(self.samples.gamma_ci)

    @cached_property
    def sqrt_gamma_ba(self) -> np.ndarray:
        return np.sqrt(self.samples.gamma_ba)

    def sample(self, k: int) -> RateSample:
        s = self.samples
        return RateSample(*(float(np.asarray(getattr(s, f))[k]) for f in s.__dataclass_fields__))

    def same_mesh(self, dt: float, n_steps: int) -> bool:
        return n_steps == self.n_steps and math.isclose(dt, self.dt, rel_tol=1e-12)

    def segment(self, start: int) -> "RateGrid":
        """Grid for steps ``start..K-1``, i.e. a record that begins at ``t_start``.

        ``times`` restart at 0; ``midpoints`` keep their absolute values.
        """
        if not 0 <= start < self.n_steps:
            raise ValueError(f"segment start {start} outside 0..{self.n_steps - 1}")
        k = self.n_steps - start
        s, f = self.samples, self.fields
        samples = RateSample(*(np.asarray(getattr(s, n))[start:] for n in s.__dataclass_fields__))
        return RateGrid(self.params, self.dt, k, self.times[:k + 1],
                        samples, FieldPair(f.alpha1[start:], f.alpha2[start:], f.t[start:]))


def build_rate_grid(params: CavityQubitParams, t_m: float, dt: float) -> RateGrid:
    k = grid_size(t_m, dt)
    times = np.arange(k + 1) * dt
    mid = times[:-1] + 0.5 * dt
    flds = cavity_fields(params, mid)
    grid = RateGrid(params=params, dt=float(dt), n_steps=k, times=times,
                    samples=rates(params, flds), fields=flds)
    for arr in (grid.times, *(getattr(grid.samples, f) for f in grid.samples.__dataclass_fields__)):
        arr.setflags(write=False)
    return grid


def integrate_fields_ode(params: CavityQubitParams, t_m: float, dt: float) -> FieldPair:
    """RK4 integration of ``d alpha/dt = -i eps_m - i d alpha`` on ``t_k = k dt``.

    Independent of :func:`cavity_fields`; used as its numerical cross-check.
    """
    k = grid_size(t_m, dt)
    eps = params.epsilon_m
    columns = []
    for d in effective_detunings(params):
        alpha = params.alpha0
        path = [alpha]
        for _ in range(k):
            k1 = -1j * eps - 1j * d * alpha
            k2 = -1j * eps - 1j * d * (alpha + 0.5 * dt * k1)
            k3 = -1j * eps - 1j * d * (alpha + 0.5 * dt * k2)
            k4 = -1j * eps - 1j * d * (alpha + dt * k3)
            alpha = alpha + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            path.append(alpha)
        columns.append(np.array(path, dtype=complex))
    return FieldPair(columns[0], columns[1], np.arange(k + 1) * dt)
