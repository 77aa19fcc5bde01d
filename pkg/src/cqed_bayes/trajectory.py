"""Conditional qubit trajectories under continuous homodyne monitoring.

The cavity has been eliminated, so the qubit obeys

    d rho11 = F1 dW,          F1 = -2 sqrt(G_ci) rho11 rho22
    d rho12 = -(i W + G_d) rho12 dt + F2 dW,
                              F2 = [sqrt(G_ci) <sz> + i sqrt(G_ba)] rho12

in Ito form (``W = omega_q + B(t)``), while the homodyne current is
``I = -sqrt(G_ci) <sz> + dW/dt``. Rates are taken at interval midpoints.

Per-trajectory random streams come from ``SeedSequence(seed, spawn_key=(index,))``,
so trajectory ``index`` of master seed ``seed`` is the same whatever batch or
worker produced it.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cavity import CavityQubitParams, RateGrid, RateSample, build_rate_grid, cavity_fields, rates

__all__ = [
    "StepOverflow",
    "QubitState",
    "CurrentRecord",
    "Trajectory",
    "EnsembleStats",
    "trajectory_rng",
    "wiener_increments",
    "coarsen_increments",
    "noise_coefficients",
    "noise_gradient_product",
    "stratonovich_drift_correction",
    "simulate_ito",
    "simulate_ito_batch",
    "simulate_stratonovich",
    "lindblad_reference",
    "ensemble_average",
    "ensemble_statistics",
]

OVERSHOOT_TOL = 1e-12
POSITIVITY_TOL = 1e-9
SCHEMES = ("milstein", "euler")
_SCALAR_BATCH = 16


class StepOverflow(ArithmeticError):
    """rho11 left [0, 1] by more than rounding; the time step is too large."""


@dataclass(frozen=True)
class QubitState:
    """Qubit density matrix in the measurement basis; ``rho22 = 1 - rho11``."""

    rho11: float = 0.5
    rho12: complex = 0.5 + 0j

    def __post_init__(self):
        r11 = float(self.rho11)
        r12 = complex(self.rho12)
        if not (math.isfinite(r11) and math.isfinite(r12.real) and math.isfinite(r12.imag)):
            raise ValueError(f"non-finite qubit state ({self.rho11!r}, {self.rho12!r})")
        if not -OVERSHOOT_TOL <= r11 <= 1 + OVERSHOOT_TOL:
            raise ValueError(f"rho11={r11} outside [0, 1]")
        r11 = min(max(r11, 0.0), 1.0)
        if abs(r12) ** 2 > r11 * (1 - r11) + POSITIVITY_TOL:
            raise ValueError(f"|rho12|^2={abs(r12) ** 2:.3g} exceeds rho11*rho22={r11 * (1 - r11):.3g}")
        object.__setattr__(self, "rho11", r11)
        object.__setattr__(self, "rho12", r12)

    @property
    def rho22(self) -> float:
        return 1.0 - self.rho11

    @property
    def sigma_z(self) -> float:
        return 2.0 * self.rho11 - 1.0

    def matrix(self) -> np.ndarray:
        return np.array([[self.rho11, self.rho12], [self.rho12.conjugate(), self.rho22]])

    def as_tuple(self) -> tuple[float, float, float]:
        return self.rho11, self.rho12.real, self.rho12.imag


@dataclass(frozen=True)
class CurrentRecord:
    """Sampled homodyne current on ``[t_k, t_k + dt)`` bins.

    ``increments`` are the Wiener increments behind the record (``None`` for
    records that did not come from a simulation). ``seed`` is a
    ``(master_seed, index)`` pair, or ``None``.
    """

    dt: float
    currents: np.ndarray = field(repr=False)
    increments: np.ndarray | None = field(default=None, repr=False)
    seed: tuple[int, int] | None = None

    def __post_init__(self):
        cur = np.asarray(self.currents, dtype=float)
        if cur.ndim != 1 or cur.size == 0:
            raise ValueError("currents must be a non-empty 1-D array")
        object.__setattr__(self, "currents", cur)
        if self.increments is not None:
            inc = np.asarray(self.increments, dtype=float)
            if inc.shape != cur.shape:
                raise ValueError("increments and currents differ in length")
            object.__setattr__(self, "increments", inc)

    @property
    def n_steps(self) -> int:
        return self.currents.size

    @property
    def t_m(self) -> float:
        return self.n_steps * self.dt

    def truncate(self, n_steps: int) -> "CurrentRecord":
        inc = None if self.increments is None else self.increments[:n_steps]
        return CurrentRecord(self.dt, self.currents[:n_steps], inc, self.seed)


@dataclass(frozen=True)
class Trajectory:
    """States on the grid ``times`` (length ``K + 1``)."""

    times: np.ndarray = field(repr=False)
    rho11: np.ndarray = field(repr=False)
    rho12: np.ndarray = field(repr=False)
    params: CavityQubitParams
    record: CurrentRecord | None = None

    @property
    def states(self) -> list[QubitState]:
        return [QubitState(a, b) for a, b in zip(self.rho11, self.rho12)]

    @property
    def final(self) -> QubitState:
        return QubitState(self.rho11[-1], self.rho12[-1])

    def as_array(self) -> np.ndarray:
        """``(K + 1, 3)`` array of ``rho11, Re rho12, Im rho12``."""
        return np.column_stack([self.rho11, self.rho12.real, self.rho12.imag])


@dataclass(frozen=True)
class EnsembleStats:
    """Pointwise ensemble mean and standard error of rho11 and rho12."""

    times: np.ndarray
    mean_rho11: np.ndarray
    mean_rho12: np.ndarray
    sem_rho11: np.ndarray
    sem_re_rho12: np.ndarray
    sem_im_rho12: np.ndarray
    n_trajectories: int


def trajectory_rng(seed: int, index: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(index),)))


def wiener_increments(seed: int, index: int, n_steps: int, dt: float) -> np.ndarray:
    return trajectory_rng(seed, index).standard_normal(n_steps) * math.sqrt(dt)


def coarsen_increments(increments: np.ndarray, factor: int) -> np.ndarray:
    """Sum consecutive groups of ``factor`` increments (last axis)."""
    inc = np.asarray(increments)
    if inc.shape[-1] % factor:
        raise ValueError(f"{inc.shape[-1]} increments do not split into groups of {factor}")
    return inc.reshape(*inc.shape[:-1], -1, factor).sum(axis=-1)


def noise_coefficients(rho11, rho12, sqrt_gci, sqrt_gba):
    """Diffusion coefficients ``(F1, F2)`` multiplying the noise."""
    f1 = -2.0 * sqrt_gci * rho11 * (1.0 - rho11)
    f2 = (sqrt_gci * (2.0 * rho11 - 1.0) + 1j * sqrt_gba) * rho12
    return f1, f2


def noise_gradient_product(rho11, rho12, sqrt_gci, sqrt_gba):
    """``sum_i F_i dF_j/dY_i`` for ``Y = (rho11, rho12)``.

    ``F2`` is holomorphic in ``rho12``, so the complex derivative equals the
    sum over its real and imaginary parts.
    """
    f1, f2 = noise_coefficients(rho11, rho12, sqrt_gci, sqrt_gba)
    c = sqrt_gci * (2.0 * rho11 - 1.0) + 1j * sqrt_gba
    g1 = f1 * (-2.0 * sqrt_gci * (1.0 - 2.0 * rho11))
    g2 = c * f2 + f1 * (2.0 * sqrt_gci * rho12)
    return g1, g2


def stratonovich_drift_correction(state: QubitState, rate: RateSample) -> tuple[float, complex]:
    """Drift added when the Ito equations are read in Stratonovich form.

    Returns ``-1/2 sum_i F_i dF_j/dY_i`` for ``rho11`` and ``rho12``. Adding it
    to the Ito drift and substituting ``xi = I + sqrt(G_ci) <sz>`` yields the
    current-driven equations integrated by :func:`simulate_stratonovich`.
    """
    g1, g2 = noise_gradient_product(
        state.rho11, state.rho12, math.sqrt(rate.gamma_ci), math.sqrt(rate.gamma_ba)
    )
    return -0.5 * float(g1), -0.5 * complex(g2)


def _as_state(rho0) -> QubitState:
    if isinstance(rho0, QubitState):
        return rho0
    if rho0 is None:
        return QubitState()
    r11, r12 = rho0
    return QubitState(r11, r12)


def _grid_for(params, t_m, dt, grid: RateGrid | None) -> RateGrid:
    if grid is None:
        return build_rate_grid(params, t_m, dt)
    if grid.params != params:
        raise ValueError("rate grid was built for different parameters")
    return grid


def _check_stability(grid: RateGrid):
    if grid.n_steps and 2.0 * float(grid.sqrt_gamma_ci.max()) * grid.dt >= 1.0:
        raise StepOverflow(f"dt={grid.dt} too large: 2*sqrt(G_ci)*dt >= 1")


def _guard(r11: np.ndarray, k: int) -> np.ndarray:
    bad = (r11 < -OVERSHOOT_TOL) | (r11 > 1.0 + OVERSHOOT_TOL)
    if bad.any():
        raise StepOverflow(
            f"rho11={r11[bad][0]!r} left [0, 1] at step {k}; decrease dt"
        )
    return np.clip(r11, 0.0, 1.0)


def _integrate_ito(grid: RateGrid, state: QubitState, dw: np.ndarray, scheme: str,
                   store: bool = True):
    """Ito stepping for a batch of noise paths ``dw`` of shape ``(n, K)``.

    Returns ``(rho11, rho12, currents)`` arrays, or with ``store=False`` a
    moment accumulator instead of full paths. Complex arithmetic is spelled
    out in real parts so that the scalar loop (small batches) and the
    vectorised loop give bitwise identical paths.
    """
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")
    _check_stability(grid)
    n, k_steps = dw.shape
    if k_steps != grid.n_steps:
        raise ValueError(f"{k_steps} increments for a grid of {grid.n_steps} steps")
    milstein = scheme == "milstein"
    coeffs = (grid.sqrt_gamma_ci, grid.sqrt_gamma_ba, *_drift_factors(grid, milstein))
    if store and n <= _SCALAR_BATCH:
        rows = [_ito_path_scalar(grid.dt, state, dw[j], milstein, coeffs) for j in range(n)]
        return tuple(np.stack(col) for col in zip(*rows))

    dt = grid.dt
    sci, sba, drift_re, drift_im = coeffs
    r11 = np.full(n, state.rho11)
    x = np.full(n, state.rho12.real)
    y = np.full(n, state.rho12.imag)
    if store:
        currents = np.empty((n, k_steps))
        out11 = np.empty((n, k_steps + 1))
        out12 = np.empty((n, k_steps + 1), dtype=complex)
        out11[:, 0] = r11
        out12[:, 0] = state.rho12
    else:
        acc = _MomentAccumulator(n, k_steps + 1)
        acc.add(0, r11, x, y)

    for k in range(k_steps):
        w = dw[:, k]
        s, b, er, ei = sci[k], sba[k], drift_re[k], drift_im[k]
        sz = 2.0 * r11 - 1.0
        if store:
            currents[:, k] = -s * sz + w / dt
        f1 = -2.0 * s * r11 * (1.0 - r11)
        cr = s * sz
        f2r = cr * x - b * y
        f2i = cr * y + b * x
        n11 = r11 + f1 * w
        nx = (er * x - ei * y) + f2r * w
        ny = (er * y + ei * x) + f2i * w
        if milstein:
            q = 0.5 * (w * w - dt)
            n11 = n11 + f1 * (-2.0 * s * (1.0 - 2.0 * r11)) * q
            h = f1 * (2.0 * s)
            nx = nx + ((cr * f2r - b * f2i) + h * x) * q
            ny = ny + ((cr * f2i + b * f2r) + h * y) * q
        r11 = _guard(n11, k)
        x, y = nx, ny
        if store:
            out11[:, k + 1] = r11
            out12[:, k + 1].real = x
            out12[:, k + 1].imag = y
        else:
            acc.add(k + 1, r11, x, y)
    if store:
        return out11, out12, currents
    return acc


def _drift_factors(grid: RateGrid, exponential: bool):
    """Real and imaginary parts of the one-step propagator of ``-(i W + G_d) rho12``.

    The exponential form is ``exp(-int (i W + G_d) dt)`` over the step, with the
    exponent from Simpson's rule on the node and midpoint rates; it keeps the
    ensemble mean on the averaged evolution to rounding level. The Euler form
    is ``1 - (i W + G_d) dt`` with midpoint rates.
    """
    p = grid.params
    lam = grid.samples.gamma_d + 1j * (p.omega_q + grid.samples.b_shift)
    if not exponential:
        prop = 1.0 - lam * grid.dt
        return prop.real.copy(), prop.imag.copy()
    nodes = rates(p, cavity_fields(p, grid.times))
    lam_n = nodes.gamma_d + 1j * (p.omega_q + nodes.b_shift)
    prop = np.exp(-(lam_n[:-1] + 4.0 * lam + lam_n[1:]) * (grid.dt / 6.0))
    return prop.real.copy(), prop.imag.copy()


def _ito_path_scalar(dt, state, dw, milstein, coeffs):
    k_steps = dw.size
    out11 = np.empty(k_steps + 1)
    outx = np.empty(k_steps + 1)
    outy = np.empty(k_steps + 1)
    currents = np.empty(k_steps)
    r11, x, y = state.rho11, state.rho12.real, state.rho12.imag
    out11[0], outx[0], outy[0] = r11, x, y
    cols = (c.tolist() for c in coeffs)
    for k, (w, s, b, er, ei) in enumerate(zip(dw.tolist(), *cols)):
        sz = 2.0 * r11 - 1.0
        currents[k] = -s * sz + w / dt
        f1 = -2.0 * s * r11 * (1.0 - r11)
        cr = s * sz
        f2r = cr * x - b * y
        f2i = cr * y + b * x
        n11 = r11 + f1 * w
        nx = (er * x - ei * y) + f2r * w
        ny = (er * y + ei * x) + f2i * w
        if milstein:
            q = 0.5 * (w * w - dt)
            n11 = n11 + f1 * (-2.0 * s * (1.0 - 2.0 * r11)) * q
            h = f1 * (2.0 * s)
            nx = nx + ((cr * f2r - b * f2i) + h * x) * q
            ny = ny + ((cr * f2i + b * f2r) + h * y) * q
        if not -OVERSHOOT_TOL <= n11 <= 1.0 + OVERSHOOT_TOL:
            raise StepOverflow(f"rho11={n11!r} left [0, 1] at step {k}; decrease dt")
        r11 = min(max(n11, 0.0), 1.0)
        x, y = nx, ny
        out11[k + 1], outx[k + 1], outy[k + 1] = r11, x, y
    return out11, outx + 1j * outy, currents


class _MomentAccumulator:
    """Per-time sums for ensemble means and variances."""

    def __init__(self, n: int, n_times: int):
        self.n = n
        self.sum11 = np.zeros(n_times)
        self.sum12 = np.zeros(n_times, dtype=complex)
        self.m2_11 = np.zeros(n_times)
        self.m2_re = np.zeros(n_times)
        self.m2_im = np.zeros(n_times)

    def add(self, k, r11, x, y):
        m11, mx, my = r11.mean(), x.mean(), y.mean()
        self.sum11[k] = m11 * self.n
        self.sum12[k] = complex(mx, my) * self.n
        self.m2_11[k] = np.sum((r11 - m11) ** 2)
        self.m2_re[k] = np.sum((x - mx) ** 2)
        self.m2_im[k] = np.sum((y - my) ** 2)


def simulate_ito(params: CavityQubitParams, rho0=None, t_m: float = 10.0, dt: float = 1e-4,
                 seed: int = 0, *, index: int = 0, scheme: str = "milstein",
                 increments: np.ndarray | None = None, grid: RateGrid | None = None) -> Trajectory:
    """Integrate the Ito trajectory equation and record the homodyne current.

    ``scheme="milstein"`` (default) adds the ``1/2 sum F dF (dW^2 - dt)``
    term to Euler-Maruyama, propagates the linear rho12 drift exactly over
    each step and converges pathwise at first order. ``scheme="euler"`` is
    plain Euler-Maruyama. ``increments`` overrides the noise drawn from
    ``(seed, index)``.
    """
    return simulate_ito_batch(params, rho0, t_m, dt, seed, [index], scheme=scheme,
                              increments=None if increments is None else np.asarray(increments)[None, :],
                              grid=grid)[0]


def simulate_ito_batch(params: CavityQubitParams, rho0, t_m: float, dt: float, seed: int,
                       indices: Sequence[int], *, scheme: str = "milstein",
                       increments: np.ndarray | None = None,
                       grid: RateGrid | None = None) -> list[Trajectory]:
    """Several trajectories of one master seed, integrated side by side."""
    state = _as_state(rho0)
    grid = _grid_for(params, t_m, dt, grid)
    indices = list(indices)
    if increments is None:
        dw = np.stack([wiener_increments(seed, i, grid.n_steps, grid.dt) for i in indices])
        seeds = [(int(seed), int(i)) for i in indices]
    else:
        dw = np.atleast_2d(np.asarray(increments, dtype=float))
        if dw.shape[0] != len(indices):
            raise ValueError("one increment row per trajectory index is required")
        seeds = [None] * len(indices)
    r11, r12, cur = _integrate_ito(grid, state, dw, scheme)
    return [
        Trajectory(grid.times, r11[j], r12[j], params,
                   CurrentRecord(grid.dt, cur[j], dw[j], seeds[j]))
        for j in range(len(indices))
    ]


def simulate_stratonovich(params: CavityQubitParams, rho0, record: CurrentRecord,
                          grid: RateGrid | None = None) -> Trajectory:
    """Heun integration of the Stratonovich equations driven by ``record``.

    The current is held constant over each bin; no noise is generated.
    """
    state = _as_state(rho0)
    grid = _grid_for(params, record.t_m, record.dt, grid)
    if not grid.same_mesh(record.dt, record.n_steps):
        raise ValueError("record and rate grid use different meshes")
    _check_stability(grid)
    dt = grid.dt
    sci = grid.sqrt_gamma_ci
    sba = grid.sqrt_gamma_ba
    s_ = grid.samples
    decay = 1j * (params.omega_q + s_.b_shift) + s_.gamma_d - 0.5 * s_.gamma_m

    k_steps = grid.n_steps
    out11 = np.empty(k_steps + 1)
    out12 = np.empty(k_steps + 1, dtype=complex)
    r11, r12 = state.rho11, state.rho12
    out11[0], out12[0] = r11, r12
    for k, cur in enumerate(record.currents.tolist()):
        s, b, lam = float(sci[k]), float(sba[k]), complex(decay[k])

        def f(y11, y12):
            return (-2.0 * s * y11 * (1.0 - y11) * cur,
                    -lam * y12 + (s * (2.0 * y11 - 1.0) + 1j * b) * y12 * cur)

        a11, a12 = f(r11, r12)
        p11, p12 = r11 + a11 * dt, r12 + a12 * dt
        b11, b12 = f(p11, p12)
        r11 = r11 + 0.5 * (a11 + b11) * dt
        r12 = r12 + 0.5 * (a12 + b12) * dt
        if not -OVERSHOOT_TOL <= r11 <= 1.0 + OVERSHOOT_TOL:
            raise StepOverflow(f"rho11={r11!r} left [0, 1] at step {k}; decrease dt")
        r11 = min(max(r11, 0.0), 1.0)
        out11[k + 1], out12[k + 1] = r11, r12
    return Trajectory(grid.times, out11, out12, params, record)


def lindblad_reference(params: CavityQubitParams, rho0=None, t_m: float = 10.0,
                       dt: float = 1e-3) -> Trajectory:
    """Ensemble-averaged (noise-free) evolution, integrated with RK4.

    ``rho11`` is constant; ``d rho12/dt = -(i (omega_q + B(t)) + G_d(t)) rho12``
    with rates evaluated exactly at the RK4 stage times.
    """
    from .cavity import grid_size

    state = _as_state(rho0)
    k_steps = grid_size(t_m, dt)
    half = np.arange(2 * k_steps + 1) * (0.5 * dt)
    r = rates(params, cavity_fields(params, half))
    lam = (1j * (params.omega_q + r.b_shift) + r.gamma_d).tolist()
    out12 = np.empty(k_steps + 1, dtype=complex)
    y = state.rho12
    out12[0] = y
    for k in range(k_steps):
        l0, lh, l1 = lam[2 * k], lam[2 * k + 1], lam[2 * k + 2]
        k1 = -l0 * y
        k2 = -lh * (y + 0.5 * dt * k1)
        k3 = -lh * (y + 0.5 * dt * k2)
        k4 = -l1 * (y + dt * k3)
        y = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        out12[k + 1] = y
    times = np.arange(k_steps + 1) * dt
    return Trajectory(times, np.full(k_steps + 1, state.rho11), out12, params)


def ensemble_average(trajectories: Sequence[Trajectory]) -> Trajectory:
    trajectories = list(trajectories)
    if not trajectories:
        raise ValueError("cannot average an empty ensemble")
    first = trajectories[0]
    for tr in trajectories[1:]:
        if tr.times.shape != first.times.shape or not np.array_equal(tr.times, first.times):
            raise ValueError("trajectories live on different time grids")
        if tr.params != first.params:
            raise ValueError("trajectories were generated with different parameters")
    r11 = np.mean([tr.rho11 for tr in trajectories], axis=0)
    r12 = np.mean([tr.rho12 for tr in trajectories], axis=0)
    return Trajectory(first.times, r11, r12, first.params)


def ensemble_statistics(params: CavityQubitParams, rho0, t_m: float, dt: float, seed: int,
                        n_trajectories: int, *, scheme: str = "milstein",
                        chunk_size: int = 500, executor=None) -> EnsembleStats:
    """Stream ensemble moments without storing every path.

    Trajectories are processed in fixed chunks of consecutive indices and the
    chunk moments merged in index order, so the result does not depend on
    ``executor`` (any object with a ``map`` method).
    """
    if n_trajectories < 1:
        raise ValueError("need at least one trajectory")
    state = _as_state(rho0)
    grid = build_rate_grid(params, t_m, dt)
    starts = range(0, n_trajectories, chunk_size)
    jobs = [(grid, state, seed, s, min(s + chunk_size, n_trajectories), scheme) for s in starts]
    mapper = map if executor is None else executor.map
    parts = list(mapper(_chunk_moments, jobs))

    n = 0
    mean11 = mean_re = mean_im = m2_11 = m2_re = m2_im = 0.0
    for acc in parts:
        nb = acc.n
        b11 = acc.sum11 / nb
        bre = acc.sum12.real / nb
        bim = acc.sum12.imag / nb
        tot = n + nb
        d11, dre, dim = b11 - mean11, bre - mean_re, bim - mean_im
        m2_11 = m2_11 + acc.m2_11 + d11**2 * n * nb / tot
        m2_re = m2_re + acc.m2_re + dre**2 * n * nb / tot
        m2_im = m2_im + acc.m2_im + dim**2 * n * nb / tot
        mean11 = mean11 + d11 * nb / tot
        mean_re = mean_re + dre * nb / tot
        mean_im = mean_im + dim * nb / tot
        n = tot

    def sem(m2):
        if n < 2:
            return np.zeros_like(grid.times)
        return np.sqrt(m2 / (n - 1) / n)

    return EnsembleStats(grid.times, mean11, mean_re + 1j * mean_im,
                         sem(m2_11), sem(m2_re), sem(m2_im), n)


def _chunk_moments(job):
    grid, state, seed, start, stop, scheme = job
    dw = np.stack([wiener_increments(seed, i, grid.n_steps, grid.dt) for i in range(start, stop)])
    return _integrate_ito(grid, state, dw, scheme, store=False)
