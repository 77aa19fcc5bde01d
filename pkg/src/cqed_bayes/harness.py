"""Reproducible experiments: rule comparison, dt refinement and ensemble checks."""
from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field
from typing import Iterable

import numpy as np

from . import bayes
from .cavity import CavityQubitParams, RateGrid, build_rate_grid, grid_size
from .trajectory import (
    SCHEMES,
    EnsembleStats,
    QubitState,
    StepOverflow,
    Trajectory,
    coarsen_increments,
    ensemble_statistics,
    lindblad_reference,
    simulate_ito,
    simulate_ito_batch,
    wiener_increments,
)
from .validation import ConfigError, check_dyadic, check_rules

__all__ = [
    "ExperimentConfig",
    "RuleMetrics",
    "TrajectoryResult",
    "EstimateReport",
    "ConvergenceTable",
    "EnsembleCheck",
    "run_compare",
    "run_convergence",
    "run_ensemble_check",
    "rule_path",
    "coarse_grain",
]

CHUNK = 32
DEFAULT_LEVELS = (1e-3, 5e-4, 2.5e-4, 1.25e-4)


@dataclass(frozen=True)
class ExperimentConfig:
    params: CavityQubitParams = field(default_factory=CavityQubitParams)
    rho0: QubitState = field(default_factory=QubitState)
    t_m: float = 10.0
    dt: float = 1e-4
    seed: int = 0
    trajectories: int = 1
    rules: tuple[str, ...] = ("E", "G", "K")
    scheme: str = "milstein"
    window: int = 100
    keep_paths: int = 1
    levels: tuple[float, ...] = DEFAULT_LEVELS
    workers: int = 1

    def __post_init__(self):
        try:
            grid_size(self.t_m, self.dt)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if int(self.trajectories) < 1:
            raise ConfigError("trajectory count must be at least 1")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if int(self.window) < 1:
            raise ConfigError("coarse-graining window must be at least 1 bin")
        if int(self.workers) < 1:
            raise ConfigError("workers must be at least 1")
        object.__setattr__(self, "rules", check_rules(self.rules))
        object.__setattr__(self, "levels", check_dyadic(self.levels))
        object.__setattr__(self, "seed", int(self.seed))
        object.__setattr__(self, "trajectories", int(self.trajectories))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["params"]["alpha0"] = [self.params.alpha0.real, self.params.alpha0.imag]
        d["rho0"] = {"rho11": self.rho0.rho11, "rho12": [self.rho0.rho12.real, self.rho0.rho12.imag]}
        d["rules"] = list(self.rules)
        d["levels"] = list(self.levels)
        return d

    def replace(self, **changes) -> "ExperimentConfig":
        values = {k: getattr(self, k) for k in self.__dataclass_fields__}
        values.update(changes)
        return ExperimentConfig(**values)


@dataclass(frozen=True)
class RuleMetrics:
    """Elementwise absolute deviations of a rule from the trajectory equation."""

    max_rho11: float
    max_re_rho12: float
    max_im_rho12: float
    end_rho11: float
    end_re_rho12: float
    end_im_rho12: float

    @property
    def max_t(self) -> float:
        return max(self.max_rho11, self.max_re_rho12, self.max_im_rho12)

    @property
    def endpoint(self) -> float:
        return max(self.end_rho11, self.end_re_rho12, self.end_im_rho12)

    @classmethod
    def between(cls, est: np.ndarray, ref: np.ndarray) -> "RuleMetrics":
        diff = np.abs(est - ref)
        return cls(*diff.max(axis=0).tolist(), *diff[-1].tolist())


@dataclass
class TrajectoryResult:
    index: int
    seed: tuple[int, int]
    metrics: dict[str, RuleMetrics]
    times: np.ndarray | None = None
    currents: np.ndarray | None = None
    qte: np.ndarray | None = None
    rules: dict[str, np.ndarray] = field(default_factory=dict)


@dataclass
class EstimateReport:
    config: ExperimentConfig
    trajectories: list[TrajectoryResult]
    wall_time: float = 0.0

    def metric(self, rule: str, kind: str = "max_t") -> np.ndarray:
        return np.array([getattr(tr.metrics[rule], kind) for tr in self.trajectories])

    def fraction_worse(self, rule: str, than: str = "E", kind: str = "endpoint") -> float:
        """Share of trajectories where ``rule`` deviates more than ``than``."""
        return float(np.mean(self.metric(rule, kind) > self.metric(than, kind)))


@dataclass
class ConvergenceTable:
    config: ExperimentConfig
    dts: list[float]
    errors: dict[str, list[tuple[float, float]]]
    wall_time: float = 0.0

    def column(self, rule: str, which: int | None = None) -> np.ndarray:
        """Per-level error; ``which`` 0 for rho11, 1 for rho12, None for the max."""
        arr = np.array(self.errors[rule])
        return arr.max(axis=1) if which is None else arr[:, which]


@dataclass
class EnsembleCheck:
    config: ExperimentConfig
    stats: EnsembleStats
    reference: Trajectory
    z_rho11: np.ndarray
    z_re_rho12: np.ndarray
    z_im_rho12: np.ndarray
    threshold: float = 4.0
    wall_time: float = 0.0

    @property
    def max_z(self) -> float:
        return float(max(self.z_rho11.max(), self.z_re_rho12.max(), self.z_im_rho12.max()))

    @property
    def passed(self) -> bool:
        return self.max_z <= self.threshold


def coarse_grain(currents: np.ndarray, window: int) -> np.ndarray:
    """Trailing moving average over up to ``window`` bins (display only)."""
    c = np.concatenate([[0.0], np.cumsum(currents)])
    k = np.arange(1, currents.size + 1)
    lo = np.maximum(k - window, 0)
    return (c[k] - c[lo]) / (k - lo)


def rule_path(rule: str, rho0: QubitState, tr: Trajectory, grid: RateGrid) -> np.ndarray:
    """``(K + 1, 3)`` states of ``rule`` for every truncated prefix of ``tr.record``."""
    if rule == "E":
        r11, r12 = bayes.exact_path(rho0, tr.record, grid)
    elif rule == "G":
        r11, r12 = bayes.gaussian_path(rho0, tr.record, grid)
    elif rule == "K":
        r11, r12 = bayes.korotkov_path(rho0, tr.record, grid.params)
    else:
        raise ValueError(f"unknown rule {rule!r}")
    return np.column_stack([r11, r12.real, r12.imag])


def _map(config: ExperimentConfig, fn, jobs):
    if config.workers == 1 or len(jobs) == 1:
        return [fn(j) for j in jobs]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=config.workers) as pool:
        return list(pool.map(fn, jobs))


def _simulate_chunk(config: ExperimentConfig, grid: RateGrid, indices, increments=None):
    try:
        return simulate_ito_batch(config.params, config.rho0, config.t_m, grid.dt, config.seed,
                                  indices, scheme=config.scheme, increments=increments, grid=grid)
    except StepOverflow:
        for j, i in enumerate(indices):
            try:
                simulate_ito(config.params, config.rho0, config.t_m, grid.dt, config.seed,
                             index=i, scheme=config.scheme, grid=grid,
                             increments=None if increments is None else increments[j])
            except StepOverflow as exc:
                raise StepOverflow(f"seed={config.seed} trajectory={i}: {exc}") from None
        raise


def _compare_chunk(job):
    config, grid, indices = job
    results = []
    for tr, i in zip(_simulate_chunk(config, grid, indices), indices):
        qte = tr.as_array()
        paths = {r: rule_path(r, config.rho0, tr, grid) for r in config.rules}
        res = TrajectoryResult(i, (config.seed, i),
                               {r: RuleMetrics.between(p, qte) for r, p in paths.items()})
        if i < config.keep_paths:
            res.times, res.currents, res.qte, res.rules = tr.times, tr.record.currents, qte, paths
        results.append(res)
    return results


def run_compare(config: ExperimentConfig) -> EstimateReport:
    """Simulate trajectories and reconstruct each with the enabled rules at every horizon."""
    start = time.perf_counter()
    grid = build_rate_grid(config.params, config.t_m, config.dt)
    idx = list(range(config.trajectories))
    jobs = [(config, grid, idx[i:i + CHUNK]) for i in range(0, len(idx), CHUNK)]
    out = [r for chunk in _map(config, _compare_chunk, jobs) for r in chunk]
    return EstimateReport(config, out, time.perf_counter() - start)


def _convergence_job(job):
    config, index = job
    fine = config.levels[-1]
    k_fine = grid_size(config.t_m, fine)
    dw = wiener_increments(config.seed, index, k_fine, fine)
    rows = []
    for dt in config.levels:
        factor = round(dt / fine)
        grid = build_rate_grid(config.params, config.t_m, dt)
        tr = _simulate_chunk(config, grid, [index], coarsen_increments(dw, factor)[None, :])[0]
        qte = tr.as_array()
        errs = {}
        for r in config.rules:
            d = np.abs(rule_path(r, config.rho0, tr, grid) - qte).max(axis=0)
            errs[r] = (float(d[0]), float(max(d[1], d[2])))
        rows.append(errs)
    return rows


def run_convergence(config: ExperimentConfig, dt_levels: Iterable[float] | None = None) -> ConvergenceTable:
    """Per-rule worst deviation from the trajectory equation on a refined common path.

    Every trajectory's noise is drawn once at the finest level and summed in
    pairs for the coarser ones. Errors are maxima over time and trajectories.
    """
    start = time.perf_counter()
    if dt_levels is not None:
        config = config.replace(levels=tuple(dt_levels))
    for dt in config.levels:
        try:
            grid_size(config.t_m, dt)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    per_traj = _map(config, _convergence_job, [(config, i) for i in range(config.trajectories)])
    errors = {}
    for r in config.rules:
        errors[r] = [
            (max(rows[lvl][r][0] for rows in per_traj), max(rows[lvl][r][1] for rows in per_traj))
            for lvl in range(len(config.levels))
        ]
    return ConvergenceTable(config, list(config.levels), errors, time.perf_counter() - start)


def _z(diff, sem, atol=1e-12):
    """Standard-error multiples of ``|diff|`` beyond a rounding floor ``atol``.

    Near ``t = 0`` the rates vanish and so do the standard errors, while
    summation rounding on values of order 1/2 stays near 1e-16.
    """
    excess = np.maximum(np.abs(diff) - atol, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sem > 0, excess / sem, 0.0)
    return np.where((sem == 0) & (excess > 0), np.inf, z)


def run_ensemble_check(config: ExperimentConfig, threshold: float = 4.0) -> EnsembleCheck:
    """Compare the ensemble mean of conditional trajectories with the averaged evolution."""
    if config.trajectories < 100:
        raise ConfigError("ensemble check needs at least 100 trajectories")
    start = time.perf_counter()
    executor = None
    if config.workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        executor = ProcessPoolExecutor(max_workers=config.workers)
    try:
        stats = ensemble_statistics(config.params, config.rho0, config.t_m, config.dt, config.seed,
                                    config.trajectories, scheme=config.scheme, executor=executor)
    finally:
        if executor is not None:
            executor.shutdown()
    ref = lindblad_reference(config.params, config.rho0, config.t_m, config.dt)
    return EnsembleCheck(
        config, stats, ref,
        _z(stats.mean_rho11 - ref.rho11, stats.sem_rho11),
        _z(stats.mean_rho12.real - ref.rho12.real, stats.sem_re_rho12),
        _z(stats.mean_rho12.imag - ref.rho12.imag, stats.sem_im_rho12),
        threshold, time.perf_counter() - start,
    )


def metric_sanity(report: EstimateReport) -> bool:
    vals = [v for tr in report.trajectories for m in tr.metrics.values() for v in asdict(m).values()]
    return all(0.0 <= v <= 2.0 for v in vals)


def summary(report) -> str:
    if isinstance(report, EstimateReport):
        lines = [f"{len(report.trajectories)} trajectories, {report.wall_time:.2f} s"]
        for r in report.config.rules:
            lines.append(f"  {r}: max_t |rule - QTE| worst {report.metric(r).max():.3e}, "
                         f"median {np.median(report.metric(r)):.3e}")
        return "\n".join(lines)
    if isinstance(report, ConvergenceTable):
        lines = ["dt         " + "  ".join(f"{r}:rho11     {r}:rho12   " for r in report.errors)]
        for i, dt in enumerate(report.dts):
            lines.append(f"{dt:<10.3g} " + "  ".join(
                f"{report.errors[r][i][0]:.3e}  {report.errors[r][i][1]:.3e}" for r in report.errors))
        return "\n".join(lines)
    if isinstance(report, EnsembleCheck):
        verdict = "pass" if report.passed else "FAIL"
        return (f"{report.stats.n_trajectories} trajectories: max |z| = {report.max_z:.2f} "
                f"(threshold {report.threshold}) -> {verdict}")
    raise TypeError(f"no summary for {type(report).__name__}")
