"""CSV and manifest output.

CSV files use ``", "`` as the separator (header included); read them with
``pandas.read_csv(path, skipinitialspace=True)``. Floats are written with
``repr`` so values round-trip exactly and reruns are byte-identical.
"""
from __future__ import annotations

import json
import platform
from pathlib import Path

import numpy as np

from .cavity import RateGrid
from .harness import ConvergenceTable, EnsembleCheck, EstimateReport, ExperimentConfig, coarse_grain

__all__ = ["emit_outputs", "write_csv", "TRAJECTORY_COLUMNS", "CONVERGENCE_COLUMNS"]

SEP = ", "
TRAJECTORY_COLUMNS = ["t", "I", "I_coarse", "rho11_qte", "re_rho12_qte", "im_rho12_qte"]
RULE_COLUMNS = ["rho11_{r}", "re_rho12_{r}", "im_rho12_{r}"]
CONVERGENCE_COLUMNS = ["dt", "err_E_rho11", "err_E_rho12", "err_G_rho11", "err_G_rho12",
                       "err_K_rho11", "err_K_rho12"]
FIELD_COLUMNS = ["t", "re_alpha1", "im_alpha1", "re_alpha2", "im_alpha2",
                 "gamma_ci", "gamma_ba", "gamma_d", "gamma_m", "b_shift"]
METRIC_COLUMNS = ["trajectory", "rule", "max_rho11", "max_re_rho12", "max_im_rho12",
                  "end_rho11", "end_re_rho12", "end_im_rho12"]
ENSEMBLE_COLUMNS = ["t", "mean_rho11", "sem_rho11", "ref_rho11", "z_rho11",
                    "mean_re_rho12", "sem_re_rho12", "ref_re_rho12", "z_re_rho12",
                    "mean_im_rho12", "sem_im_rho12", "ref_im_rho12", "z_im_rho12"]


def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    v = float(v)
    if np.isnan(v):
        return "nan"
    return repr(v)


def write_csv(path: Path, columns: list[str], rows) -> Path:
    path = Path(path)
    try:
        with open(path, "w", newline="") as fh:
            fh.write(SEP.join(columns) + "\n")
            for row in rows:
                fh.write(SEP.join(_fmt(v) for v in row) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


def _trajectory_rows(res, rules, window):
    k = res.currents.size
    cur = np.append(res.currents, np.nan)
    coarse = np.append(coarse_grain(res.currents, window), np.nan)
    cols = [res.times, cur, coarse, res.qte[:, 0], res.qte[:, 1], res.qte[:, 2]]
    for r in rules:
        cols.extend(res.rules[r].T)
    table = np.column_stack(cols)
    assert table.shape[0] == k + 1
    return table.tolist()


def _manifest(config: ExperimentConfig | None, kind: str, report, files) -> dict:
    from . import __version__

    doc = {
        "kind": kind,
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "wall_time_s": getattr(report, "wall_time", None),
        "files": [Path(f).name for f in files],
    }
    if config is not None:
        doc["config"] = config.to_dict()
        doc["seeds"] = {"master": config.seed, "trajectories": config.trajectories,
                        "rule": "SeedSequence(master, spawn_key=(index,))"}
    return doc


def emit_outputs(report, config: ExperimentConfig | None, out_dir) -> list[Path]:
    """Write the CSV files for ``report`` plus ``manifest.json`` into ``out_dir``."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc.strerror or exc}") from exc
    files = []
    if isinstance(report, EstimateReport):
        kind = "compare" if report.config.rules else "simulate"
        rules = report.config.rules
        cols = TRAJECTORY_COLUMNS + [c.format(r=r) for r in rules for c in RULE_COLUMNS]
        kept = [tr for tr in report.trajectories if tr.qte is not None]
        for n, res in enumerate(kept):
            name = "trajectory.csv" if n == 0 else f"trajectory_{res.index:04d}.csv"
            files.append(write_csv(out / name, cols, _trajectory_rows(res, rules, report.config.window)))
        if rules:
            rows = [[str(tr.index), r, *(getattr(tr.metrics[r], f) for f in METRIC_COLUMNS[2:])]
                    for tr in report.trajectories for r in rules]
            files.append(write_csv(out / "metrics.csv", METRIC_COLUMNS, rows))
    elif isinstance(report, ConvergenceTable):
        kind = "convergence"
        rows = []
        for i, dt in enumerate(report.dts):
            row = [dt]
            for r in "EGK":
                row.extend(report.errors[r][i] if r in report.errors else (np.nan, np.nan))
            rows.append(row)
        files.append(write_csv(out / "convergence.csv", CONVERGENCE_COLUMNS, rows))
    elif isinstance(report, EnsembleCheck):
        kind = "ensemble"
        s, ref = report.stats, report.reference
        table = np.column_stack([
            s.times, s.mean_rho11, s.sem_rho11, ref.rho11, report.z_rho11,
            s.mean_rho12.real, s.sem_re_rho12, ref.rho12.real, report.z_re_rho12,
            s.mean_rho12.imag, s.sem_im_rho12, ref.rho12.imag, report.z_im_rho12,
        ])
        files.append(write_csv(out / "ensemble.csv", ENSEMBLE_COLUMNS, table.tolist()))
    elif isinstance(report, RateGrid):
        kind = "fields"
        f, s = report.fields, report.samples
        table = np.column_stack([f.t, f.alpha1.real, f.alpha1.imag, f.alpha2.real, f.alpha2.imag,
                                 s.gamma_ci, s.gamma_ba, s.gamma_d, s.gamma_m, s.b_shift])
        files.append(write_csv(out / "fields.csv", FIELD_COLUMNS, table.tolist()))
    else:
        raise TypeError(f"cannot emit {type(report).__name__}")

    manifest = out / "manifest.json"
    doc = _manifest(config, kind, report, files)
    if isinstance(report, EnsembleCheck):
        doc["max_z"] = report.max_z
        doc["passed"] = report.passed
    try:
        manifest.write_text(json.dumps(doc, indent=2) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {manifest}: {exc.strerror or exc}") from exc
    return files + [manifest]
