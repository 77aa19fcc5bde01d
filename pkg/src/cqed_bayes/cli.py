"""Command line entry point: ``cqed-bayes {fields,simulate,compare,convergence,ensemble}``.

Values come from built-in defaults, then a JSON file given with ``--config``
(keys are flag names without dashes, e.g. ``"eps_m"`` or ``"eps-m"``), then
flags given explicitly on the command line.

Exit codes: 0 success, 1 configuration error, 2 numerical failure, 3 I/O error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from .cavity import CavityQubitParams, build_rate_grid
from .harness import ExperimentConfig, run_compare, run_convergence, run_ensemble_check, summary
from .io import emit_outputs
from .trajectory import StepOverflow
from .validation import ConfigError, check_rho0

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3

DEFAULTS = {
    "chi": 0.5,
    "kappa": 2.0,
    "eps_m": 1.0,
    "delta_r": 0.0,
    "phi": math.pi / 4,
    "omega_q": 0.0,
    "rho11_0": 0.5,
    "rho12_0": "0.5,0",
    "tm": 10.0,
    "dt": 1e-4,
    "seed": 0,
    "trajectories": 1,
    "rules": "E,G,K",
    "out": "cqed_out",
    "scheme": "milstein",
    "window": 100,
    "keep_paths": 1,
    "levels": "1e-3,5e-4,2.5e-4,1.25e-4",
    "workers": 1,
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _complex(text) -> complex:
    if isinstance(text, (list, tuple)):
        re, im = text
        return complex(float(re), float(im))
    if isinstance(text, (int, float)):
        return complex(text)
    parts = str(text).split(",")
    if len(parts) != 2:
        raise ConfigError(f"expected 're,im', got {text!r}")
    return complex(float(parts[0]), float(parts[1]))


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    g = common.add_argument_group("experiment")
    g.add_argument("--config", type=Path, help="JSON file with flag values")
    g.add_argument("--chi", type=float, help="dispersive coupling")
    g.add_argument("--kappa", type=float, help="cavity decay rate")
    g.add_argument("--eps-m", dest="eps_m", type=float, help="drive amplitude")
    g.add_argument("--delta-r", dest="delta_r", type=float, help="cavity-drive detuning")
    g.add_argument("--phi", type=float, help="local-oscillator phase (rad)")
    g.add_argument("--omega-q", dest="omega_q", type=float, help="qubit frequency in the frame")
    g.add_argument("--rho11-0", dest="rho11_0", type=float, help="initial rho11")
    g.add_argument("--rho12-0", dest="rho12_0", help="initial rho12 as re,im")
    g.add_argument("--tm", type=float, help="record length")
    g.add_argument("--dt", type=float, help="time step")
    g.add_argument("--seed", type=int, help="master seed")
    g.add_argument("--trajectories", type=int, help="number of trajectories")
    g.add_argument("--rules", help="comma-separated subset of E,G,K")
    g.add_argument("--out", help="output directory")
    g.add_argument("--scheme", choices=["milstein", "euler"], help="Ito integrator")
    g.add_argument("--window", type=int, help="coarse-graining window for the displayed current")
    g.add_argument("--keep-paths", dest="keep_paths", type=int,
                   help="number of trajectories whose full paths are written")
    g.add_argument("--levels", help="comma-separated dyadic dt levels (convergence)")
    g.add_argument("--workers", type=int, help="worker processes")

    parser = _Parser(prog="cqed-bayes", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("fields", parents=[common], help="dump cavity fields and rates")
    sub.add_parser("simulate", parents=[common], help="trajectory equation only")
    sub.add_parser("compare", parents=[common], help="rules E/G/K against the trajectory equation")
    sub.add_parser("convergence", parents=[common], help="errors under dt refinement")
    sub.add_parser("ensemble", parents=[common], help="ensemble mean vs averaged evolution")
    return parser


def resolve(args: argparse.Namespace) -> dict:
    values = dict(DEFAULTS)
    if args.config is not None:
        try:
            doc = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise OSError(f"cannot read config {args.config}: {exc.strerror or exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {args.config} is not valid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise ConfigError("config file must hold a JSON object")
        for key, val in doc.items():
            k = key.replace("-", "_")
            if k not in DEFAULTS:
                raise ConfigError(f"unknown config key {key!r}")
            values[k] = val
    for k in DEFAULTS:
        v = getattr(args, k, None)
        if v is not None:
            values[k] = v
    return values


def make_config(values: dict) -> ExperimentConfig:
    try:
        params = CavityQubitParams(
            delta_r=float(values["delta_r"]), chi=float(values["chi"]), kappa=float(values["kappa"]),
            epsilon_m=float(values["eps_m"]), phi=float(values["phi"]),
            omega_q=float(values["omega_q"]),
        )
        levels = values["levels"]
        if isinstance(levels, str):
            levels = [float(v) for v in levels.split(",") if v.strip()]
        return ExperimentConfig(
            params=params,
            rho0=check_rho0(float(values["rho11_0"]), _complex(values["rho12_0"])),
            t_m=float(values["tm"]), dt=float(values["dt"]), seed=int(values["seed"]),
            trajectories=int(values["trajectories"]), rules=values["rules"],
            scheme=str(values["scheme"]), window=int(values["window"]),
            keep_paths=int(values["keep_paths"]), levels=tuple(levels),
            workers=int(values["workers"]),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    values = resolve(args)
    config = make_config(values)
    if args.command == "fields":
        report = build_rate_grid(config.params, config.t_m, config.dt)
        text = f"rate grid: {report.n_steps} steps of dt={report.dt}"
    elif args.command == "simulate":
        report = run_compare(config.replace(rules=()))
        text = summary(report)
    elif args.command == "compare":
        report = run_compare(config)
        text = summary(report)
    elif args.command == "convergence":
        report = run_convergence(config)
        text = summary(report)
    else:
        report = run_ensemble_check(config)
        text = summary(report)
    files = emit_outputs(report, config, values["out"])
    print(text)
    for f in files:
        print(f"wrote {f}")
    return EXIT_OK


def main(argv=None) -> int:
    try:
        return run(argv)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (StepOverflow, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
