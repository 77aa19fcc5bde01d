"""Input checks shared by the estimators, the harness and the CLI."""
from __future__ import annotations

import math

import numpy as np
from sklearn.utils.validation import check_array

from .trajectory import QubitState

__all__ = ["ConfigError", "check_currents", "check_states", "check_rho0", "check_rules", "check_dyadic"]


class ConfigError(ValueError):
    """Invalid experiment configuration."""


def check_currents(X, n_steps: int | None = None) -> np.ndarray:
    """2-D float array of current records, one record per row."""
    X = check_array(X, dtype=np.float64, ensure_2d=True)
    if n_steps is not None and X.shape[1] != n_steps:
        raise ValueError(f"X has {X.shape[1]} time bins, estimator was fitted with {n_steps}")
    return X


def check_states(y, n_records: int) -> np.ndarray:
    """``(n_records, 3)`` array of ``rho11, Re rho12, Im rho12``."""
    y = check_array(y, dtype=np.float64, ensure_2d=True)
    if y.shape != (n_records, 3):
        raise ValueError(f"expected states of shape ({n_records}, 3), got {y.shape}")
    return y


def check_rho0(rho11, rho12) -> QubitState:
    try:
        return QubitState(rho11, rho12)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid initial state: {exc}") from None


def check_rules(rules) -> tuple[str, ...]:
    if isinstance(rules, str):
        rules = [r for r in rules.replace(" ", "").split(",") if r]
    out = []
    for r in rules:
        r = str(r).upper()
        if r not in ("E", "G", "K"):
            raise ConfigError(f"unknown rule {r!r}; expected a subset of E,G,K")
        if r not in out:
            out.append(r)
    return tuple(sorted(out, key="EGK".index))


def check_dyadic(levels) -> tuple[float, ...]:
    """Levels sorted coarse to fine, each an integer power-of-two multiple of the finest."""
    levels = sorted((float(v) for v in levels), reverse=True)
    if not levels or levels[-1] <= 0:
        raise ConfigError("dt levels must be positive")
    finest = levels[-1]
    for v in levels:
        ratio = v / finest
        n = round(ratio)
        if abs(ratio - n) > 1e-9 * ratio or n & (n - 1):
            raise ConfigError(f"dt levels {levels} are not dyadically related")
    if len(set(levels)) != len(levels):
        raise ConfigError("duplicate dt levels")
    return tuple(levels)


def finite(name: str, value) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(f"{name} must be finite")
    return value
