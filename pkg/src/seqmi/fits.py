"""Scaling-law fits: power law, offset power law, logarithmic, comparison.

The offset model y = A * x^e + C absorbs an estimator's constant systematic
bias into C. Profiling out (ln A, e) leaves a 1-D objective in C,

    J(C) = sum_i (ln(y_i - C) - (ln A - alpha ln x_i))^2,

minimized by a 64-point grid pre-scan (guards the flat region near
C -> min y) followed by golden-section refinement. Model comparison uses
y-space residuals because log-space residuals are not comparable between
models with different offsets.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import (
    DegenerateSeries,
    DegenerateSeriesWarning,
    NonPositiveValue,
    TooFewPoints,
)

__all__ = [
    "LogFit",
    "ModelComparison",
    "PowerLawFit",
    "ScalingSeries",
    "extrapolate",
    "fit_log",
    "fit_powerlaw_loglog",
    "fit_powerlaw_offset",
    "fit_to_dict",
    "l2m_required_dim",
    "model_compare",
    "read_series",
    "write_series",
]

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
_GRID_POINTS = 64
_REL_TOL = 1e-10


@dataclass
class ScalingSeries:
    """(x, y) measurements with optional standard errors."""

    x: np.ndarray
    y: np.ndarray
    stderr: np.ndarray | None = None

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        if self.x.ndim != 1 or self.y.ndim != 1 or len(self.x) != len(self.y):
            raise ValueError("x and y must be 1-D and the same length")
        if np.any(self.x <= 0):
            raise ValueError("x values must be positive")
        if np.any(np.diff(self.x) <= 0):
            raise ValueError("x values must be strictly increasing")
        if self.stderr is not None:
            self.stderr = np.asarray(self.stderr, dtype=np.float64)
            if len(self.stderr) != len(self.x):
                raise ValueError("stderr length mismatch")
            if np.any(self.stderr < 0):
                raise ValueError("stderr values must be non-negative")

    def __len__(self) -> int:
        return len(self.x)


@dataclass
class PowerLawFit:
    """y = amplitude * x^exponent + offset, fitted in log space."""

    amplitude: float
    exponent: float
    offset: float
    objective: float
    r2: float
    model: str = "powerlaw"
    search_history: list[float] = field(default_factory=list, repr=False, compare=False)


class LogFit(NamedTuple):
    """y = a * ln x + b, ordinary least squares; objective in y space."""

    a: float
    b: float
    objective: float


@dataclass
class ModelComparison:
    selection: str
    powerlaw_residual: float
    log_residual: float
    tie: bool
    powerlaw_fit: PowerLawFit
    log_fit: LogFit


def _weights(series: ScalingSeries, weighted: bool) -> np.ndarray | None:
    if not weighted:
        return None
    if series.stderr is None or np.any(series.stderr == 0):
        raise ValueError("weighted fit needs strictly positive stderr values")
    return 1.0 / series.stderr**2


def _wls(u: np.ndarray, v: np.ndarray, w: np.ndarray | None):
    """Closed-form (weighted) least squares of v on u; returns slope, icept, ssr."""
    if w is None:
        w = np.ones_like(u)
    wsum = np.sum(w)
    ubar = np.sum(w * u) / wsum
    vbar = np.sum(w * v) / wsum
    du, dv = u - ubar, v - vbar
    denom = np.sum(w * du * du)
    slope = float(np.sum(w * du * dv) / denom)
    intercept = float(vbar - slope * ubar)
    resid = v - (slope * u + intercept)
    ssr = float(np.sum(w * resid * resid))
    sstot = float(np.sum(w * dv * dv))
    return slope, intercept, ssr, sstot


def fit_powerlaw_loglog(series: ScalingSeries, weighted: bool = False) -> PowerLawFit:
    """OLS of ln y on ln x; exponent sign free, offset pinned at zero."""
    if len(series) < 3:
        raise TooFewPoints(f"need >= 3 points, got {len(series)}")
    if np.any(series.y <= 0):
        raise NonPositiveValue("log-log fit requires y > 0")
    w = _weights(series, weighted)
    slope, intercept, ssr, sstot = _wls(np.log(series.x), np.log(series.y), w)
    r2 = 1.0 if sstot <= 1e-300 else 1.0 - ssr / sstot
    return PowerLawFit(
        amplitude=math.exp(intercept),
        exponent=slope,
        offset=0.0,
        objective=ssr,
        r2=r2,
    )


def _profile_objective(x: np.ndarray, y: np.ndarray, c: float, w) -> float:
    """Log-space SSR after profiling out (ln A, exponent) at fixed offset c."""
    shifted = y - c
    if np.any(shifted <= 0):
        return math.inf
    _, _, ssr, _ = _wls(np.log(x), np.log(shifted), w)
    return ssr


def fit_powerlaw_offset(series: ScalingSeries, weighted: bool = False) -> PowerLawFit:
    """Fit y = A * x^e + C; C searched on [0, min(y)), ties toward smaller C."""
    if len(series) < 4:
        raise TooFewPoints(f"need >= 4 points, got {len(series)}")
    if np.any(series.y <= 0):
        raise NonPositiveValue("offset fit requires y > 0")
    if np.all(series.y == series.y[0]):
        raise DegenerateSeries("all y values are equal; offset is unidentifiable")
    w = _weights(series, weighted)
    x, y = series.x, series.y
    ymin = float(np.min(y))
    hi = ymin * (1.0 - 1e-9)

    grid = np.linspace(0.0, hi, _GRID_POINTS)
    grid_vals = [_profile_objective(x, y, c, w) for c in grid]
    best_idx = int(np.argmin(grid_vals))  # argmin takes the first, smaller C, on ties
    history = [float(min(grid_vals[: i + 1])) for i in range(len(grid_vals))]

    lo = grid[max(best_idx - 1, 0)]
    up = grid[min(best_idx + 1, _GRID_POINTS - 1)]
    tol = _REL_TOL * max(ymin, 1e-30)
    a, b = lo, up
    c1 = b - _GOLDEN * (b - a)
    c2 = a + _GOLDEN * (b - a)
    f1 = _profile_objective(x, y, c1, w)
    f2 = _profile_objective(x, y, c2, w)
    evaluated = [(grid_vals[best_idx], grid[best_idx]), (f1, c1), (f2, c2)]
    while b - a > tol:
        if f1 <= f2:
            b, c2, f2 = c2, c1, f1
            c1 = b - _GOLDEN * (b - a)
            f1 = _profile_objective(x, y, c1, w)
            evaluated.append((f1, c1))
        else:
            a, c1, f1 = c1, c2, f2
            c2 = a + _GOLDEN * (b - a)
            f2 = _profile_objective(x, y, c2, w)
            evaluated.append((f2, c2))
        history.append(min(history[-1], evaluated[-1][0]))

    best_obj = min(v for v, _ in evaluated)
    # exact ties (flat plateaus, the C=0 boundary) break toward smaller C
    best_c = min(c for v, c in evaluated if v == best_obj)
    slope, intercept, ssr, sstot = _wls(np.log(x), np.log(y - best_c), w)
    r2 = 1.0 if sstot <= 1e-300 else 1.0 - ssr / sstot
    return PowerLawFit(
        amplitude=math.exp(intercept),
        exponent=slope,
        offset=best_c,
        objective=ssr,
        r2=r2,
        search_history=history,
    )


def fit_log(series: ScalingSeries, weighted: bool = False) -> LogFit:
    """OLS of y on ln x (objective reported in y space)."""
    if len(series) < 3:
        raise TooFewPoints(f"need >= 3 points, got {len(series)}")
    w = _weights(series, weighted)
    slope, intercept, ssr, _ = _wls(np.log(series.x), series.y, w)
    return LogFit(a=slope, b=intercept, objective=ssr)


def _yspace_residual_powerlaw(series: ScalingSeries, fit: PowerLawFit) -> float:
    pred = fit.amplitude * series.x**fit.exponent + fit.offset
    return float(np.sum((series.y - pred) ** 2))


def _yspace_residual_log(series: ScalingSeries, fit: LogFit) -> float:
    pred = fit.a * np.log(series.x) + fit.b
    return float(np.sum((series.y - pred) ** 2))


def model_compare(series: ScalingSeries) -> ModelComparison:
    """Pick powerlaw vs logarithmic by y-space sum of squared residuals."""
    fit_p = fit_powerlaw_loglog(series)
    fit_l = fit_log(series)
    r_p = _yspace_residual_powerlaw(series, fit_p)
    r_l = _yspace_residual_log(series, fit_l)
    tie = abs(r_p - r_l) <= 1e-12 * max(1.0, r_p, r_l)
    if tie:
        warnings.warn(
            f"models are indistinguishable (residuals {r_p:.3e} vs {r_l:.3e})",
            DegenerateSeriesWarning,
            stacklevel=2,
        )
        selection = "powerlaw"
    else:
        selection = "powerlaw" if r_p < r_l else "logarithmic"
    return ModelComparison(
        selection=selection,
        powerlaw_residual=r_p,
        log_residual=r_l,
        tie=tie,
        powerlaw_fit=fit_p,
        log_fit=fit_l,
    )


def extrapolate(fit: PowerLawFit, x: float) -> float:
    """Evaluate amplitude * x^exponent + offset."""
    if x <= 0:
        raise ValueError(f"x must be positive, got {x}")
    return fit.amplitude * x**fit.exponent + fit.offset


def l2m_required_dim(
    fit: PowerLawFit,
    L: float,
    capacity_constant: float,
    log_vocab: float | None = None,
) -> float:
    """History-state dimension lower bound implied by an MI fit at length L.

    The expressible bipartite MI of an autoregressive model is at most
    capacity_constant * dim + log(vocab); inverting at the fitted MI gives
    the minimum dimension, with the vocabulary term subtracted when known.
    """
    if capacity_constant <= 0:
        raise ValueError(f"capacity_constant must be > 0, got {capacity_constant}")
    mi = extrapolate(fit, L)
    if log_vocab is not None:
        mi = mi - log_vocab
    return mi / capacity_constant


def fit_to_dict(fit: PowerLawFit | LogFit) -> dict:
    if isinstance(fit, LogFit):
        return {
            "model": "logarithmic",
            "a": fit.a,
            "b": fit.b,
            "objective": fit.objective,
        }
    return {
        "model": fit.model,
        "A": fit.amplitude,
        "exponent": fit.exponent,
        "C": fit.offset,
        "objective": fit.objective,
        "r2": fit.r2,
    }


def write_series(series: ScalingSeries, path: str | Path, metadata: str | None = None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        if metadata:
            f.write(f"# {metadata}\n")
        writer = csv.writer(f)
        if series.stderr is None:
            writer.writerow(["x", "y"])
            writer.writerows(zip(series.x.tolist(), series.y.tolist()))
        else:
            writer.writerow(["x", "y", "stderr"])
            writer.writerows(
                zip(series.x.tolist(), series.y.tolist(), series.stderr.tolist())
            )


def read_series(path: str | Path) -> ScalingSeries:
    rows = []
    with open(path, newline="", encoding="utf-8") as f:
        for row in csv.reader(line for line in f if not line.startswith("#")):
            if not row or row[0] == "x":
                continue
            rows.append([float(v) for v in row])
    if not rows:
        raise TooFewPoints(f"{path}: no data rows")
    cols = list(zip(*rows))
    stderr = np.asarray(cols[2]) if len(cols) > 2 else None
    return ScalingSeries(x=np.asarray(cols[0]), y=np.asarray(cols[1]), stderr=stderr)
