"""Least-squares helpers for power-law fronts and log-log slopes."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import DomainError, NumericFailure


@dataclass(frozen=True)
class LineFit:
    slope: float
    intercept: float
    slope_stderr: float
    rms: float


def line_fit(x, y) -> LineFit:
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if len(x) < 3:
        raise DomainError("line fit needs at least 3 points")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise NumericFailure("non-finite values in fit input")
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    dof = max(len(x) - 2, 1)
    s2 = float(resid @ resid) / dof
    sxx = float(np.sum((x - x.mean()) ** 2))
    stderr = np.sqrt(s2 / sxx) if sxx > 0 else np.inf
    return LineFit(float(coef[0]), float(coef[1]), float(stderr), float(np.sqrt(np.mean(resid**2))))


@dataclass(frozen=True)
class PowerFit:
    """d(t) ~ offset + prefactor * t**exponent."""

    exponent: float
    prefactor: float
    offset: float
    stderr: float
    relative_residual: float

    def __call__(self, t):
        return self.offset + self.prefactor * np.asarray(t, float) ** self.exponent


def power_fit(t, d, offset: bool = True) -> PowerFit:
    """Fit log(d - d0) = log v + alpha log t, profiling d0 over [0, min d).

    The offset is the constant term of a light cone ``d0 + v t**alpha`` (it
    absorbs the prefactor of an exponential envelope at a fixed threshold).
    With ``offset=False`` this is the plain log-log slope.
    """
    t = np.asarray(t, float)
    d = np.asarray(d, float)
    if np.any(t <= 0) or np.any(d <= 0):
        raise DomainError("power fit needs positive times and distances")
    lt = np.log(t)

    def fit_at(d0):
        return line_fit(lt, np.log(d - d0))

    d0 = 0.0
    if offset and np.ptp(d) > 0:
        # the rms profile is not unimodal: coarse scan, then bounded refinement
        hi = 0.98 * float(d.min())
        grid = np.linspace(0.0, hi, 65)
        rms = np.array([fit_at(x).rms for x in grid])
        i = int(np.argmin(rms))
        lo_b, hi_b = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
        res = minimize_scalar(lambda x: fit_at(x).rms, bounds=(lo_b, hi_b), method="bounded",
                              options={"xatol": 1e-9 * max(hi, 1.0)})
        best = float(res.x) if fit_at(res.x).rms < rms[i] else float(grid[i])
        if fit_at(best).rms < fit_at(0.0).rms:
            d0 = best
    lf = fit_at(d0)
    v = float(np.exp(lf.intercept))
    model = d0 + v * t**lf.slope
    rel = float(np.sqrt(np.mean((model - d) ** 2)) / np.mean(d))
    return PowerFit(lf.slope, v, d0, lf.slope_stderr, rel)


def running_max(x) -> np.ndarray:
    return np.maximum.accumulate(np.asarray(x, float))
