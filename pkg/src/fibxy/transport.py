"""One-body transport quantities and finite-window exponent estimators.

All quantities are built from rows of e^{-2iH_n t} started at site 1.  The
factor 2 rescales time only, so fitted exponents are unaffected; fronts of
the free chain move at speed 4 on this clock.

The limsup definitions are replaced by least-squares fits over a time window.
Moments are fitted on their running maximum (biases toward the limsup), and
the upper transport exponent is estimated from fronts r_eps(t) = min{N :
P(N, t) <= eps} instead of from S+(alpha), which would need alpha fixed in
advance.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from ._parallel import ordered_map
from .errors import BoundaryReached, DomainError, NumericFailure
from .fitting import line_fit, power_fit, running_max
from .onebody import (BOUNDARY_MARGIN, BOUNDARY_TOL, PropagatorRow, SpectralData,
                      propagator_row)

DEFAULT_WINDOW = (10.0, 300.0)
DEFAULT_EPSILONS = (1e-4, 1e-6, 1e-8)
MIN_WINDOW_SAMPLES = 8


@dataclass(frozen=True)
class ExponentFit:
    exponent: float
    intercept: float
    stderr: float
    window: tuple[float, float]
    method: str
    lam: float | None = None
    details: dict = field(default_factory=dict, compare=False)

    def to_dict(self) -> dict:
        return {
            "exponent": self.exponent,
            "intercept": self.intercept,
            "stderr": self.stderr,
            "window": list(self.window),
            "method": self.method,
            "lambda": self.lam,
        }


def outside_probability(row: PropagatorRow, N: int) -> float:
    """P(N, t) = sum_{k > N} |F_1k(t)|^2."""
    if not 0 <= N <= row.n:
        raise DomainError(f"N={N} outside 0..{row.n}")
    return float(np.sum(np.abs(row.amplitudes[N:]) ** 2))


def moment(row: PropagatorRow, p: float) -> float:
    """|X|^p(t) = sum_k k^p |F_1k(t)|^2."""
    if p <= 0:
        raise DomainError("moment order must be > 0")
    k = np.arange(1, row.n + 1, dtype=float)
    return float(np.sum(k**p * np.abs(row.amplitudes) ** 2))


def _tail_sums(prob: np.ndarray) -> np.ndarray:
    """P[..., N] = sum_{k > N} prob[..., k-1] for N = 0..n."""
    rev = np.cumsum(prob[..., ::-1], axis=-1)[..., ::-1]
    zeros = np.zeros(prob.shape[:-1] + (1,))
    return np.concatenate([rev, zeros], axis=-1)


@dataclass(frozen=True)
class TransportSeries:
    times: np.ndarray
    amplitudes: np.ndarray  # (len(times), n), rows F_{1,.}(t)
    p_grid: tuple[float, ...] = (2.0,)
    n_grid: tuple[int, ...] = ()

    @property
    def n(self) -> int:
        return self.amplitudes.shape[1]

    @property
    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def outside(self) -> np.ndarray:
        """P(N, t) for N = 0..n, shape (len(times), n+1)."""
        return _tail_sums(self.probabilities)

    def outside_on_grid(self) -> np.ndarray:
        return self.outside()[:, list(self.n_grid)]

    def moments(self, p: float) -> np.ndarray:
        if p <= 0:
            raise DomainError("moment order must be > 0")
        k = np.arange(1, self.n + 1, dtype=float)
        return self.probabilities @ (k**p)

    def row(self, i: int) -> PropagatorRow:
        return PropagatorRow(float(self.times[i]), 1, self.amplitudes[i])


def build_series(S: SpectralData, times, p_grid=(2.0,), n_grid=(), jobs: int = 1,
                 boundary_tol: float = BOUNDARY_TOL, check_boundary: bool = True) -> TransportSeries:
    times = np.asarray(times, float)
    if len(times) > 1 and np.any(np.diff(times) <= 0):
        raise DomainError("times must be strictly increasing")
    rows = ordered_map(lambda t: propagator_row(S, 1, t).amplitudes, times, jobs)
    amps = np.array(rows) if rows else np.empty((0, S.n), complex)
    if check_boundary and len(times):
        tail = np.sum(np.abs(amps[:, -BOUNDARY_MARGIN:]) ** 2, axis=1)
        bad = np.nonzero(tail > boundary_tol)[0]
        if len(bad):
            i = int(bad[0])
            raise BoundaryReached(
                f"boundary reached at t={times[i]:.6g}: weight {tail[i]:.3e} on last {BOUNDARY_MARGIN} sites",
                t=float(times[i]), weight=float(tail[i]))
    return TransportSeries(times, amps, tuple(float(p) for p in p_grid), tuple(int(N) for N in n_grid))


class AbelResult(NamedTuple):
    value: float
    truncation_bound: float


def abel_average(times, values, T: float) -> AbelResult:
    """<f>(T) = (2/T) int_0^inf exp(-2t/T) f(t) dt, trapezoid on the samples.

    ``times`` must start at 0 and reach at least 10 T; the neglected tail is
    bounded by exp(-2 t_max / T) sup|f|.
    """
    t = np.asarray(times, float)
    f = np.asarray(values, float)
    if T <= 0:
        raise DomainError("averaging time must be > 0")
    if t[0] != 0.0:
        raise DomainError("samples must start at t = 0")
    t_max = float(t[-1])
    if t_max < 10.0 * T:
        raise DomainError(f"insufficient tail: t_max={t_max} < 10 T = {10 * T}")
    kernel = (2.0 / T) * np.exp(-2.0 * t / T)
    value = float(np.trapezoid(kernel * f, t))
    bound = float(np.exp(-2.0 * t_max / T) * np.max(np.abs(f)))
    return AbelResult(value, bound)


def _window_mask(times, window):
    lo, hi = window
    if not lo < hi:
        raise DomainError(f"empty window {window}")
    mask = (times >= lo) & (times <= hi)
    if mask.sum() < MIN_WINDOW_SAMPLES:
        raise DomainError(f"window {window} holds {int(mask.sum())} samples, need {MIN_WINDOW_SAMPLES}")
    return mask


def beta_estimator(series: TransportSeries, p: float, window=DEFAULT_WINDOW,
                   averaged: bool = False, n_averages: int = 12) -> ExponentFit:
    """Slope of log|X|^p (or log<|X|^p>) against p log t over the window.

    The averaged variant evaluates Abel averages at ``n_averages``
    log-spaced T inside the window, capped at t_max / 10 of the series.
    """
    mom = series.moments(p)
    if not np.all(np.isfinite(mom)) or np.any(mom <= 0):
        raise NumericFailure("non-finite or non-positive moments")
    if not averaged:
        logm = running_max(np.log(mom))
        mask = _window_mask(series.times, window)
        x, y = p * np.log(series.times[mask]), logm[mask]
        method = "beta-running-max"
        used = (float(series.times[mask][0]), float(series.times[mask][-1]))
    else:
        t_cap = series.times[-1] / 10.0
        lo, hi = window[0], min(window[1], t_cap)
        if not lo < hi:
            raise DomainError(f"insufficient tail for averaged fit on window {window}")
        Ts = np.geomspace(lo, hi, n_averages)
        avgs = np.array([abel_average(series.times, mom, T).value for T in Ts])
        x, y = p * np.log(Ts), running_max(np.log(avgs))
        method = "beta-abel-averaged"
        used = (float(lo), float(hi))
    lf = line_fit(x, y)
    return ExponentFit(lf.slope, lf.intercept, lf.slope_stderr, used, method)


def front_radius(series: TransportSeries, eps: float) -> np.ndarray:
    """Rows (t, r_eps(t)) with r_eps(t) = min{N : P(N, t) <= eps}."""
    if not 0 < eps < 1:
        raise DomainError("threshold must lie in (0, 1)")
    P = series.outside()
    r = np.argmax(P <= eps, axis=1)  # P[:, n] == 0, so a hit always exists
    if np.any(r > series.n - BOUNDARY_MARGIN):
        i = int(np.argmax(r > series.n - BOUNDARY_MARGIN))
        raise BoundaryReached(f"front for eps={eps:g} reached the boundary at t={series.times[i]:.6g}",
                              t=float(series.times[i]))
    return np.column_stack([series.times, r.astype(float)])


def alpha_u_estimator(series: TransportSeries, epsilon_list=DEFAULT_EPSILONS,
                      window=DEFAULT_WINDOW) -> ExponentFit:
    """Largest front exponent over the thresholds (finite-window surrogate)."""
    eps_list = list(epsilon_list)
    if not eps_list:
        raise DomainError("need at least one threshold")
    mask = _window_mask(series.times, window)
    best = None
    per_eps = {}
    for eps in eps_list:
        tr = front_radius(series, eps)
        r = running_max(tr[:, 1])[mask]
        t = tr[mask, 0]
        if np.any(r <= 0):
            raise NumericFailure("zero front radius inside the fit window")
        pf = power_fit(t, r)
        per_eps[eps] = pf
        if best is None or pf.exponent > best[1].exponent:
            best = (eps, pf)
    eps, pf = best
    used = (float(series.times[mask][0]), float(series.times[mask][-1]))
    return ExponentFit(pf.exponent, float(np.log(pf.prefactor)), pf.stderr, used, "front-max",
                       details={"eps": eps, "prefactor": pf.prefactor, "offset": pf.offset,
                                "per_eps": {str(k): v.exponent for k, v in per_eps.items()}})
