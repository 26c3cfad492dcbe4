"""Many-body Lieb-Robinson quantities built from one-body propagator rows.

All bounds are stated with ||B|| = 1.  For a source site j and a target j' > j:

    lower          |F_jj'(t)|
    fermi envelope 2 sum_{k >= j'} |F_jk(t)|
    spin envelope  4 sum_{l <= j} sum_{k >= j'} |F_lk(t)|

The adjoint terms of the spin bound have the same magnitudes as the plain
ones (H_n is real symmetric), which gives the factor 4.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._parallel import ordered_map
from .errors import BoundaryReached, DomainError, NumericFailure
from .fitting import power_fit
from .onebody import (BOUNDARY_MARGIN, SpectralData, build_hamiltonian, eigensolve,
                      propagator_matrix, propagator_row)
from .potential import PotentialSpec

QUANTITIES = ("lower", "fermi", "spin")
CONSISTENCY_TOL = 0.15
MAX_RELATIVE_RESIDUAL = 0.2
MIN_FRONT_POINTS = 8
N_PROFILES = 5
PROFILE_FLOOR = 1e-13  # below this |F| is eigenvector roundoff
LOCALIZED_EXPONENT = 0.05


def _check_pair(j, jp, n):
    if not (1 <= j < jp <= n):
        raise DomainError(f"need 1 <= j < j' <= n, got j={j}, j'={jp}, n={n}")


def fermionic_envelope(F: np.ndarray, j: int, jp: int) -> float:
    """2 sum_{k >= j'} |F_jk| for the propagator matrix (or row block) F."""
    A = np.abs(np.atleast_2d(F))
    _check_pair(j, jp, A.shape[1])
    return float(2.0 * A[j - 1, jp - 1:].sum())


def spin_envelope(F: np.ndarray, j: int, jp: int) -> float:
    """4 sum_{l <= j} sum_{k >= j'} |F_lk|."""
    A = np.abs(np.atleast_2d(F))
    _check_pair(j, jp, A.shape[1])
    return float(4.0 * A[:j, jp - 1:].sum())


@dataclass(frozen=True)
class CommutatorBounds:
    t: float
    j: int
    jp: int
    lower: float
    fermi_envelope: float
    spin_envelope: float

    def ordered(self, tol: float = 0.0) -> bool:
        return self.lower <= self.fermi_envelope + tol and self.fermi_envelope <= self.spin_envelope + tol


def commutator_bounds(S: SpectralData, j: int, jp: int, t: float) -> CommutatorBounds:
    _check_pair(j, jp, S.n)
    F = propagator_matrix(S, t)
    return CommutatorBounds(float(t), j, jp, float(abs(F[j - 1, jp - 1])),
                            fermionic_envelope(F, j, jp), spin_envelope(F, j, jp))


def quantity_profile(row: np.ndarray, quantity: str) -> np.ndarray:
    """quantity(1, 1+d, t) for d = 0..n-1 from the source row F_{1,.}(t)."""
    a = np.abs(row)
    if quantity == "lower":
        return a
    tail = np.cumsum(a[::-1])[::-1]
    if quantity == "fermi":
        return 2.0 * tail
    if quantity == "spin":  # the l-sum has the single term l = 1
        return 4.0 * tail
    raise DomainError(f"unknown quantity {quantity!r}; expected one of {QUANTITIES}")


def stays_below_front(profile: np.ndarray, eps: float) -> int:
    """Smallest d with profile[d'] < eps for every d' >= d."""
    above = np.nonzero(profile >= eps)[0]
    return int(above[-1]) + 1 if len(above) else 0


@dataclass
class FrontTable:
    """Fronts per threshold and time, plus profiles at a few sampled times."""

    times: np.ndarray
    thresholds: tuple[float, ...]
    fronts: np.ndarray  # (len(thresholds), len(times))
    quantity: str
    lam: float | None = None
    profile_times: np.ndarray = field(default_factory=lambda: np.empty(0))
    profiles: np.ndarray = field(default_factory=lambda: np.empty((0, 0)))

    def rows(self):
        """(t, eps, front) records in time-major order."""
        for i, t in enumerate(self.times):
            for e, eps in enumerate(self.thresholds):
                yield float(t), float(eps), int(self.fronts[e, i])

    def front(self, eps: float) -> np.ndarray:
        return self.fronts[self.thresholds.index(eps)]


def _profile_indices(count: int, k: int = N_PROFILES) -> np.ndarray:
    return np.unique(np.round(np.geomspace(max(count // 8, 1), count, k)).astype(int) - 1)


def cone_scan(spec: PotentialSpec, n: int, t_grid, thresholds, quantity: str = "fermi",
              jobs: int = 1, spectrum: SpectralData | None = None) -> FrontTable:
    """Suffix fronts of quantity(1, 1+d, t) for every threshold and time."""
    times = np.asarray(t_grid, float)
    if len(times) < 1 or np.any(np.diff(times) <= 0) or times[0] < 0:
        raise DomainError("t_grid must be nonnegative and strictly increasing")
    eps_list = tuple(float(e) for e in thresholds)
    if not eps_list or any(e <= 0 for e in eps_list):
        raise DomainError("thresholds must be positive")
    if quantity not in QUANTITIES:
        raise DomainError(f"unknown quantity {quantity!r}; expected one of {QUANTITIES}")
    S = spectrum if spectrum is not None else eigensolve(build_hamiltonian(spec, n))
    if S.n != n:
        raise DomainError("spectrum size does not match n")

    def one(t):
        prof = quantity_profile(propagator_row(S, 1, t).amplitudes, quantity)
        return [stays_below_front(prof, e) for e in eps_list], prof

    results = ordered_map(one, times, jobs)
    fronts = np.array([r[0] for r in results], dtype=int).T
    limit = n - 1 - BOUNDARY_MARGIN
    if np.any(fronts > limit):
        e, i = np.argwhere(fronts > limit)[0]
        raise BoundaryReached(f"front for eps={eps_list[e]:g} within {BOUNDARY_MARGIN} sites of the boundary "
                              f"at t={times[i]:.6g}", t=float(times[i]), eps=eps_list[e])
    idx = _profile_indices(len(times))
    lam = spec.lam if spec.kind != "free" else 0.0
    return FrontTable(times, eps_list, fronts, quantity, lam,
                      times[idx].copy(), np.array([results[i][1] for i in idx]))


@dataclass(frozen=True)
class ConeFit:
    alpha: float
    v: float
    mu: float
    offset: float
    alpha_stderr: float
    relative_residual: float
    threshold: float
    quantity: str
    lam: float | None = None
    localized: bool = False
    window: tuple[float, float] = (0.0, 0.0)

    def to_dict(self) -> dict:
        return {"alpha": self.alpha, "v": self.v, "mu": self.mu, "offset": self.offset,
                "alpha_stderr": self.alpha_stderr, "relative_residual": self.relative_residual,
                "threshold": self.threshold, "quantity": self.quantity, "lambda": self.lam,
                "localized": self.localized, "window": list(self.window)}


def _decay_rate(table: FrontTable, eps: float) -> float:
    """mu from log quantity vs distance beyond the front, median over sampled profiles."""
    if table.profiles.size == 0:
        return float("nan")
    fronts = np.interp(table.profile_times, table.times, table.front(eps))
    rates = []
    for prof, d0 in zip(table.profiles, fronts):
        d = np.arange(len(prof))
        # four decades past the threshold, clear of the roundoff floor
        sel = (d >= d0) & (prof > max(eps * 1e-4, PROFILE_FLOOR))
        if sel.sum() < 3:
            continue
        slope = np.polyfit(d[sel], np.log(prof[sel]), 1)[0]
        rates.append(-slope)
    return float(np.median(rates)) if rates else float("nan")


def cone_fit(table: FrontTable, eps: float | None = None, window=None) -> ConeFit:
    """Fit front(t) = d0 + v t^alpha, then the decay rate mu outside the cone."""
    eps = table.thresholds[0] if eps is None else float(eps)
    if eps not in table.thresholds:
        raise DomainError(f"threshold {eps:g} not in the table")
    t, d = table.times, table.front(eps).astype(float)
    if window is not None:
        m = (t >= window[0]) & (t <= window[1])
        t, d = t[m], d[m]
    m = t > 0
    t, d = t[m], d[m]
    if len(t) < MIN_FRONT_POINTS:
        raise DomainError(f"cone fit needs >= {MIN_FRONT_POINTS} front points, got {len(t)}")
    used = (float(t[0]), float(t[-1]))
    mu = _decay_rate(table, eps)
    if np.ptp(d) == 0:
        return ConeFit(0.0, 0.0, mu, float(d[0]), 0.0, 0.0, eps, table.quantity, table.lam, True, used)
    if np.any(d <= 0):
        raise NumericFailure("front at distance 0 inside the fit window", threshold=eps)
    pf = power_fit(t, d)
    if not np.isfinite(pf.exponent) or pf.relative_residual > MAX_RELATIVE_RESIDUAL:
        raise NumericFailure(f"ill-conditioned cone fit: relative residual {pf.relative_residual:.3g}",
                             threshold=eps, residual=pf.relative_residual)
    localized = pf.exponent < LOCALIZED_EXPONENT
    return ConeFit(pf.exponent, 0.0 if localized else pf.prefactor, mu, pf.offset, pf.stderr,
                   pf.relative_residual, eps, table.quantity, table.lam, localized, used)


@dataclass(frozen=True)
class ConsistencyReport:
    lam: float
    cone_alpha: float
    alpha_prime: float
    alpha_u: float
    differences: dict
    tolerance: float
    passed: bool
    other_cones: dict

    def to_dict(self) -> dict:
        return {"lambda": self.lam, "cone_alpha": self.cone_alpha, "alpha_prime": self.alpha_prime,
                "alpha_u": self.alpha_u, "differences": self.differences, "tolerance": self.tolerance,
                "pass": self.passed, "other_cones": self.other_cones}


def _lam_of(x):
    return getattr(x, "lam", None)


def consistency_report(lam: float, cone_fits, alpha_prime_estimate, transport_estimate,
                       tolerance: float = CONSISTENCY_TOL) -> ConsistencyReport:
    """Compare the cone exponent with the trace-map and front-based exponents.

    ``cone_fits`` is a ConeFit or a sequence of them; the first is the one
    compared and the rest are recorded.  ``alpha_prime_estimate`` may be a
    plain number (1.0 for the free chain, where no trace map applies).
    """
    fits = [cone_fits] if isinstance(cone_fits, ConeFit) else list(cone_fits)
    if not fits:
        raise DomainError("need at least one cone fit")
    for item in [*fits, alpha_prime_estimate, transport_estimate]:
        other = _lam_of(item)
        if other is not None and not np.isclose(other, lam):
            raise DomainError(f"input for lambda={other} does not match lambda={lam}")
    ap = float(getattr(alpha_prime_estimate, "alpha_prime", alpha_prime_estimate))
    au = float(getattr(transport_estimate, "exponent", transport_estimate))
    ca = fits[0].alpha
    diffs = {"cone-alpha_prime": abs(ca - ap), "cone-alpha_u": abs(ca - au), "alpha_prime-alpha_u": abs(ap - au)}
    passed = all(v <= tolerance for v in diffs.values())
    others = {f"{f.quantity}@{f.threshold:g}": f.alpha for f in fits[1:]}
    return ConsistencyReport(float(lam), ca, ap, au, diffs, tolerance, passed, others)


def gnuplot_files(table: FrontTable, fit: ConeFit, stem: str) -> tuple[str, str]:
    """(data text, script text) for a front plot; columns t, front, fit."""
    d = table.front(fit.threshold)
    model = fit.offset + fit.v * table.times ** fit.alpha
    lines = [f"# t front fit  quantity={table.quantity} eps={fit.threshold:.17g}"]
    lines += [f"{t:.17g} {int(r)} {m:.17g}" for t, r, m in zip(table.times, d, model)]
    data = "\n".join(lines) + "\n"
    script = (f"set logscale xy\nset xlabel 't'\nset ylabel 'front distance'\n"
              f"plot '{stem}.dat' using 1:2 with points title 'front', "
              f"'' using 1:3 with lines title 'alpha={fit.alpha:.4f}'\n")
    return data, script
