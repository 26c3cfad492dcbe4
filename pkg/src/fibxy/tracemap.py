"""Fibonacci transfer matrices, the trace map, band roots and alpha'.

Index convention (checked against direct products in the tests):
``x_M = 1/2 tr Phi_m(z, 0)`` over the first ``m = F_{M+1}`` sites of the
omega = 0 chain, with F_1 = F_2 = 1.  The seeds

    x_{-1} = 1,   x_0 = z/2,   x_1 = (z - lam)/2

(x_0 is the single-letter "b" word with zero field) satisfy the Fricke
invariant x_{M+1}^2 + x_M^2 + x_{M-1}^2 - 2 x_{M+1} x_M x_{M-1} - 1 = lam^2/4,
and x_k is a polynomial of degree F_{k+1} in z, with that many real zeros.

Because T(v)^T = J T(v) J with J = diag(1, -1), the trace of a product does
not depend on the multiplication order.
"""

from __future__ import annotations

import math
from fractions import Fraction
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NumericFailure
from .potential import GOLDEN, PotentialSpec, fib_values, generate

LOG_SWITCH = 1e300
FIB_INT64_MAX_INDEX = 90  # documented cap; F_92 is the last that fits int64


def fibonacci_number(l: int) -> int:
    """F_l with F_1 = F_2 = 1 (F_0 = 0)."""
    if l < 0:
        raise DomainError("Fibonacci index must be >= 0")
    if l > FIB_INT64_MAX_INDEX:
        raise DomainError(f"F_{l} overflows a signed 64-bit integer")
    a, b = 0, 1
    for _ in range(l):
        a, b = b, a + b
    return a


def _fib_exact(l: int) -> int:
    a, b = 0, 1
    for _ in range(l):
        a, b = b, a + b
    return a


def fibonacci_sandwich(l: int) -> bool:
    """phi^l/sqrt5 - 1/2 <= F_l <= phi^l/sqrt5 + 1/2, decided in integers.

    With the Lucas number L_l, phi^l/sqrt5 - F_l = (L_l - F_l sqrt5)/(2 sqrt5)
    and L_l^2 - 5 F_l^2 = 4 (-1)^l, so the sandwich is |L_l - F_l sqrt5| <= sqrt5,
    i.e. 4 <= sqrt5 L_l + 5 F_l.
    """
    if l < 0:
        raise DomainError("Fibonacci index must be >= 0")
    F = _fib_exact(l)
    L = 2 if l == 0 else _fib_exact(l - 1) + _fib_exact(l + 1)
    assert L * L - 5 * F * F == 4 * (-1) ** l
    lhs = 4 - 5 * F
    return lhs <= 0 or lhs * lhs <= 5 * L * L


@dataclass(frozen=True)
class TransferMatrix:
    entries: np.ndarray

    def det(self) -> complex:
        return complex(np.linalg.det(self.entries))

    def half_trace(self) -> complex:
        return complex(np.trace(self.entries)) / 2


def _step(z, v):
    return np.array([[z - v, -1.0], [1.0, 0.0]], dtype=complex)


def transfer_product(z: complex, values) -> np.ndarray:
    """Phi over the given site fields: T(V_m) ... T(V_1)."""
    M = np.eye(2, dtype=complex)
    for v in values:
        M = _step(z, v) @ M
    return M


def transfer_matrix(spec: PotentialSpec, z: complex, m: int, omega: float | None = None) -> TransferMatrix:
    """(u(m+1), u(m)) = Phi_m (u(1), u(0)) for H u = z u."""
    if m < 0:
        raise DomainError("m must be >= 0")
    if m == 0:
        return TransferMatrix(np.eye(2, dtype=complex))
    if omega is not None and spec.kind == "fibonacci":
        values = fib_values(m, spec.lam, omega)
    else:
        values = generate(spec, m).values
    return TransferMatrix(transfer_product(z, values))


def fibonacci_half_trace(z: complex, lam: float, M: int, omega: float = 0.0) -> complex:
    """1/2 tr Phi over the first F_{M+1} sites at phase omega (direct product)."""
    if M < 1:
        raise DomainError("direct products are defined for M >= 1")
    m = fibonacci_number(M + 1)
    return complex(np.trace(transfer_product(z, fib_values(m, lam, omega)))) / 2


@dataclass(frozen=True)
class TraceOrbit:
    """x_{-1}, x_0, ..., x_M (``values[i]`` is x_{i-1}).

    Past |x| > 1e300 the recursion continues on the dominant term
    2 x_M x_{M-1} in log form: ``values`` and ``derivatives`` are NaN there and
    only ``log_abs``/``phase`` are filled.  ``exact_upto`` is the last M with
    ordinary floating values.
    """

    z: complex
    lam: float
    values: np.ndarray
    derivatives: np.ndarray
    log_abs: np.ndarray
    phase: np.ndarray
    exact_upto: int

    @property
    def M_max(self) -> int:
        return len(self.values) - 2

    def x(self, M: int) -> complex:
        return complex(self.values[M + 1])

    def dx(self, M: int) -> complex:
        return complex(self.derivatives[M + 1])

    def fricke(self) -> np.ndarray:
        """Invariant at consecutive triples over the exact part."""
        x = self.values[: self.exact_upto + 2]
        a, b, c = x[:-2], x[1:-1], x[2:]
        return c**2 + b**2 + a**2 - 2 * a * b * c - 1

    def fricke_relative_defect(self) -> np.ndarray:
        """|I - lam^2/4| relative to the largest term of I, per triple.

        On escaping orbits I is a cancellation of terms of size |x|^2, so
        this is the attainable floating-point measure of conservation.
        """
        x = self.values[: self.exact_upto + 2]
        a, b, c = x[:-2], x[1:-1], x[2:]
        s = np.maximum.reduce([np.abs(a), np.abs(b), np.abs(c), np.ones(len(a))])
        u, v, w = a / s, b / s, c / s
        terms = [u * u, v * v, w * w, 2 * s * u * v * w, 1 / s**2]
        normalized = terms[0] + terms[1] + terms[2] - terms[3] - terms[4]
        scale = np.maximum.reduce([np.abs(t) for t in terms])
        return np.abs(normalized - self.lam**2 / 4 / s**2) / scale

    def recursion_residual(self) -> np.ndarray:
        x = self.values[: self.exact_upto + 2]
        if len(x) < 4:
            return np.zeros(0)
        pred = 2 * x[2:-1] * x[1:-2] - x[:-3]
        return np.abs(x[3:] - pred) / np.maximum(1.0, np.abs(x[3:]))


def trace_orbit(z: complex, lam: float, M_max: int) -> TraceOrbit:
    if M_max < 2:
        raise DomainError("M_max must be >= 2")
    z = complex(z)
    size = M_max + 2
    vals = np.full(size, np.nan, dtype=complex)
    ders = np.full(size, np.nan, dtype=complex)
    logs = np.empty(size)
    phs = np.empty(size)
    vals[:3] = [1.0, z / 2, (z - lam) / 2]
    ders[:3] = [0.0, 0.5, 0.5]
    exact_upto = M_max
    for i in range(3, size):
        a, b, c = vals[i - 3], vals[i - 2], vals[i - 1]
        with np.errstate(over="ignore", invalid="ignore"):  # caught just below
            new = 2 * c * b - a
        if not np.isfinite(new) or abs(new) > LOG_SWITCH:
            exact_upto = i - 2
            break
        vals[i] = new
        ders[i] = 2 * (ders[i - 1] * b + c * ders[i - 2]) - ders[i - 3]
    with np.errstate(divide="ignore"):
        logs[: exact_upto + 2] = np.log(np.abs(vals[: exact_upto + 2]))
    phs[: exact_upto + 2] = np.angle(vals[: exact_upto + 2])
    for i in range(exact_upto + 2, size):
        # |2 x_M x_{M-1}| exceeds |x_{M-2}| by > 1e290 here
        logs[i] = math.log(2.0) + logs[i - 1] + logs[i - 2]
        phs[i] = math.remainder(phs[i - 1] + phs[i - 2], 2 * math.pi)
    return TraceOrbit(z, float(lam), vals, ders, logs, phs, exact_upto)


def exact_orbit(z: float, lam: float, M_max: int) -> list[Fraction]:
    """x_{-1} .. x_{M_max} in exact rational arithmetic for real z and lam.

    Floats are dyadic rationals, so the recursion is exact; the cost grows
    like F_M digits, which is fine for M up to about 25.
    """
    if M_max < 1:
        raise DomainError("M_max must be >= 1")
    zq, lq = Fraction(z), Fraction(lam)
    xs = [Fraction(1), zq / 2, (zq - lq) / 2]
    while len(xs) < M_max + 2:
        xs.append(2 * xs[-1] * xs[-2] - xs[-3])
    return xs


def fricke_invariant(a, b, c):
    """c^2 + b^2 + a^2 - 2abc - 1 for consecutive orbit values a, b, c."""
    return c * c + b * b + a * a - 2 * a * b * c - 1


def trace_values(E: np.ndarray, lam: float, k: int) -> tuple[np.ndarray, np.ndarray]:
    """(x_k(E), x_k'(E)) vectorized over real or complex E; k >= 1."""
    E = np.asarray(E)
    a = np.ones_like(E)
    b = E / 2
    c = (E - lam) / 2
    da = np.zeros_like(E)
    db = np.full_like(E, 0.5)
    dc = np.full_like(E, 0.5)
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(k - 1):
            a, b, c, da, db, dc = b, c, 2 * c * b - a, db, dc, 2 * (dc * b + c * db) - da
    return c, dc


@dataclass(frozen=True)
class BandRoots:
    k: int
    lam: float
    roots: np.ndarray
    derivative_magnitudes: np.ndarray
    residuals: np.ndarray  # |x_k(root)|

    @property
    def count(self) -> int:
        return len(self.roots)


def _bloch_candidates(lam: float, k: int) -> np.ndarray:
    """Zeros of x_k as eigenvalues of the period-F_{k+1} Bloch matrix at quasi-momentum pi/2.

    For a period-D operator tr Phi_D(E) = 2 cos(theta) exactly on the spectrum
    of the twisted D x D matrix, so theta = pi/2 gives tr Phi_D = 0.
    """
    D = fibonacci_number(k + 1)
    v = fib_values(D, lam, 0.0)
    if D == 1:
        return np.array([v[0]])
    H = np.diag(v).astype(complex)
    idx = np.arange(D - 1)
    H[idx, idx + 1] = 1.0
    H[idx + 1, idx] = 1.0
    H[0, D - 1] += 1j
    H[D - 1, 0] += -1j
    return np.linalg.eigvalsh(H)


def _bisect(lam, k, lo, hi, flo):
    """Vectorized bisection of x_k on brackets [lo, hi] down to adjacent floats."""
    lo, hi, flo = lo.copy(), hi.copy(), flo.copy()
    for _ in range(120):
        mid = 0.5 * (lo + hi)
        active = (mid > lo) & (mid < hi)
        if not active.any():
            break
        fm = trace_values(mid, lam, k)[0]
        same = (np.sign(fm) == np.sign(flo)) & active
        lo = np.where(same, mid, lo)
        flo = np.where(same, fm, flo)
        hi = np.where(active & ~same, mid, hi)
    fl = np.abs(trace_values(lo, lam, k)[0])
    fh = np.abs(trace_values(hi, lam, k)[0])
    return np.where(fl <= fh, lo, hi)


def band_roots(lam: float, k: int, refinements: int = 4) -> BandRoots:
    """All real zeros of E -> x_k(E), ascending, polished by bisection.

    Candidates come from the Bloch matrix; each one gets a local sign-change
    scan (geometric grid out to half the distance to its neighbours), refined
    x4 up to ``refinements`` times until exactly one sign change brackets it.
    """
    if k < 1:
        raise DomainError("generation k must be >= 1")
    if lam <= 0:
        raise DomainError("lambda must be > 0")
    expected = fibonacci_number(k + 1)
    cand = np.sort(_bloch_candidates(lam, k))
    gaps = np.diff(np.concatenate([[-3.0], cand, [lam + 3.0]]))
    half = 0.5 * np.minimum(gaps[:-1], gaps[1:])
    if np.any(half <= 0):
        raise NumericFailure("coincident root candidates", found=int(np.sum(half > 0)), expected=expected)
    first = np.minimum(1e-14 * (lam + 3.0) / half, 0.5)
    lo = np.full(len(cand), np.nan)
    hi = np.full(len(cand), np.nan)
    flo = np.full(len(cand), np.nan)
    pending = np.arange(len(cand))
    for level in range(refinements + 1):
        npts = 4 * 4**level
        u = np.geomspace(1.0, 1.0 / first[pending], npts).T  # rows run 1 .. 1/first
        steps = (half[pending] * first[pending])[:, None] * u
        grid = np.concatenate([cand[pending, None] - steps[:, ::-1], cand[pending, None],
                               cand[pending, None] + steps], axis=1)
        f = trace_values(grid, lam, k)[0]
        s = np.sign(f)
        flips = (s[:, :-1] * s[:, 1:] < 0) | (s[:, :-1] == 0)
        nflip = flips.sum(axis=1)
        if np.any(nflip > 1):
            bad = int(pending[np.argmax(nflip > 1)])
            raise NumericFailure(f"ambiguous sign changes near candidate {bad}", found=bad, expected=expected)
        done = nflip == 1
        q = np.argmax(flips, axis=1)
        rows = np.nonzero(done)[0]
        lo[pending[rows]] = grid[rows, q[rows]]
        hi[pending[rows]] = grid[rows, q[rows] + 1]
        flo[pending[rows]] = f[rows, q[rows]]
        pending = pending[~done]
        if not len(pending):
            break
    if len(pending):
        raise NumericFailure(f"{len(pending)} candidates without a bracketed sign change",
                             found=len(cand) - len(pending), expected=expected)
    roots = _bisect(lam, k, lo, hi, flo)
    exact = flo == 0
    roots[exact] = lo[exact]
    if len(roots) != expected or np.any(np.diff(roots) <= 0):
        raise NumericFailure(f"root count mismatch: found {len(np.unique(roots))}, expected {expected}",
                             found=len(np.unique(roots)), expected=expected)
    x, dx = trace_values(roots, lam, k)
    return BandRoots(k, float(lam), roots, np.abs(dx), np.abs(x))


def root_residual_bound(br: BandRoots) -> np.ndarray:
    """Attainable |x_k| at a double-precision root: slope times one ulp, floored at 1e-9."""
    return np.maximum(1e-9, 2.0 * br.derivative_magnitudes * np.spacing(np.abs(br.roots) + 1.0))


def prop_close_bounds(lam: float) -> tuple[float | None, float | None]:
    """Analytic (lower, upper) bracket for alpha_u^+; None where not applicable."""
    if lam <= 0:
        raise DomainError("lambda must be > 0")
    two_log_phi = 2.0 * math.log(GOLDEN)
    lower = two_log_phi / math.log(2 * lam + 22) if lam > math.sqrt(24) else None
    upper = None
    if lam >= 8:
        xi = 0.5 * (lam - 4 + math.sqrt((lam - 4) ** 2 - 12))
        upper = two_log_phi / math.log(xi)
    return lower, upper


@dataclass(frozen=True)
class AlphaPrimeEstimate:
    lam: float
    ks: tuple[int, ...]
    y: tuple[float, ...]
    y_extrapolated: float
    alpha_prime: float
    bracket: tuple[float | None, float | None]
    details: dict = field(default_factory=dict, compare=False)

    def to_dict(self) -> dict:
        return {
            "lambda": self.lam,
            "k": list(self.ks),
            "y_k": list(self.y),
            "y_extrapolated": self.y_extrapolated,
            "alpha_prime": self.alpha_prime,
            "bracket": list(self.bracket),
        }


def alpha_prime(lam: float, k_min: int = 4, k_max: int = 12, stabilization: float = 0.25) -> AlphaPrimeEstimate:
    """log(phi) / lim_k (1/k) log min_j |x_k'(E_k^j)|, finite-k estimate.

    The limit is extrapolated as y_{k_max} plus the mean of the last two
    increments; the y_k oscillate with the parity of k and the mean cancels it.
    """
    if lam <= 0:
        raise DomainError("lambda must be > 0")
    if k_max < k_min + 2 or k_min < 1:
        raise DomainError("need 1 <= k_min and k_max >= k_min + 2")
    ks = tuple(range(k_min, k_max + 1))
    ys = []
    for k in ks:
        br = band_roots(lam, k)
        m = float(br.derivative_magnitudes.min())
        if not (m > 0 and np.isfinite(m)):
            raise NumericFailure(f"degenerate derivative minimum at k={k}")
        ys.append(math.log(m) / k)
    y = np.array(ys)
    inc = np.diff(y)
    step = 0.5 * (inc[-1] + inc[-2])
    y_ext = float(y[-1] + step)
    if not (np.all(np.isfinite(y)) and y_ext > 0) or abs(step) > stabilization * abs(y[-1]):
        raise NumericFailure("no stabilization of y_k", y=ys)
    return AlphaPrimeEstimate(float(lam), ks, tuple(ys), y_ext, math.log(GOLDEN) / y_ext,
                              prop_close_bounds(lam))


@dataclass(frozen=True)
class GrowthFit:
    ok: bool
    delta_hat: float | None
    M0_hat: int | None
    reason: str = ""


def growth_rate_check(lam: float, E: float, eps: float, M_max: int, delta_min: float = 1e-3) -> GrowthFit:
    """Smallest M0 (and the largest delta >= delta_min for it) with
    |x_M(E + i eps)| >= (1 + delta)^{F_{M - M0}} for all M0 < M <= M_max."""
    if not 0 < eps <= 1:
        raise DomainError("eps must lie in (0, 1]")
    K = max(4.0, 2 * lam + 5.0)
    if abs(E) > K:
        raise DomainError("E outside [-K, K]")
    orbit = trace_orbit(complex(E, eps), lam, M_max)
    logs = orbit.log_abs[2:]  # M = 1..M_max
    if not np.all(np.isfinite(logs[~np.isinf(logs)])):
        raise NumericFailure("orbit overflow before detection", last_valid=orbit.exact_upto)
    for M0 in range(0, M_max):
        Ms = np.arange(M0 + 1, M_max + 1)
        F = np.array([fibonacci_number(M - M0) for M in Ms], float)
        ratio = logs[Ms - 1] / F  # log(1 + delta) allowed per M
        delta = math.expm1(float(ratio.min()))
        if delta >= delta_min:
            return GrowthFit(True, delta, M0)
    return GrowthFit(False, None, None, "no M0 < M_max admits delta >= %g" % delta_min)


@dataclass(frozen=True)
class ParityReport:
    lam: float
    z: complex
    omegas: tuple[float, ...]
    M_values: tuple[int, ...]
    max_relative_defect: dict  # M -> max over omega
    passing: dict  # "odd"/"even" -> bool
    tol: float

    @property
    def passing_classes(self) -> list[str]:
        return [k for k, v in self.passing.items() if v]


def phase_independence_check(lam: float, z: complex, omega_grid, M_max: int,
                             tol: float = 1e-9, M_min: int = 1) -> ParityReport:
    """Which parity class of M has x_M(z, omega) == x_M(z, 0) across the grid."""
    omegas = tuple(float(o) for o in omega_grid)
    if not omegas:
        raise DomainError("empty phase grid")
    Ms = tuple(range(M_min, M_max + 1))
    defects = {}
    for M in Ms:
        ref = fibonacci_half_trace(z, lam, M, 0.0)
        scale = max(1.0, abs(ref))
        defects[M] = max(abs(fibonacci_half_trace(z, lam, M, w) - ref) / scale for w in omegas)
    passing = {
        "odd": all(defects[M] <= tol for M in Ms if M % 2 == 1),
        "even": all(defects[M] <= tol for M in Ms if M % 2 == 0),
    }
    report = ParityReport(float(lam), complex(z), omegas, Ms, defects, passing, tol)
    if not any(passing.values()):
        raise NumericFailure("neither parity class is phase independent", report=report)
    return report
