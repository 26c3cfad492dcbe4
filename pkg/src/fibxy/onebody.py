"""One-body Hamiltonian H_n, its spectral data, and propagator/resolvent access.

H_n is real symmetric tridiagonal with the field on the diagonal and unit
couplings.  The XY chain evolves fermions with e^{-2i H_n t} (note the factor
2), so every propagator here is that operator:

    F_jk(t) = sum_m Q_jm exp(-2i E_m t) Q_km.

Sites are 1-based in every public signature; arrays are 0-based.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import BoundaryReached, DomainError, NumericFailure
from .potential import PotentialSpec, generate

BOUNDARY_MARGIN = 20
BOUNDARY_TOL = 1e-10


@dataclass(frozen=True)
class TridiagonalOperator:
    diagonal: np.ndarray

    @property
    def n(self) -> int:
        return len(self.diagonal)

    def to_dense(self) -> np.ndarray:
        n = self.n
        off = np.ones(n - 1)
        return np.diag(self.diagonal) + np.diag(off, 1) + np.diag(off, -1)

    def gershgorin(self) -> tuple[float, float]:
        return float(self.diagonal.min()) - 2.0, float(self.diagonal.max()) + 2.0

    def principal(self, start: int, size: int) -> "TridiagonalOperator":
        """Principal block on sites ``start+1 .. start+size``."""
        return TridiagonalOperator(self.diagonal[start:start + size].copy())


@dataclass(frozen=True)
class SpectralData:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns

    @property
    def n(self) -> int:
        return len(self.eigenvalues)

    def residuals(self, op: TridiagonalOperator) -> np.ndarray:
        Q, E = self.eigenvectors, self.eigenvalues
        HQ = op.diagonal[:, None] * Q
        HQ[:-1] += Q[1:]
        HQ[1:] += Q[:-1]
        return np.linalg.norm(HQ - Q * E, axis=0)

    def orthonormality_defect(self) -> float:
        Q = self.eigenvectors
        return float(np.abs(Q.T @ Q - np.eye(self.n)).max())


@dataclass(frozen=True)
class PropagatorRow:
    t: float
    j: int
    amplitudes: np.ndarray  # F_{jk}(t), k = 1..n

    @property
    def n(self) -> int:
        return len(self.amplitudes)

    def norm_defect(self) -> float:
        return abs(float(np.sum(np.abs(self.amplitudes) ** 2)) - 1.0)

    def tail_weight(self, margin: int = BOUNDARY_MARGIN) -> float:
        """Probability on the last ``margin`` sites."""
        return float(np.sum(np.abs(self.amplitudes[-margin:]) ** 2))


@dataclass(frozen=True)
class ResolventQuery:
    z: complex
    m: int

    def __post_init__(self):
        if complex(self.z).imag == 0:
            raise DomainError("resolvent query needs Im z != 0")


def build_hamiltonian(spec: PotentialSpec, n: int) -> TridiagonalOperator:
    return TridiagonalOperator(generate(spec, n).values)


def eigensolve(op: TridiagonalOperator) -> SpectralData:
    """Full eigendecomposition by implicit-shift QL/QR (LAPACK ``stev``)."""
    n = op.n
    if n < 1:
        raise DomainError("empty operator")
    if n == 1:
        return SpectralData(op.diagonal.astype(float).copy(), np.ones((1, 1)))
    try:
        w, Q = sla.eigh_tridiagonal(op.diagonal, np.ones(n - 1), lapack_driver="stev")
    except np.linalg.LinAlgError as exc:  # stev reports the first unconverged index
        raise NumericFailure(f"tridiagonal eigensolver did not converge: {exc}", index=str(exc)) from exc
    return SpectralData(w, Q)


def _check_site(j, n):
    if not 1 <= j <= n:
        raise DomainError(f"site {j} outside 1..{n}")


def propagator_row(S: SpectralData, j: int, t: float) -> PropagatorRow:
    _check_site(j, S.n)
    if t < 0:
        raise DomainError("time must be >= 0")
    Q = S.eigenvectors
    amps = (Q[j - 1] * np.exp(-2j * S.eigenvalues * t)) @ Q.T
    return PropagatorRow(float(t), j, amps)


def propagator_rows(S: SpectralData, j: int, times) -> np.ndarray:
    """Rows F_{j,.}(t) for every t in ``times``; shape (len(times), n)."""
    _check_site(j, S.n)
    times = np.asarray(times, dtype=float)
    Q = S.eigenvectors
    out = np.empty((len(times), S.n), dtype=complex)
    # one product per time: identical arithmetic however the times are batched
    for i, t in enumerate(times):
        out[i] = (Q[j - 1] * np.exp(-2j * S.eigenvalues * t)) @ Q.T
    return out


def propagator_matrix(S: SpectralData, t: float) -> np.ndarray:
    Q = S.eigenvectors
    return (Q * np.exp(-2j * S.eigenvalues * t)) @ Q.T


def check_boundary(row: PropagatorRow, tol: float = BOUNDARY_TOL, margin: int = BOUNDARY_MARGIN):
    """Raise :class:`BoundaryReached` if the half-line surrogate is invalid."""
    w = row.tail_weight(margin)
    if w > tol:
        raise BoundaryReached(
            f"boundary reached: weight {w:.3e} on last {margin} sites at t={row.t}",
            t=row.t, weight=w,
        )


def _banded(op: TridiagonalOperator, z: complex) -> np.ndarray:
    n = op.n
    ab = np.zeros((3, n), dtype=complex)
    ab[0, 1:] = -2.0
    ab[1] = -2.0 * op.diagonal - z
    ab[2, :-1] = -2.0
    return ab


def resolvent_column(op: TridiagonalOperator, q: ResolventQuery) -> np.ndarray:
    """Column m of (-2H_n - z)^{-1} by banded LU with partial pivoting."""
    _check_site(q.m, op.n)
    rhs = np.zeros(op.n, dtype=complex)
    rhs[q.m - 1] = 1.0
    if op.n == 1:
        return rhs / (-2.0 * op.diagonal[0] - q.z)
    return sla.solve_banded((1, 1), _banded(op, q.z), rhs)


def resolvent_residual(op: TridiagonalOperator, q: ResolventQuery, x: np.ndarray) -> float:
    r = (-2.0 * op.diagonal - q.z) * x
    r[:-1] += -2.0 * x[1:]
    r[1:] += -2.0 * x[:-1]
    r[q.m - 1] -= 1.0
    return float(np.linalg.norm(r))


def spectral_bound(lam: float) -> float:
    """K with sigma(-2H_n) inside [-K+1, K-1] whenever 0 <= V <= lam.

    Uses max{4, 2 lam + 5}; the min{...} form fails containment for lam > 1/2.
    """
    if lam < 0:
        raise DomainError("lambda must be >= 0")
    return max(4.0, 2.0 * lam + 5.0)


@dataclass(frozen=True)
class CombesThomasRow:
    eps: float
    d: float
    rho: float
    rho_over_d: float
    max_bound_ratio: float  # max |R_lm| / (2/d exp(-rho |l-m| / 2)); <= 1 passes


def combes_thomas_report(op: TridiagonalOperator, E: float, eps_list, pair_samples,
                         spectrum: SpectralData | None = None) -> list[CombesThomasRow]:
    """Fit the off-diagonal decay rate of |<l|(-2H - z)^{-1}|m>| for z = E + i eps."""
    pairs = [(int(l), int(m)) for l, m in pair_samples]
    if len(pairs) < 3:
        raise DomainError("need at least 3 sample pairs")
    if any(e <= 0 for e in eps_list):
        raise DomainError("all eps must be > 0")
    if spectrum is None:
        spectrum = eigensolve(op)
    minus2 = -2.0 * spectrum.eigenvalues
    by_col: dict[int, list[int]] = {}
    for l, m in pairs:
        _check_site(l, op.n)
        _check_site(m, op.n)
        by_col.setdefault(m, []).append(l)
    rows = []
    for eps in eps_list:
        z = complex(E, eps)
        dist = float(np.min(np.abs(minus2 - z)))
        d = min(dist, 1.0)
        dists, logs = [], []
        for m, ls in by_col.items():
            col = resolvent_column(op, ResolventQuery(z, m))
            for l in ls:
                dists.append(abs(l - m))
                logs.append(np.log(abs(col[l - 1])))
        dists = np.asarray(dists, float)
        logs = np.asarray(logs)
        A = np.vstack([dists, np.ones_like(dists)]).T
        (slope, _), *_ = np.linalg.lstsq(A, logs, rcond=None)
        rho = -float(slope)
        bound = np.log(2.0 / d) - rho * dists / 2.0
        ratio = float(np.exp(np.max(logs - bound)))
        rows.append(CombesThomasRow(eps, d, rho, rho / d, ratio))
    return rows


@dataclass(frozen=True)
class Rectangle:
    re_min: float
    re_max: float
    im_half: float


def default_contour(op: TridiagonalOperator, t: float) -> Rectangle:
    K = spectral_bound(float(np.max(np.abs(op.diagonal))))
    return Rectangle(-K, K, min(1.0 / t, 1.0) if t > 0 else 1.0)


def _gauss_side(a: complex, b: complex, nodes: int):
    x, w = np.polynomial.legendre.leggauss(nodes)
    mid, half = (a + b) / 2, (b - a) / 2
    return mid + half * x, half * w


def contour_matrix_element(op: TridiagonalOperator, j: int, k: int, t: float,
                           rect: Rectangle, quad_points: int = 2000, kernel_sign: int = 1) -> complex:
    """-(1/2 pi i) \\oint exp(kernel_sign * i t z) <j|(-2H - z)^{-1}|k> dz, counterclockwise.

    ``kernel_sign=+1`` reproduces (e^{-2iHt})_{jk}; ``-1`` gives its complex
    conjugate (e^{+2iHt})_{jk}, since the spectrum of -2H is that of the
    generator with the opposite sign.
    """
    corners = [complex(rect.re_min, -rect.im_half), complex(rect.re_max, -rect.im_half),
               complex(rect.re_max, rect.im_half), complex(rect.re_min, rect.im_half)]
    lengths = np.array([abs(corners[(i + 1) % 4] - corners[i]) for i in range(4)])
    counts = np.maximum(16, np.round(quad_points * lengths / lengths.sum()).astype(int))
    counts += counts % 2  # even rules keep nodes off the real axis
    total = 0j
    for i in range(4):
        zs, ws = _gauss_side(corners[i], corners[(i + 1) % 4], int(counts[i]))
        vals = np.empty(len(zs), dtype=complex)
        for q, z in enumerate(zs):
            vals[q] = resolvent_column(op, ResolventQuery(z, k))[j - 1]
        total += np.sum(ws * np.exp(kernel_sign * 1j * t * zs) * vals)
    return -total / (2j * np.pi)


def dunford_check(op: TridiagonalOperator, j: int, k: int, t: float,
                  contour: Rectangle | None = None, quad_points: int = 2000,
                  spectrum: SpectralData | None = None) -> tuple[complex, complex]:
    """(contour value, spectral value) of (e^{-2iH_n t})_{jk}."""
    _check_site(j, op.n)
    _check_site(k, op.n)
    if t < 0:
        raise DomainError("time must be >= 0")
    rect = contour if contour is not None else default_contour(op, t)
    K = spectral_bound(float(np.max(np.abs(op.diagonal))))
    if not (rect.im_half > 0 and rect.re_min < -(K - 1) and rect.re_max > K - 1):
        raise DomainError("contour does not strictly enclose [-K+1, K-1]")
    S = spectrum if spectrum is not None else eigensolve(op)
    spectral = complex(propagator_row(S, j, t).amplitudes[k - 1])
    return contour_matrix_element(op, j, k, t, rect, quad_points), spectral
