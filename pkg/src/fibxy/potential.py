"""External field sequences for the one-body Hamiltonian.

The Fibonacci field is the circle-map sequence

    V_j = lam * 1[ {j/phi + omega} in [1 - 1/phi, 1) ],   j >= 1,

evaluated through the floor difference ``floor((j+1)/phi + omega) -
floor(j/phi + omega)``.  Near-boundary cases are decided in exact integer
arithmetic (``sqrt(5)`` via ``math.isqrt``, ``omega`` via its exact binary
fraction), so long chains never mis-rotate.

Comparison families: ``free`` (V = 0), ``periodic`` (repeats
``period_values``), ``iid_random`` (independent +-lam per site) and
``random_dimer`` (+-lam drawn per adjacent pair).  Random kinds use the
counter-based Philox generator keyed on ``seed``: draw ``i`` depends only on
``(seed, i)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import DomainError

GOLDEN = (1.0 + math.sqrt(5.0)) / 2.0
INV_GOLDEN = GOLDEN - 1.0  # 1/phi

KINDS = ("fibonacci", "free", "periodic", "iid_random", "random_dimer")

# float path is trusted when the fractional part is farther than this from an
# integer; below it the exact path decides
_FAST_PATH_MARGIN = 1e-7


@dataclass(frozen=True)
class PotentialSpec:
    kind: str = "free"
    lam: float = 0.0
    omega: float = 0.0
    period_values: tuple[float, ...] = ()
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown potential kind {self.kind!r}; expected one of {KINDS}")
        if not (self.lam >= 0 and math.isfinite(self.lam)):
            raise DomainError(f"lambda must be finite and >= 0, got {self.lam}")
        _check_phase(self.omega)
        object.__setattr__(self, "period_values", tuple(float(v) for v in self.period_values))
        if self.kind == "periodic" and not self.period_values:
            raise DomainError("periodic potential needs nonempty period_values")
        if not (0 <= int(self.seed) < 2**64):
            raise DomainError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        object.__setattr__(self, "seed", int(self.seed))

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "lambda": self.lam,
            "omega": self.omega,
            "seed": self.seed,
            "period_values": list(self.period_values),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PotentialSpec":
        allowed = {"kind", "lambda", "omega", "seed", "period_values"}
        unknown = set(data) - allowed
        if unknown:
            raise DomainError(f"unknown potential key(s): {sorted(unknown)}")
        return cls(
            kind=data.get("kind", "free"),
            lam=float(data.get("lambda", 0.0)),
            omega=float(data.get("omega", 0.0)),
            period_values=tuple(data.get("period_values", ())),
            seed=int(data.get("seed", 0)),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "PotentialSpec":
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class PotentialSequence:
    """Field values V_1..V_n (``values[0]`` is site 1)."""

    values: np.ndarray
    spec: PotentialSpec = field(compare=False)

    def __len__(self):
        return len(self.values)


def _check_phase(omega):
    if not (0.0 <= omega < 1.0):
        raise DomainError(f"phase omega must lie in [0, 1), got {omega}")


def _exact_floor(j: int, omega: float) -> int:
    """floor(j/phi + omega) decided exactly.

    j/phi + omega = (j*sqrt5 + q)/2 with q = 2*omega - j rational, and
    floor(x/2) == floor(floor(x)/2) for real x.
    """
    q = 2 * Fraction(omega) - j
    target = j * math.sqrt(5.0) + float(q)
    m = math.floor(target)

    def le_root(r: Fraction) -> bool:
        # r <= j*sqrt(5); equality impossible for j >= 1
        if r < 0:
            return True
        return r * r <= 5 * j * j

    if j == 0:
        return math.floor(q) // 2
    while not le_root(m - q):
        m -= 1
    while le_root(m + 1 - q):
        m += 1
    return m // 2


def _floors(js: np.ndarray, omega: float) -> np.ndarray:
    """Vectorized floor(j/phi + omega) with exact fallback near integers."""
    x = js.astype(np.float64) * INV_GOLDEN + omega
    fl = np.floor(x)
    frac = x - fl
    margin = _FAST_PATH_MARGIN * np.maximum(1.0, js / 1e6)
    risky = np.nonzero((frac < margin) | (frac > 1.0 - margin))[0]
    out = fl.astype(np.int64)
    for i in risky:
        out[i] = _exact_floor(int(js[i]), omega)
    return out


def fib_value(j: int, lam: float, omega: float) -> float:
    """Fibonacci field at a single site ``j >= 1``."""
    _check_phase(omega)
    if j < 1:
        raise DomainError(f"site index must be >= 1, got {j}")
    if lam == 0:
        return 0.0
    return lam * float(_exact_floor(j + 1, omega) - _exact_floor(j, omega))


def fib_values(n: int, lam: float, omega: float, start: int = 1) -> np.ndarray:
    """Fibonacci field at sites ``start .. start+n-1`` (vectorized)."""
    _check_phase(omega)
    if n < 0 or start < 1:
        raise DomainError("need n >= 0 and start >= 1")
    js = np.arange(start, start + n + 1, dtype=np.int64)
    f = _floors(js, omega)
    return lam * np.diff(f).astype(np.float64)


def fib_word(k: int) -> str:
    """Word of length F_k under the substitution a -> ab, b -> a.

    w_1 = w_2 = "a" and w_k is the (k-2)-th iterate of "a" for k >= 2, so
    w_6 = "abaababa".
    """
    if k < 1:
        raise DomainError(f"generation index must be >= 1, got {k}")
    word = "a"
    for _ in range(k - 2):
        word = "".join("ab" if c == "a" else "a" for c in word)
    return word


def shift_phase(omega: float, l: int) -> float:
    """omega_l = omega + l/phi mod 1, so that V_{j+l}(omega) = V_j(omega_l)."""
    _check_phase(omega)
    if l < 0:
        raise DomainError("shift must be nonnegative")
    # l/phi mod 1 from the exact floor, then one rounding
    frac_l = math.fsum([l * GOLDEN, -float(l), -float(_exact_floor(l, 0.0))])
    out = (omega + frac_l) % 1.0
    return 0.0 if out >= 1.0 else out


def _philox_raw(seed: int, count: int) -> np.ndarray:
    bitgen = np.random.Philox(key=seed)
    return bitgen.random_raw(count)


def generate(spec: PotentialSpec, n: int) -> PotentialSequence:
    if n < 1:
        raise DomainError(f"chain length must be >= 1, got {n}")
    kind = spec.kind
    if kind == "free":
        values = np.zeros(n)
    elif kind == "fibonacci":
        values = fib_values(n, spec.lam, spec.omega)
    elif kind == "periodic":
        period = np.asarray(spec.period_values, dtype=np.float64)
        values = np.resize(period, n)
    elif kind == "iid_random":
        bits = _philox_raw(spec.seed, n) & np.uint64(1)
        values = np.where(bits == 1, spec.lam, -spec.lam).astype(np.float64)
    else:  # random_dimer
        npairs = (n + 1) // 2
        bits = _philox_raw(spec.seed, npairs) & np.uint64(1)
        pair_values = np.where(bits == 1, spec.lam, -spec.lam).astype(np.float64)
        values = np.repeat(pair_values, 2)[:n]
    return PotentialSequence(values=values, spec=spec)
