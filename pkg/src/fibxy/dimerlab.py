"""Random-dimer comparison: closed-form exponents and small ensemble runs.

The dimer field draws +-lam independently per pair of sites (lam < 1).  Its
closed-form moment exponent is beta+(p) = max{0, 1 - 1/(2p)}, and feeding
p beta+(p) = p - 1/2 through the Jordan-Wigner sum gives a cone exponent
(p - 1/2)/(p - 1) > 1, i.e. no anomalous cone survives.

Ensemble runs are qualitative: they average moments over seeded
realizations and compare fitted slopes with Fibonacci, free and unpaired
i.i.d. controls.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._parallel import ordered_map
from .errors import DomainError
from .onebody import build_hamiltonian, eigensolve
from .potential import PotentialSpec
from .transport import DEFAULT_WINDOW, ExponentFit, build_series
from .fitting import line_fit, running_max

MIN_ENSEMBLE = 8
CONTROL_FIBONACCI_LAMBDA = 8.0


def dimer_beta(p: float) -> float:
    """beta+(p) = max{0, 1 - 1/(2p)}."""
    if not p > 0:
        raise DomainError("p must be > 0")
    return max(0.0, 1.0 - 1.0 / (2.0 * p))


def jw_degradation(p: float) -> float:
    """(p - 1/2)/(p - 1), the cone exponent after the Jordan-Wigner sum."""
    if not p > 1:
        raise DomainError(f"sum diverges for p={p} <= 1")
    return (p - 0.5) / (p - 1.0)


def realization_seed(seed: int, i: int) -> int:
    """Counter-style child seed: depends only on (seed, i)."""
    return int(np.random.SeedSequence([int(seed), int(i)]).generate_state(1, np.uint64)[0])


@dataclass
class DimerReport:
    p_grid: tuple[float, ...]
    formula: list
    degradation: list  # None where the sum diverges
    estimates: dict  # model -> {p: ExponentFit}
    ensemble_size: int
    seed: int
    lam: float
    seeds: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "p_grid": list(self.p_grid), "formula": self.formula, "degradation": self.degradation,
            "estimates": {m: {str(p): {"exponent": f.exponent, "stderr": f.stderr} for p, f in d.items()}
                          for m, d in self.estimates.items()},
            "ensemble_size": self.ensemble_size, "seed": self.seed, "lambda": self.lam,
            "seeds": [str(s) for s in self.seeds],
        }

    def table(self):
        """(p, formula, degradation, dimer estimate, stderr) rows."""
        for i, p in enumerate(self.p_grid):
            f = self.estimates["random_dimer"][p]
            deg = self.degradation[i]
            yield p, self.formula[i], float("nan") if deg is None else deg, f.exponent, f.stderr


def _moment_fit(times, moments, p, window, label) -> ExponentFit:
    mask = (times >= window[0]) & (times <= window[1])
    if mask.sum() < 3:
        raise DomainError(f"window {window} holds fewer than 3 samples")
    lf = line_fit(p * np.log(times[mask]), running_max(np.log(moments[mask])))
    return ExponentFit(lf.slope, lf.intercept, lf.slope_stderr,
                       (float(times[mask][0]), float(times[mask][-1])), label)


def _mean_moments(specs, n, times, p_list, jobs):
    def one(spec):
        ser = build_series(eigensolve(build_hamiltonian(spec, n)), times)
        return np.array([ser.moments(p) for p in p_list])

    runs = ordered_map(one, specs, jobs)
    return np.mean(runs, axis=0)  # index-ordered sum: schedule independent


def ensemble_transport(n: int, t_grid, p_list, ensemble_size: int, lam: float, seed: int = 0,
                       window=DEFAULT_WINDOW, jobs: int = 1) -> DimerReport:
    """Ensemble-averaged moment exponents for dimer, i.i.d., Fibonacci and free fields."""
    if not 0 <= lam < 1:
        raise DomainError("dimer model needs 0 <= lambda < 1")
    if ensemble_size < MIN_ENSEMBLE:
        raise DomainError(f"ensemble_size must be >= {MIN_ENSEMBLE}")
    p_list = tuple(float(p) for p in p_list)
    if any(p <= 0 for p in p_list):
        raise DomainError("moment orders must be > 0")
    times = np.asarray(t_grid, float)
    seeds = [realization_seed(seed, i) for i in range(ensemble_size)]
    models = {
        "random_dimer": [PotentialSpec("random_dimer", lam, seed=s) for s in seeds],
        "iid_random": [PotentialSpec("iid_random", lam, seed=s) for s in seeds],
        "fibonacci": [PotentialSpec("fibonacci", CONTROL_FIBONACCI_LAMBDA, 0.0)],
        "free": [PotentialSpec("free")],
    }
    estimates = {}
    for name, specs in models.items():
        mom = _mean_moments(specs, n, times, p_list, jobs)
        estimates[name] = {p: _moment_fit(times, mom[i], p, window, f"ensemble-{name}")
                           for i, p in enumerate(p_list)}
    formula = [dimer_beta(p) for p in p_list]
    degradation = [jw_degradation(p) if p > 1 else None for p in p_list]
    return DimerReport(p_list, formula, degradation, estimates, ensemble_size, int(seed), float(lam), seeds)
