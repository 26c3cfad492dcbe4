import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fibxy.errors import BoundaryReached, DomainError, NumericFailure
from fibxy.manybody import (ConeFit, FrontTable, commutator_bounds, cone_fit, cone_scan,
                            consistency_report, fermionic_envelope, gnuplot_files, quantity_profile,
                            spin_envelope, stays_below_front)
from fibxy.onebody import build_hamiltonian, eigensolve, propagator_matrix
from fibxy.potential import PotentialSpec
from fibxy.tracemap import AlphaPrimeEstimate
from fibxy.transport import ExponentFit

FIB8 = PotentialSpec("fibonacci", 8.0, 0.0)


@pytest.fixture(scope="module")
def S40():
    return eigensolve(build_hamiltonian(FIB8, 40))


def test_envelopes_at_zero(S40):
    F = propagator_matrix(S40, 0.0)
    assert fermionic_envelope(F, 3, 4) <= 1e-12
    assert spin_envelope(F, 3, 4) <= 1e-12


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 30), st.integers(1, 39), st.integers(1, 39))
def test_sandwich_property(t, j, gap):
    S = eigensolve(build_hamiltonian(FIB8, 40))
    jp = min(j + gap, 40)
    if jp <= j:
        return
    b = commutator_bounds(S, j, jp, t)
    assert b.lower <= b.fermi_envelope / 2 + 1e-15
    assert b.ordered()


def test_time_symmetry(S40):
    Fp, Fm = propagator_matrix(S40, 3.3), np.conj(propagator_matrix(S40, 3.3))
    # F(-t) = conj(F(t)) for real symmetric H
    assert fermionic_envelope(Fp, 2, 9) == pytest.approx(fermionic_envelope(Fm, 2, 9), rel=1e-14)
    assert spin_envelope(Fp, 4, 9) == pytest.approx(spin_envelope(Fm, 4, 9), rel=1e-14)


def test_spin_monotone_in_source(S40):
    F = propagator_matrix(S40, 5.0)
    vals = [spin_envelope(F, j, 30) for j in range(1, 30)]
    assert np.all(np.diff(vals) >= 0)


def test_pair_domain(S40):
    F = propagator_matrix(S40, 1.0)
    with pytest.raises(DomainError):
        fermionic_envelope(F, 5, 5)
    with pytest.raises(DomainError):
        spin_envelope(F, 0, 3)


def test_stays_below_front():
    prof = np.array([1.0, 0.5, 1e-3, 2e-2, 1e-7, 1e-9])
    assert stays_below_front(prof, 1e-2) == 4
    assert stays_below_front(prof, 1e-6) == 4
    assert stays_below_front(prof, 1e-8) == 5
    assert stays_below_front(prof, 2.0) == 0


def test_quantity_profile():
    row = np.array([0.5, -0.5j, 0.5, 0.5])
    assert np.allclose(quantity_profile(row, "lower"), 0.5)
    assert np.allclose(quantity_profile(row, "fermi"), [4, 3, 2, 1])
    assert np.allclose(quantity_profile(row, "spin"), [8, 6, 4, 2])
    with pytest.raises(DomainError):
        quantity_profile(row, "other")


@pytest.fixture(scope="module")
def free_table():
    return cone_scan(PotentialSpec("free"), 1400, np.geomspace(10, 300, 60), (0.1, 1e-2, 1e-6), "fermi")


@pytest.fixture(scope="module")
def fib_table():
    return cone_scan(FIB8, 2000, np.geomspace(10, 300, 60), (1e-2, 1e-6), "fermi")


def test_scan_at_time_zero():
    for q in ("lower", "fermi", "spin"):
        tab = cone_scan(FIB8, 100, [0.0, 1.0], (0.9, 0.5, 1e-6), q)
        assert list(tab.fronts[:, 0]) == [1, 1, 1]


def test_threshold_monotone(free_table, fib_table):
    for tab in (free_table, fib_table):
        assert np.all(np.diff(tab.fronts, axis=0) >= 0)


def test_free_cone(free_table):
    f = cone_fit(free_table, 0.1, (100, 300))
    assert f.alpha == pytest.approx(1.0, abs=0.05)
    assert f.v == pytest.approx(4.0, abs=0.3)
    assert f.mu > 0


def test_fibonacci_cone_anomalous(fib_table):
    f = cone_fit(fib_table, 1e-6)
    assert f.alpha < 0.9 and 0 < f.alpha
    assert f.mu > 0 and f.v >= 0


def test_synthetic_front():
    t = np.geomspace(10, 300, 40)
    tab = FrontTable(t, (1e-6,), np.round(3 * t**0.5)[None, :].astype(int), "fermi")
    f = cone_fit(tab)
    assert f.alpha == pytest.approx(0.5, abs=0.01)
    assert f.v == pytest.approx(3.0, abs=0.1)


def test_localized_front():
    t = np.linspace(1, 100, 20)
    tab = FrontTable(t, (1e-6,), np.full((1, 20), 7), "fermi")
    f = cone_fit(tab)
    assert f.localized and f.alpha == 0.0 and f.v == 0.0


def test_fit_refusals():
    t = np.linspace(1, 10, 5)
    with pytest.raises(DomainError):
        cone_fit(FrontTable(t, (1e-6,), np.arange(5)[None, :] + 1, "fermi"))
    rng = np.random.default_rng(0)
    t = np.linspace(1, 100, 30)
    noisy = np.maximum(1, rng.integers(1, 400, 30))[None, :]
    with pytest.raises(NumericFailure):
        cone_fit(FrontTable(t, (1e-6,), noisy, "fermi"))


def test_scan_boundary():
    with pytest.raises(BoundaryReached):
        cone_scan(PotentialSpec("free"), 100, np.linspace(1, 40, 20), (1e-6,))


def test_scan_schedule_independent():
    a = cone_scan(FIB8, 300, np.linspace(1, 40, 17), (1e-4,), jobs=1)
    b = cone_scan(FIB8, 300, np.linspace(1, 40, 17), (1e-4,), jobs=3)
    assert np.array_equal(a.fronts, b.fronts) and np.array_equal(a.profiles, b.profiles)


def _fit(alpha, lam):
    return ConeFit(alpha, 1.0, 0.5, 0.0, 0.01, 0.01, 1e-6, "fermi", lam)


def test_consistency_free():
    au = ExponentFit(0.99, 0.0, 0.01, (10, 300), "front-max", lam=0.0)
    rep = consistency_report(0.0, _fit(0.98, 0.0), 1.0, au)
    assert rep.passed and max(rep.differences.values()) <= 0.05


def test_consistency_tolerance():
    ap = AlphaPrimeEstimate(8.0, (4, 5, 6), (1.0, 1.1, 1.2), 1.2, 0.4, (None, None))
    au = ExponentFit(0.35, 0.0, 0.01, (10, 300), "front-max", lam=8.0)
    assert consistency_report(8.0, [_fit(0.33, 8.0), _fit(0.2, 8.0)], ap, au).passed
    assert not consistency_report(8.0, _fit(0.1, 8.0), ap, au).passed


def test_consistency_mismatched_lambda():
    au = ExponentFit(0.35, 0.0, 0.01, (10, 300), "front-max", lam=12.0)
    with pytest.raises(DomainError):
        consistency_report(8.0, _fit(0.33, 8.0), 0.4, au)


def test_gnuplot_output(free_table):
    f = cone_fit(free_table, 0.1)
    data, script = gnuplot_files(free_table, f, "cone")
    lines = data.strip().split("\n")
    assert len(lines) == 61 and lines[0].startswith("#")
    assert "cone.dat" in script
