import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fibxy.errors import DomainError, NumericFailure
from fibxy.potential import PotentialSpec, fib_values
from fibxy.tracemap import (alpha_prime, band_roots, exact_orbit, fibonacci_half_trace,
                            fibonacci_number, fibonacci_sandwich, fricke_invariant,
                            growth_rate_check, phase_independence_check, prop_close_bounds, root_residual_bound, trace_orbit, trace_values,
                            transfer_matrix, transfer_product)
from oracles import fibonacci_list, iterate_solution, log_phi, naive_product

# frozen plug-ins of the analytic bracket formulas
BOUNDS_12 = (0.25137, 0.47436)
BOUNDS_8 = (0.26458, 0.87604)
BOUNDS_24_LOWER = 0.22653
BOUNDS_24_UPPER = 0.32208


def test_fibonacci_numbers():
    ref = fibonacci_list(90)
    assert [fibonacci_number(l) for l in range(1, 91)] == ref
    assert fibonacci_number(10) == 55
    with pytest.raises(DomainError):
        fibonacci_number(91)


def test_sandwich():
    for l in range(1, 200):
        assert fibonacci_sandwich(l)
    phi = (1 + math.sqrt(5)) / 2
    for l in range(1, 31):
        F = fibonacci_number(l)
        assert phi**l / math.sqrt(5) - 0.5 <= F <= phi**l / math.sqrt(5) + 0.5


def test_transfer_matrix_examples():
    z, lam = 0.7 + 0.2j, 3.0
    spec = PotentialSpec("fibonacci", lam, 0.0)
    assert np.allclose(transfer_matrix(spec, z, 0).entries, np.eye(2))
    assert np.allclose(transfer_matrix(spec, z, 1).entries, [[z - lam, -1], [1, 0]])


def test_transfer_solution_transport():
    rng = np.random.default_rng(4)
    spec = PotentialSpec("fibonacci", 2.5, 0.3)
    for m in (1, 7, 50, 100):
        z = complex(rng.uniform(-3, 5))
        u0, u1 = rng.normal(size=2)
        T = transfer_matrix(spec, z, m).entries
        got = T @ np.array([u1, u0])
        ref = np.array(iterate_solution(z, fib_values(m, 2.5, 0.3), u0, u1))
        assert np.abs(got - ref).max() <= 1e-9 * np.abs(ref).max()


@settings(max_examples=40, deadline=None)
@given(st.floats(-5, 15), st.floats(0, 1, exclude_max=True), st.integers(0, 40))
def test_determinant_one(E, omega, m):
    T = transfer_matrix(PotentialSpec("fibonacci", 8.0, omega), complex(E, 0.1), m)
    scale = max(1.0, float(np.abs(T.entries).max()) ** 2)
    assert abs(T.det() - 1) <= 1e-10 * scale


def test_product_order_irrelevant_for_trace():
    v = fib_values(89, 5.0, 0.0)
    z = 1.3 + 0.05j
    fwd = np.trace(naive_product(z, v))
    rev = np.trace(naive_product(z, v[::-1]))
    assert abs(fwd - rev) <= 1e-10 * max(1, abs(fwd))
    assert abs(np.trace(transfer_product(z, v)) - fwd) <= 1e-10 * max(1, abs(fwd))


def test_orbit_fixed_point():
    o = trace_orbit(2.0, 0.0, 20)
    assert np.allclose(o.values, 1.0)


@given(st.floats(-10, 10), st.floats(0, 20))
def test_fricke_at_seeds(z, lam):
    x1, x0, xm1 = (z - lam) / 2, z / 2, 1.0
    inv = x1**2 + x0**2 + xm1**2 - 2 * x1 * x0 * xm1 - 1
    assert inv == pytest.approx(lam**2 / 4, abs=1e-9 * (1 + z * z + lam * lam))


@pytest.mark.parametrize("lam", [1.0, 8.0])
def test_recursion_vs_direct_products(lam):
    rng = np.random.default_rng(int(lam))
    for z in rng.uniform(-3, lam + 3, 20):
        o = trace_orbit(z, lam, 12)
        for M in range(1, 13):
            direct = fibonacci_half_trace(z, lam, M)
            assert abs(o.x(M) - direct) <= 1e-8 * max(1.0, abs(direct))


@pytest.mark.parametrize("lam", [1.0, 8.0])
def test_fricke_along_orbits(lam):
    rng = np.random.default_rng(int(lam))
    for z in rng.uniform(-3, lam + 3, 20):
        o = trace_orbit(z, lam, 12)
        assert o.fricke_relative_defect().max() <= 1e-12
        assert o.recursion_residual().max() <= 1e-10
        ex = exact_orbit(z, lam, 12)
        for i in range(len(ex) - 2):
            assert fricke_invariant(*ex[i:i + 3]) == Fraction(lam) ** 2 / 4
        for i, q in enumerate(ex):
            assert abs(o.values[i] - float(q)) <= 1e-12 * max(1.0, abs(float(q)))


def test_fricke_complex_orbit():
    o = trace_orbit(0.4 + 0.3j, 2.0, 14)
    assert o.fricke_relative_defect().max() <= 1e-12


def test_derivatives_match_finite_differences():
    lam, E, h = 3.0, 0.4, 1e-6
    o = trace_orbit(E, lam, 10)
    xp, _ = trace_values(np.array([E + h]), lam, 10)
    xm, _ = trace_values(np.array([E - h]), lam, 10)
    assert o.dx(10).real == pytest.approx(((xp - xm) / (2 * h))[0].real, rel=1e-5)


def test_log_form_past_overflow():
    o = trace_orbit(complex(0, 1), 8.0, 40)
    assert o.exact_upto < 40
    assert np.all(np.isfinite(o.log_abs[2:]))
    assert np.all(np.diff(o.log_abs[o.exact_upto + 1:]) > 0)


def test_band_roots_small_k():
    lam = 5.0
    assert np.allclose(band_roots(lam, 1).roots, [lam])
    # x_2 = E(E - lam)/2 - 1 = 0
    ref = np.sort(np.roots([0.5, -lam / 2, -1]).real)
    assert np.allclose(band_roots(lam, 2).roots, ref, atol=1e-12)


@pytest.mark.parametrize("lam", [8.0, 12.0])
def test_band_root_counts(lam):
    for k in range(1, 13):
        br = band_roots(lam, k)
        assert br.count == fibonacci_number(k + 1)
        assert np.all(br.residuals <= root_residual_bound(br))
        assert br.roots.min() >= -3 and br.roots.max() <= lam + 3


def test_band_roots_polish_lambda8():
    br = band_roots(8.0, 10)
    assert br.count == 89
    assert br.residuals.max() <= 1e-9


def test_band_roots_errors():
    with pytest.raises(DomainError):
        band_roots(0.0, 3)
    with pytest.raises(DomainError):
        band_roots(1.0, 0)


def test_bounds():
    lo, hi = prop_close_bounds(12.0)
    assert (lo, hi) == pytest.approx(BOUNDS_12, abs=1e-5)
    assert prop_close_bounds(8.0) == pytest.approx(BOUNDS_8, abs=1e-5)
    lo, hi = prop_close_bounds(24.0)
    assert lo == pytest.approx(BOUNDS_24_LOWER, abs=1e-5) and hi == pytest.approx(BOUNDS_24_UPPER, abs=1e-5)
    assert prop_close_bounds(4.0) == (None, None)
    assert prop_close_bounds(6.0)[1] is None
    assert lo == pytest.approx(2 * log_phi() / math.log(70))


def test_alpha_prime_lambda12():
    est = alpha_prime(12.0, 4, 12)
    assert 0.20 <= est.alpha_prime <= 0.55
    assert est.to_dict()["bracket"] == list(est.bracket)


def test_alpha_prime_lambda24():
    assert 0.18 <= alpha_prime(24.0, 4, 12).alpha_prime <= 0.37


def test_alpha_prime_y_positive():
    est = alpha_prime(8.0, 4, 14)
    assert all(np.isfinite(est.y)) and all(y > 0 for y in est.y)
    assert 0 < est.alpha_prime <= 1


def test_alpha_prime_errors():
    with pytest.raises(DomainError):
        alpha_prime(8.0, 4, 5)


def test_growth_rate():
    g = growth_rate_check(8.0, 0.0, 1.0, 20)
    assert g.ok and g.delta_hat > 0 and g.M0_hat <= 8
    for lam in (0.5, 1.0, 8.0, 20.0):
        o = trace_orbit(complex(0, 1), lam, 20)
        assert o.log_abs[21] > math.log(1e6)
    bad = growth_rate_check(1.0, 0.0, 1.0, 2, delta_min=1e6)
    assert not bad.ok and bad.reason
    with pytest.raises(DomainError):
        growth_rate_check(1.0, 0.0, 0.0, 10)


def test_phase_trivial_cases():
    r = phase_independence_check(1.0, 0.3, [0.0], 8)
    assert set(r.passing_classes) == {"odd", "even"}
    r = phase_independence_check(0.0, 0.3, [0.1, 0.6, 0.9], 8)
    assert set(r.passing_classes) == {"odd", "even"}


def test_phase_neither_raises():
    with pytest.raises(NumericFailure) as exc:
        phase_independence_check(1.0, 0.3, np.random.default_rng(0).random(10), 8)
    assert "report" in exc.value.info
