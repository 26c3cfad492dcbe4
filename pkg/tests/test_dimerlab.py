import numpy as np
import pytest
from hypothesis import given, strategies as st

from fibxy.dimerlab import dimer_beta, ensemble_transport, jw_degradation, realization_seed
from fibxy.errors import DomainError
from oracles import dimer_beta_ref

# frozen plug-ins
BETA = {0.5: 0.0, 1.0: 0.5, 10.0: 0.95}
DEGRADATION = {2.0: 1.5, 101.0: 1.005}


def test_formula_examples():
    for p, v in BETA.items():
        assert dimer_beta(p) == pytest.approx(v, abs=1e-15)
    for p, v in DEGRADATION.items():
        assert jw_degradation(p) == pytest.approx(v, abs=1e-15)


def test_domains():
    with pytest.raises(DomainError):
        dimer_beta(0.0)
    with pytest.raises(DomainError, match="sum diverges"):
        jw_degradation(1.0)


@given(st.floats(1e-3, 1e6))
def test_beta_matches_reference(p):
    assert dimer_beta(p) == dimer_beta_ref(p)
    assert 0 <= dimer_beta(p) < 1


@given(st.floats(1e-3, 1e5), st.floats(1e-3, 1e5))
def test_beta_monotone(p, q):
    if p <= q:
        assert dimer_beta(p) <= dimer_beta(q)


@given(st.floats(1.0, 1e6))
def test_identity(p):
    assert p * dimer_beta(p) == pytest.approx(p - 0.5, rel=1e-15, abs=1e-15)


@given(st.floats(1.0001, 1e6), st.floats(1.0001, 1e6))
def test_degradation_decreasing(p, q):
    assert jw_degradation(p) > 1
    if p < q:
        assert jw_degradation(p) >= jw_degradation(q)


def test_realization_seeds():
    assert realization_seed(0, 1) == realization_seed(0, 1)
    assert len({realization_seed(5, i) for i in range(100)}) == 100


def test_ensemble_domain():
    with pytest.raises(DomainError):
        ensemble_transport(100, np.linspace(0, 10, 11), [2.0], 8, 1.0)
    with pytest.raises(DomainError):
        ensemble_transport(100, np.linspace(0, 10, 11), [2.0], 4, 0.5)


@pytest.fixture(scope="module")
def small_report():
    return ensemble_transport(300, np.linspace(0, 50, 51), [1.0, 2.0], 8, 0.5, seed=3, window=(5, 50))


def test_ensemble_free_control(small_report):
    assert small_report.estimates["free"][2.0].exponent == pytest.approx(1.0, abs=0.05)


def test_ensemble_deterministic(small_report):
    again = ensemble_transport(300, np.linspace(0, 50, 51), [1.0, 2.0], 8, 0.5, seed=3, window=(5, 50), jobs=3)
    assert again.to_dict() == small_report.to_dict()


def test_report_table(small_report):
    rows = list(small_report.table())
    assert [r[0] for r in rows] == [1.0, 2.0]
    assert np.isnan(rows[0][2]) and rows[1][2] == 1.5
