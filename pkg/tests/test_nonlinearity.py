import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from brakeorbit.errors import InvalidNonlinearity
from brakeorbit.nonlinearity import (PurePower, TableNonlinearity, default_samples, from_config,
                                     small_t_threshold, validate_hypotheses)


@pytest.fixture(scope="module")
def table():
    # f(t) = t^3 + t^2 on t >= 0: strictly superquadratic, mu = 3
    t = np.linspace(0.0, 50.0, 4001)
    return TableNonlinearity(t, t ** 3 + t ** 2)


def test_pure_power_formulas():
    nl = PurePower(3)
    t = np.array([-2.0, -0.5, 0.0, 0.5, 2.0])
    assert np.array_equal(nl.f(t), np.abs(t) ** 2 * t)
    assert np.allclose(nl.F(t), np.abs(t) ** 4 / 4, rtol=1e-15)
    assert np.allclose(nl.df(t), 3 * t ** 2, rtol=1e-15)
    assert nl.mu == 4.0


def test_cubic_passes_all_hypotheses():
    rep = validate_hypotheses(PurePower(3), 1, [0.5, 1.0, 2.0])
    assert rep.passed, rep.checks


def test_cubic_default_samples_pass():
    assert validate_hypotheses(PurePower(3), 1).passed


@pytest.mark.parametrize("p,N", [(5, 1), (3, 2), (7, 1)])
def test_supercritical_exponent_rejected(p, N):
    with pytest.raises(InvalidNonlinearity):
        validate_hypotheses(PurePower(p), N)


def test_exponent_at_most_one_rejected():
    with pytest.raises(InvalidNonlinearity):
        PurePower(1.0)


def test_f3_equality_boundary_at_two():
    nl = PurePower(3)
    assert nl.mu * nl.F(2.0) == pytest.approx(16.0, abs=1e-12)
    assert nl.f(2.0) * 2.0 == 16.0
    rep = validate_hypotheses(nl, 1, [2.0])
    assert rep.checks["f3"]


def test_primitive_matches_quadrature(table):
    for nl in (PurePower(3), PurePower(2.5), table):
        for t in (0.3, 1.0, 2.7, 11.0, 60.0):
            ref, _ = quad(lambda s: float(nl.f(s)), 0.0, t, epsabs=0, epsrel=1e-12, limit=200)
            assert float(nl.F(t)) == pytest.approx(ref, rel=1e-8)
            assert float(nl.F(-t)) == pytest.approx(ref, rel=1e-8)


def test_table_is_odd(table):
    t = default_samples()
    assert np.all(table.f(-t) == -table.f(t))


def test_table_mu_estimate(table):
    # infimum of f t / F = 3 (1 + t) / (1 + 3t/4) over the samples, smallest t = 1e-6
    t1 = 1e-6
    ratio = (t1 ** 4 + t1 ** 3) / (t1 ** 4 / 4 + t1 ** 3 / 3)
    assert table.mu == pytest.approx(ratio, rel=1e-9)
    assert validate_hypotheses(table, 1).passed


def test_table_rejects_bad_input():
    with pytest.raises(InvalidNonlinearity):
        TableNonlinearity([0, 1, 2], [0, 1, 8])
    with pytest.raises(InvalidNonlinearity):
        TableNonlinearity([0.1, 1, 2, 3], [0.001, 1, 8, 27])
    with pytest.raises(InvalidNonlinearity):
        TableNonlinearity([0, 2, 1, 3], [0, 8, 1, 27])


def test_linear_table_rejected():
    t = np.linspace(0, 10, 50)
    with pytest.raises(InvalidNonlinearity):
        TableNonlinearity(t, t)


def test_table_from_csv_and_config(tmp_path):
    t = np.linspace(0.0, 20.0, 401)
    path = tmp_path / "f.csv"
    np.savetxt(path, np.column_stack([t, t ** 3]), delimiter=",", header="t,f", comments="")
    nl = from_config({"kind": "table", "path": "f.csv"}, tmp_path)
    assert float(nl.f(1.5)) == pytest.approx(1.5 ** 3, rel=1e-9)
    assert nl.p == pytest.approx(3.0, rel=1e-3)
    with pytest.raises(InvalidNonlinearity):
        from_config({"kind": "spline"})


@settings(max_examples=200, deadline=None)
@given(t=st.floats(1e-3, 1e2), s=st.floats(1.001, 10.0))
def test_scaling_inequality(t, s):
    # F(s t) >= F(t) s^mu; the pure power is the equality case
    nl = PurePower(3)
    assert nl.F(s * t) >= nl.F(t) * s ** nl.mu * (1 - 1e-12)


@settings(max_examples=200, deadline=None)
@given(t=st.floats(1e-5, 40.0), s=st.floats(1.01, 1.2))
def test_scaling_inequality_strict_for_table(t, s):
    t_arr = np.linspace(0.0, 50.0, 4001)
    nl = TableNonlinearity(t_arr, t_arr ** 3 + t_arr ** 2)
    assert nl.F(s * t) > nl.F(t) * s ** nl.mu


def test_f_over_t_vanishes_at_origin():
    nl = PurePower(3)
    for eps in (1e-1, 1e-3, 1e-6):
        t0 = small_t_threshold(nl, eps)
        assert t0 > 0
        t = np.logspace(-12, np.log10(t0), 50)
        assert np.all(np.abs(nl.f(t) / t) < eps)


@settings(max_examples=100, deadline=None)
@given(t=st.floats(1e-2, 1e2))
def test_derivative_matches_differences(t):
    h = 1e-5
    for nl in (PurePower(3), PurePower(2.2)):
        fd = (nl.f(t + h) - nl.f(t - h)) / (2 * h)
        assert abs(fd - nl.df(t)) < 1e-6 * abs(nl.df(t))
