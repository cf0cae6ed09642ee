import numpy as np
import pytest
from scipy import integrate

from kinetic_pg.problems import (INITIAL_MASS, ProblemSpec, initial_condition, manufactured_dphi,
                                 manufactured_pair, temporal_transform)


def test_initial_condition_examples():
    assert initial_condition([0.5, 0.5]) == pytest.approx(1 / (2 * np.pi))
    assert initial_condition([0.75, 0.5]) == pytest.approx(0.0, abs=1e-15)
    assert initial_condition([0.625, 0.5]) == pytest.approx(0.0795775, abs=1e-7)
    assert initial_condition([0.1, 0.1]) == 0.0


def test_initial_condition_is_c1_at_support_edge():
    r = 0.25
    # radial derivative of 128 r^3 - 48 r^2 + 1 vanishes at r = 1/4
    assert 3 * 128 * r**2 - 2 * 48 * r == pytest.approx(0.0)
    inside = initial_condition([0.5 + r - 1e-6, 0.5])
    assert abs(inside) < 1e-9


def test_initial_mass_matches_quadrature():
    # oracle: adaptive 2D quadrature in polar coordinates, times the angular measure 2 pi
    val, _ = integrate.dblquad(lambda r, th: initial_condition([0.5 + r * np.cos(th), 0.5 + r * np.sin(th)]) * r,
                               0, 2 * np.pi, 0, 0.25, epsabs=1e-13)
    assert INITIAL_MASS == pytest.approx(2 * np.pi * val, rel=1e-10)
    assert INITIAL_MASS == pytest.approx(0.0589049, abs=1e-7)


def test_manufactured_examples():
    u, f0 = manufactured_pair(0.3, 0.7)
    assert u(0.5, 0.5, np.pi / 2) == pytest.approx(1.0)
    assert f0(0.5, 0.5, np.pi / 2) == pytest.approx(0.3 + 2 * 0.7)
    for x1, x2 in [(0.0, 0.3), (1.0, 0.3), (0.4, 0.0), (0.4, 1.0)]:
        assert u(x1, x2, 1.1) == pytest.approx(0.0, abs=1e-30)


def test_manufactured_source_matches_finite_differences():
    c, d = 0.1, 0.1
    u, f0 = manufactured_pair(c, d)
    rng = np.random.default_rng(7)
    x1, x2, phi = rng.random(1000), rng.random(1000), 2 * np.pi * rng.random(1000)
    h = 1e-3

    def d1(f, k):
        # fourth order central difference along argument k
        def shift(s):
            a = [x1, x2, phi]
            a[k] = a[k] + s
            return f(*a)
        return (-shift(2 * h) + 8 * shift(h) - 8 * shift(-h) + shift(-2 * h)) / (12 * h)

    def d2phi(f):
        g = lambda s: f(x1, x2, phi + s)
        return (-g(2 * h) + 16 * g(h) - 30 * g(0) + 16 * g(-h) - g(-2 * h)) / (12 * h**2)

    lhs = np.cos(phi) * d1(u, 0) + np.sin(phi) * d1(u, 1) + c * u(x1, x2, phi) - d * d2phi(u)
    np.testing.assert_allclose(lhs, f0(x1, x2, phi), atol=1e-6)
    np.testing.assert_allclose(d1(u, 2), manufactured_dphi(x1, x2, phi), atol=1e-8)


def test_temporal_transform_examples():
    vals = np.ones((3, 2))
    t = np.array([0.0, 0.375, 0.75])
    np.testing.assert_array_equal(temporal_transform(vals, t, 0.0), vals)
    out = temporal_transform(vals, t, 0.8, "inverse")
    assert out[0, 0] == 1.0
    assert out[2, 1] == pytest.approx(1.8221188, abs=1e-7)
    back = temporal_transform(out, t, 0.8, "forward")
    np.testing.assert_allclose(back, vals)
    with pytest.raises(ValueError):
        temporal_transform(vals, t, 0.8, "sideways")


def test_problem_constants():
    p = ProblemSpec.time_dependent(0.8, 4)
    assert p.lambda_a == 0.8 and p.alpha_a == 0.8 and p.c_a == 0.8
    s = ProblemSpec.stationary(c=1.0, d=0.4, n_x=4)
    assert s.alpha_a == 0.4 and s.c_a == 1.0 and s.lambda_a == 0.0
    assert s.n_v == 4


@pytest.mark.parametrize("kwargs", [
    dict(kind="weird", n_x=4, n_v=4),
    dict(kind="stationary", n_x=0, n_v=4),
    dict(kind="stationary", n_x=4, n_v=2),
    dict(kind="stationary", n_x=4, n_v=4, c=0.0),
    dict(kind="time_dependent", n_x=4, n_v=4, n_t=None),
    dict(kind="time_dependent", n_x=4, n_v=4, n_t=4, q_inv=-1.0),
])
def test_problem_validation(kwargs):
    with pytest.raises(ValueError):
        ProblemSpec(**kwargs)
