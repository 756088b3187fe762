import numpy as np
import pytest
from scipy.integrate import quad

from fracmfg.grid import make_grid, weighted_quadrature

# E[sqrt(1+X^2)] for X ~ N(0,1), adaptive quadrature to 1e-9
GAUSS_WEIGHTED_MOMENT = 1.354530806481315


def test_make_grid_basics():
    g = make_grid(10.0, 401)
    assert g.h == pytest.approx(0.05)
    assert g.nodes[200] == 0.0
    assert g.center == 200
    assert np.all(np.diff(g.nodes) > 0)
    # spacing exact up to representation of i*h (a few ulps at |x| ~ 10)
    assert np.allclose(np.diff(g.nodes), g.h, rtol=0, atol=4e-15)
    # exact symmetry node by node
    assert np.all(g.nodes + g.nodes[::-1] == 0.0)


def test_make_grid_rejects_bad_input():
    with pytest.raises(ValueError):
        make_grid(10.0, 400)  # even
    with pytest.raises(ValueError):
        make_grid(-1.0, 401)
    with pytest.raises(ValueError):
        make_grid(1.0, 3)  # below the minimum size contract


def test_weight_vector():
    g = make_grid(5.0, 101)
    w = g.weight(1.2)
    assert w.min() == 1.0
    assert np.argmin(w) == g.center
    assert np.all(w == w[::-1])
    with pytest.raises(ValueError):
        g.weight(-0.5)


def test_gradient_constant_and_affine():
    g = make_grid(4.0, 81)
    assert np.all(g.gradient(np.full(g.n, 7.0)) == 0.0)
    grad = g.gradient(2.5 * g.nodes - 1.0)
    assert np.abs(grad - 2.5).max() < 1e-12  # exact at the ends too


def test_gradient_quadratic_interior_exact():
    g = make_grid(10.0, 401)
    grad = g.gradient(g.nodes**2)
    assert np.abs(grad[1:-1] - 2.0 * g.nodes[1:-1]).max() < 1e-10


def test_weighted_quadrature_zero_and_gaussian_mass():
    g = make_grid(10.0, 801)
    w0 = g.weight(0.0)
    assert weighted_quadrature(g, np.zeros(g.n), w0) == 0.0
    gauss = np.exp(-0.5 * g.nodes**2) / np.sqrt(2 * np.pi)
    assert weighted_quadrature(g, gauss, w0) == pytest.approx(1.0, abs=1e-8)


def test_weighted_quadrature_first_weighted_moment():
    g = make_grid(10.0, 801)
    gauss = np.exp(-0.5 * g.nodes**2) / np.sqrt(2 * np.pi)
    val = weighted_quadrature(g, gauss, g.weight(1.0))
    assert val == pytest.approx(GAUSS_WEIGHTED_MOMENT, abs=1e-6)


def test_quadrature_linear_and_monotone(rng):
    g = make_grid(6.0, 121)
    w = g.weight(0.7)
    f1 = rng.standard_normal(g.n)
    f2 = rng.standard_normal(g.n)
    a, b = 1.3, -0.4
    lhs = g.quadrature(a * f1 + b * f2, w)
    rhs = a * g.quadrature(f1, w) + b * g.quadrature(f2, w)
    assert lhs == pytest.approx(rhs, abs=1e-12)
    assert g.quadrature(np.abs(f1), w) >= 0.0


def test_quadrature_second_order_refinement():
    ref = 2.0 * np.sin(10.0)  # integral of cos over [-10, 10]
    errs = []
    for n in (201, 401):
        g = make_grid(10.0, n)
        errs.append(abs(g.quadrature(np.cos(g.nodes)) - ref))
    ratio = errs[0] / errs[1]
    assert 2.5 < ratio < 6.0  # O(h^2)


def test_measure_sum_matches_trapezoid_for_vanishing_ends():
    g = make_grid(5.0, 101)
    f = np.exp(-g.nodes**2)
    f[0] = f[-1] = 0.0
    assert g.measure_sum(f) == pytest.approx(g.quadrature(f), abs=1e-15)
