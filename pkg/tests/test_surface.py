import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lozenge_lab.errors import BadParameters, OutsideNewtonPolygon, TooCloseToBoundary
from lozenge_lab.surface import (Barrier, boundary_constants, build_schedule, grad_sigma,
                                 hess_matrix, hess_sigma, in_newton_polygon, lobachevsky, sigma,
                                 sigma_table, third_sigma)


def lob_quad(theta):
    return -mpmath.quad(lambda u: mpmath.log(abs(2 * mpmath.sin(u))), [0, theta])


def sigma_quad(s, t):
    return -sum(lob_quad(mpmath.pi * p) for p in (-s, -t, 1 + s + t)) / mpmath.pi


@pytest.mark.parametrize("th", [0.1, 0.7, 1.2, math.pi / 2, 2.5, 3.0])
def test_lobachevsky_against_quadrature(th):
    assert abs(lobachevsky(th) - float(lob_quad(th))) < 1e-12


def test_lobachevsky_symmetries():
    th = np.linspace(-4, 4, 81)
    assert np.allclose(lobachevsky(-th), -lobachevsky(th), atol=1e-14)
    assert np.allclose(lobachevsky(th + math.pi), lobachevsky(th), atol=1e-13)
    # duplication formula L(2x) = 2 L(x) + 2 L(x + pi/2)
    x = np.linspace(0.05, 1.4, 15)
    assert np.allclose(lobachevsky(2 * x), 2 * lobachevsky(x) + 2 * lobachevsky(x + math.pi / 2),
                       atol=1e-13)


@pytest.mark.parametrize("st_", [(-1 / 3, -1 / 3), (-0.2, -0.5), (-0.7, -0.1)])
def test_sigma_against_quadrature(st_):
    assert abs(sigma(*st_) - float(sigma_quad(*st_))) < 1e-10


def test_sigma_vanishes_on_boundary(rng):
    u = rng.random(60)
    pts = [(-x, 0.0) for x in u[:20]] + [(0.0, -x) for x in u[20:40]] + \
        [(-x, -(1 - x)) for x in u[40:]]
    assert max(abs(sigma(s, t)) for s, t in pts) < 1e-12


def test_sigma_outside():
    assert sigma(0.2, -0.5) == np.inf
    with pytest.raises(OutsideNewtonPolygon):
        sigma(0.2, -0.5, strict=True)
    assert not in_newton_polygon(-0.8, -0.8)


def test_gradient_and_hessian_by_differences(rng):
    h = 1e-6
    for _ in range(20):
        s, t = -0.1 - 0.4 * rng.random(), -0.1 - 0.4 * rng.random()
        gs, gt = grad_sigma(s, t)
        assert abs(gs - (sigma(s + h, t) - sigma(s - h, t)) / (2 * h)) < 1e-6
        assert abs(gt - (sigma(s, t + h) - sigma(s, t - h)) / (2 * h)) < 1e-6
        a, b, c = hess_sigma(s, t)
        assert abs(a - (grad_sigma(s + h, t)[0] - grad_sigma(s - h, t)[0]) / (2 * h)) < 1e-5
        assert abs(b - (grad_sigma(s, t + h)[0] - grad_sigma(s, t - h)[0]) / (2 * h)) < 1e-5
        assert abs(c - (grad_sigma(s, t + h)[1] - grad_sigma(s, t - h)[1]) / (2 * h)) < 1e-5
        sss, sst, stt, ttt = third_sigma(s, t)
        d = lambda f: (np.array(hess_sigma(*f(h))) - np.array(hess_sigma(*f(-h)))) / (2 * h)
        ds = d(lambda e: (s + e, t))
        dt = d(lambda e: (s, t + e))
        assert np.allclose([sss, sst, stt], ds, atol=1e-4)
        assert np.allclose([sst, stt, ttt], dt, atol=1e-4)


def test_hessian_positive_definite_and_det_constant(rng):
    for _ in range(50):
        p = rng.dirichlet([2, 2, 2])
        H = hess_matrix(-p[0], -p[1])
        assert np.all(np.linalg.eigvalsh(H) > 0)
        # det Hess sigma = pi^2 everywhere inside the polygon
        assert abs(np.linalg.det(H) - math.pi ** 2) < 1e-8 * np.abs(H).max() ** 2


def test_guard():
    with pytest.raises(TooCloseToBoundary):
        grad_sigma(-1e-5, -0.5)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
def test_convexity_property(a, b, c, d, lam):
    def slope(x, y):
        # uniform-ish point of the closed triangle
        if x + y > 1:
            x, y = 1 - x, 1 - y
        return -x, -y
    p, q = slope(a, b), slope(c, d)
    m = (lam * p[0] + (1 - lam) * q[0], lam * p[1] + (1 - lam) * q[1])
    assert sigma(*m) <= lam * sigma(*p) + (1 - lam) * sigma(*q) + 1e-10


def test_sigma_table_shape():
    tab = sigma_table(11)
    assert tab.shape == (66, 3)
    assert tab[:, 2].min() >= sigma(-1 / 3, -1 / 3) - 1e-14


def test_barrier():
    B = Barrier(0.25)
    xs = np.linspace(-1, 1, 21)
    X, Y = np.meshgrid(xs, xs)
    assert abs(B(X, Y).min() - 1.0) < 1e-12
    g1, g2 = B.grad(0.3, -0.2)
    h = 1e-6
    assert abs(g1 - (B(0.3 + h, -0.2) - B(0.3 - h, -0.2)) / (2 * h)) < 1e-5 * abs(g1)
    h11, h22 = B.hess(0.3, -0.2)
    assert h11 < 0 and h22 < 0
    w = (0.1, -0.3)
    m = B.m(w)
    assert np.allclose(m ** 2, [-x for x in B.hess(*w)])
    E = B.ellipse(w, 0.2, 0.9)
    y = E.to_disk(*E.from_disk(0.3, -0.4))
    assert np.allclose(y, (0.3, -0.4))
    assert E.contains(*E.from_disk(0.6, 0.6)) and not E.contains(*E.from_disk(0.8, 0.8))
    assert B.aspect_ratio((0.0, 0.0)) == pytest.approx(1.0)
    with pytest.raises(BadParameters):
        Barrier(0.0)
    bc = boundary_constants(B, w, 0.2)
    assert bc.c_prime(0.0) == pytest.approx(bc.C)


def test_schedule():
    s = build_schedule(1e-3, 0.05, 0.3)
    assert s.eps[0] == 0.3 and np.all(np.diff(s.eps) < 0)
    assert s.eps[-1] >= s.eps_terminal - 1e-15
    assert s.eps[-1] - 1e-3 < s.eps_terminal
    assert np.allclose(s.r, np.sqrt(1e-3 ** 0.95 / s.eps))
    assert np.all(np.diff(s.t) > 0)
    with pytest.raises(BadParameters):
        build_schedule(1e-3, 0.05, 1e-4)
    with pytest.raises(BadParameters):
        build_schedule(0.0, 0.05, 0.3)
