import numpy as np
import pytest

from lozenge_lab.errors import BadParameters
from lozenge_lab.pde.perturbation import (AffineMapTw, PerturbationProblem, coefficient_a,
                                          expansion_check, problem_from_schedule)
from lozenge_lab.pde.profiles import AffineProfile, SplineProfile, curved_profile
from lozenge_lab.surface import Barrier


@pytest.fixture(scope="module")
def curved():
    return curved_profile(n=129)


@pytest.fixture(scope="module")
def problem(curved):
    return PerturbationProblem(curved, Barrier(0.25), (0.0, 0.0), 0.005, 0.08, n_grid=33)


def test_affine_profile_checks():
    p = AffineProfile()
    assert p.hess(0.1, 0.2) == (0.0, 0.0, 0.0)
    with pytest.raises(BadParameters):
        AffineProfile(slope=(0.3, -0.2))


def test_spline_profile_derivatives():
    x = np.linspace(-1, 1, 41)
    X, Y = np.meshgrid(x, x, indexing="ij")
    f = lambda a, b: np.sin(a) * np.cos(2 * b)
    sp = SplineProfile(x, x, f(X, Y))
    assert abs(sp.value(0.3, 0.2) - f(0.3, 0.2)) < 1e-7
    gx, gy = sp.grad(0.3, 0.2)
    assert abs(gx - np.cos(0.3) * np.cos(0.4)) < 1e-5
    xx, xy, yy = sp.hess(0.3, 0.2)
    assert abs(xy + 2 * np.cos(0.3) * np.sin(0.4)) < 1e-4


def test_curved_profile_is_curved(curved):
    xx, xy, yy = curved.hess(0.0, 0.0)
    assert max(abs(xx), abs(xy), abs(yy)) > 1e-3
    assert curved.contains(0.5, -0.5)


def test_affine_map():
    t = AffineMapTw((0.1, -0.2), (2.0, 4.0))
    assert np.allclose(t.inverse(*t(0.3, 0.5)), (0.3, 0.5))
    assert np.allclose(t.T, np.diag([0.5, 0.25]))


def test_F_vanishes_at_base(problem):
    assert np.abs(problem.F((0.0, 0.0), np.zeros(problem.disc.n))).max() <= 1e-11


def test_d1F_zero_tilt(problem):
    assert not np.any(problem.d1F((0.0, 0.0)))
    assert not np.any(problem.solve_chi((0.0, 0.0)))


@pytest.mark.parametrize("which", ["d2", "d1"])
def test_taylor_ratio(problem, which):
    rng = np.random.default_rng(5)
    n = problem.disc.n
    ell = problem.tilt
    y1, y2 = problem.disc.xy.T
    c = rng.normal(size=4)
    # smooth directions vanishing on the circle
    g = 1e-2 * problem.Q * (c[0] + c[1] * y1 * y2)
    v = problem.Q * (c[2] * y1 + c[3] * np.cos(2 * y2))
    errs = []
    for tau in (1e-3, 5e-4):
        if which == "d2":
            lin = problem.d2F(ell, g) @ v
            diff = problem.F(ell, g + tau * v) - problem.F(ell, g)
        else:
            d = np.array([0.3, -0.4])
            lin = problem.d1F(d, ell, g)
            diff = problem.F(ell + tau * d, g) - problem.F(ell, g)
        errs.append(np.abs(diff - tau * lin).max())
    assert 3.0 <= errs[0] / errs[1] <= 5.0


def test_chi_linear_in_eps(curved):
    B = Barrier(0.25)
    a = PerturbationProblem(curved, B, (0, 0), 0.004, 0.08, n_grid=33)
    b = PerturbationProblem(curved, B, (0, 0), 0.002, 0.08, n_grid=33)
    ca, cb = np.abs(a.solve_chi()).max(), np.abs(b.solve_chi()).max()
    assert abs(ca / cb - 2.0) < 0.2


def test_a_independent_of_eps_r(curved):
    B = Barrier(0.25)
    a1 = coefficient_a(curved, B, (0, 0), 0.01, 0.1).a
    a2 = coefficient_a(curved, B, (0, 0), 0.005, 0.1).a
    assert abs(a1 - a2) <= 1e-10
    c = coefficient_a(curved, B, (0, 0), 0.01, 0.1)
    assert c.b == pytest.approx(c.a * 0.01 * 0.1)


def test_affine_base_oracle():
    rep = expansion_check(AffineProfile(), 0.25, (0.0, 0.0), 0.005, 0.08, n_grid=33)
    assert rep.a == 0 and rep.R <= 1e-8
    assert rep.ordering_margin > 0
    assert rep.center_gap == pytest.approx(rep.predicted_center_gap, rel=1e-6)


def test_curved_report(curved):
    rep = expansion_check(curved, 0.25, (0.0, 0.0), 0.005, 0.08, n_grid=33)
    assert rep.a < 0.25 and rep.R <= 10 * rep.budget
    assert rep.ordering_margin > 0
    assert abs(rep.a_grid - rep.a) < 0.05 * abs(rep.a) + 1e-3
    text = rep.to_text()
    assert text.splitlines()[0].startswith("R=") and "ordering_margin=" in text


def test_frozen_matches_full(problem):
    f1, t1 = problem.solve_perturbed(frozen=True)
    f2, _ = problem.solve_perturbed(frozen=False)
    assert np.abs(f1 - f2).max() < 1e-8
    assert max(t1.decay_factors(), default=0) <= 0.5


def test_parameter_guards(curved):
    B = Barrier(0.25)
    with pytest.raises(BadParameters):
        PerturbationProblem(curved, B, (0.0, 0.0), 0.2, 0.08, n_grid=33)     # tilt too large
    with pytest.raises(BadParameters):
        PerturbationProblem(curved, B, (-0.95, 0.0), 0.005, 0.08, n_grid=33)  # leaves the box
    with pytest.raises(BadParameters):
        PerturbationProblem(curved, B, (0.0, 0.0), -1.0, 0.08)
    with pytest.raises(BadParameters):
        problem_from_schedule(curved, 0.25, (0, 0), 1e-3, 0.05, 0.3, i=10 ** 6)


def test_Q_vanishes_on_circle(problem):
    y = problem.disc.boundary_points
    assert np.abs(1 - (y ** 2).sum(axis=1)).max() < 1e-12
