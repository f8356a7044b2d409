"""Small-ellipse perturbation of a limit shape by a tilted concave barrier.

Around a centre w the ellipse E = {x : Q_w(x) <= r^2} is mapped to the unit
disk by x = w + r T y with T = diag(1 / m(w)).  In these coordinates

    Phi(y) = (phi(w + r T y) - phi(w)) / r

solves the equation with coefficients a_ij(q) = m_i m_j sigma_ij(M q).
Adding eps * <grad psi(w), x - w> to the boundary data becomes the constant
gradient tilt l = eps T grad psi(w), and the perturbed solution is
Phi + l.y + f with f = 0 on the circle, where F(l, f) = 0 and

    F(l, f) = sum_ij a_ij(grad Phi + l + grad f) d_ij (Phi + f).

chi = -(d2F)^-1 d1F l is the linear response; it is close to b Q with
Q = 1 - |y|^2, and a = b / (eps r) is the correction coefficient.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import BadParameters, DegenerateDenominator
from ..surface import Barrier, DEFAULT_GUARD, build_schedule, hess_sigma, third_sigma
from .grid import Discretization, EllipseRegion, Grid
from .profiles import Profile
from .solver import EulerLagrange, LinearSolver, Tension, newton

DEFAULT_V0 = 0.2
DEFAULT_RHO = 0.9


@dataclass(frozen=True)
class AffineMapTw:
    """t_w(y) = w + T y with T = diag(1/m1, 1/m2)."""

    w: tuple
    m: tuple

    @property
    def T(self):
        return np.diag([1.0 / self.m[0], 1.0 / self.m[1]])

    def __call__(self, y1, y2):
        return (self.w[0] + np.asarray(y1) / self.m[0], self.w[1] + np.asarray(y2) / self.m[1])

    def inverse(self, x1, x2):
        return ((np.asarray(x1) - self.w[0]) * self.m[0], (np.asarray(x2) - self.w[1]) * self.m[1])


@dataclass(frozen=True)
class CorrectionCoefficient:
    a: float
    eps: float
    r: float

    @property
    def b(self):
        return self.a * self.eps * self.r


def coefficient_a(profile: Profile, barrier: Barrier, w, eps=1.0, r=1.0,
                  guard=DEFAULT_GUARD) -> CorrectionCoefficient:
    """a = sum sigma_ijk d_k psi d_ij phi / (-2 sum_k d_kk psi sigma_kk), all at w.

    Chosen so that b Q with b = a eps r cancels the linear response at the
    centre; eps and r are carried only to report b.
    """
    w = (float(w[0]), float(w[1]))
    s, t = (float(v) for v in profile.grad(*w))
    pxx, pxy, pyy = (float(v) for v in profile.hess(*w))
    g1, g2 = (float(v) for v in barrier.grad(*w))
    h1, h2 = (float(v) for v in barrier.hess(*w))
    sss, sst, stt, ttt = (float(v) for v in third_sigma(s, t, guard))
    a11, _, a22 = (float(v) for v in hess_sigma(s, t, guard))
    # sum_ij sigma_ij1 phi_ij and sum_ij sigma_ij2 phi_ij
    c1 = sss * pxx + 2 * sst * pxy + stt * pyy
    c2 = sst * pxx + 2 * stt * pxy + ttt * pyy
    den = -2.0 * (h1 * a11 + h2 * a22)
    if not den > 0 or not math.isfinite(den):
        raise DegenerateDenominator(f"denominator {den} is not positive")
    return CorrectionCoefficient((c1 * g1 + c2 * g2) / den + 0.0, float(eps), float(r))


@dataclass
class ExpansionReport:
    """Expansion error R (x units), its budget and the ordering diagnostics."""

    R: float
    budget: float
    a: float
    b: float
    a_grid: float
    R_grid: float
    ordering_margin: float
    ordering_margin_all: float
    center_gap: float
    predicted_center_gap: float
    residual: float
    eps: float
    r: float
    xi: float
    w: tuple
    n_grid: int

    def as_record(self):
        d = asdict(self)
        d["w"] = list(self.w)
        return d

    def to_text(self):
        """One ``key=value`` per line."""
        return "\n".join(f"{k}={v!r}" if not isinstance(v, float) else f"{k}={v:.12g}"
                         for k, v in self.as_record().items()) + "\n"


class PerturbationProblem:
    """The rescaled problem on the unit disk around w at scale (eps, r)."""

    def __init__(self, profile: Profile, barrier: Barrier, w, eps, r, n_grid=65,
                 v0=DEFAULT_V0, guard=DEFAULT_GUARD, tol=1e-12, linear_solver="gmres"):
        if not (eps > 0 and r > 0):
            raise BadParameters("eps and r must be positive")
        self.profile = profile
        self.barrier = barrier
        self.w = (float(w[0]), float(w[1]))
        self.eps = float(eps)
        self.r = float(r)
        self.tol = tol
        self.linear_solver = linear_solver
        self.m = tuple(float(v) for v in barrier.m(self.w))
        self.tw = AffineMapTw(self.w, self.m)
        half = (self.r / self.m[0], self.r / self.m[1])
        x0, x1, y0, y1 = profile.box
        if not (x0 <= self.w[0] - half[0] and self.w[0] + half[0] <= x1
                and y0 <= self.w[1] - half[1] and self.w[1] + half[1] <= y1):
            raise BadParameters("the ellipse leaves the domain of the base profile")
        gpsi = np.array(barrier.grad(*self.w), dtype=float)
        self.tilt = self.eps * gpsi / np.array(self.m)
        if np.linalg.norm(self.tilt) > v0:
            raise BadParameters(f"tilt norm {np.linalg.norm(self.tilt):.4g} exceeds v0={v0}")
        self.disc = Discretization(Grid.square(-1.0, 1.0, n_grid), EllipseRegion())
        self.n_grid = n_grid
        bp = self.disc.boundary_points
        xb = self._to_x(bp[:, 0], bp[:, 1])
        self.phi_w = float(profile.value(*self.w))
        gb = (profile.value(*xb) - self.phi_w) / self.r
        self.base = EulerLagrange(self.disc, gb, Tension(self.m, guard))
        v0_ = np.zeros(self.disc.n)
        self.v_phi, self.base_trace = newton(self.base, v0_, tol=tol, linear_solver=linear_solver)
        self._J0 = None

    # -- frames -------------------------------------------------------------
    def _to_x(self, y1, y2):
        return self.tw(self.r * np.asarray(y1), self.r * np.asarray(y2))

    @property
    def Q(self):
        y = self.disc.xy
        return 1.0 - (y[:, 0] ** 2 + y[:, 1] ** 2)

    def Phi(self):
        return self.base.to_full(self.v_phi)

    # -- operators ----------------------------------------------------------
    def F(self, tilt, f):
        """Residual F(tilt, f), f on the nodes with zero boundary values."""
        return self.base.residual(self.v_phi + f, tilt=np.asarray(tilt, float))

    def d2F(self, tilt, g):
        return self.base.jacobian(self.v_phi + g, tilt=np.asarray(tilt, float))

    def d1F(self, direction, tilt=(0.0, 0.0), g=None):
        gg = self.v_phi if g is None else self.v_phi + g
        return self.base.tilt_derivative(gg, direction, tilt=np.asarray(tilt, float))

    @property
    def J0(self):
        if self._J0 is None:
            self._J0 = self.d2F((0.0, 0.0), np.zeros(self.disc.n))
        return self._J0

    def solve_chi(self, tilt=None):
        tl = self.tilt if tilt is None else np.asarray(tilt, float)
        rhs = self.d1F(tl)
        if not np.any(rhs):
            return np.zeros(self.disc.n)
        return LinearSolver(self.J0, self.linear_solver).solve(-rhs)

    def solve_perturbed(self, frozen=False, tilt=None, maxiter=60):
        """f with F(tilt, f) = 0; returns (f, NewtonTrace)."""
        tl = self.tilt if tilt is None else np.asarray(tilt, float)
        start = self.v_phi + self.solve_chi(tl)
        v, trace = newton(self.base.with_tilt(tl), start, tol=self.tol, frozen=frozen,
                          J0=self.J0 if frozen else None, linear_solver=self.linear_solver,
                          maxiter=maxiter)
        return v - self.v_phi, trace

    def b_grid(self, chi=None):
        """b from the discrete linear response at the centre node."""
        c = self.disc.node_index(0.0, 0.0)
        if c < 0:
            raise BadParameters("grid has no node at the disk centre (use odd n_grid)")
        rhs = self.d1F(self.tilt)
        d = self.base.derivs(self.v_phi)
        q1, q2 = self.base._q(d)
        a11, _, a22 = self.base.tension.second(q1[c], q2[c])
        return float(rhs[c] / (2.0 * (a11 + a22)))

    def field(self, f):
        return self.disc.field(f, np.zeros(self.disc.nb))

    # -- the expansion ------------------------------------------------------
    def expansion_check(self, rho=DEFAULT_RHO) -> ExpansionReport:
        f, trace = self.solve_perturbed()
        coef = coefficient_a(self.profile, self.barrier, self.w, self.eps, self.r,
                             self.base.tension.guard)
        Q = self.Q
        R = self.r * float(np.max(np.abs(f - coef.b * Q)))
        bg = self.b_grid()
        R_grid = self.r * float(np.max(np.abs(f - bg * Q)))
        # phi + eps psi - phi_iw in x units on the nodes
        x1, x2 = self._to_x(self.disc.xy[:, 0], self.disc.xy[:, 1])
        g1, g2 = self.barrier.grad(*self.w)
        psi_w = float(self.barrier(*self.w))
        lin = g1 * (x1 - self.w[0]) + g2 * (x2 - self.w[1])
        margin = self.eps * (self.barrier(x1, x2) - psi_w - lin) + self.eps * self.r ** 2 / 2 \
            - self.r * f
        inner = (1.0 - Q) <= rho ** 2
        c = self.disc.node_index(0.0, 0.0)
        center_gap = -self.eps * self.r ** 2 / 2 + self.r * float(f[c])
        return ExpansionReport(
            R=R, budget=self.eps ** 2 * self.r ** 2 + self.eps * self.r ** 3,
            a=coef.a, b=coef.b, a_grid=bg / (self.eps * self.r), R_grid=R_grid,
            ordering_margin=float(np.min(margin[inner])),
            ordering_margin_all=float(np.min(margin)),
            center_gap=center_gap,
            predicted_center_gap=-self.eps * self.r ** 2 * (0.5 - coef.a),
            residual=trace.residuals[-1], eps=self.eps, r=self.r, xi=self.barrier.xi,
            w=self.w, n_grid=self.n_grid)


def problem_from_schedule(profile, xi, w, delta, eta, eps0, i=0, **kw) -> PerturbationProblem:
    """PerturbationProblem at (eps_i, r_i) of the schedule built from (delta, eta, eps0)."""
    sched = build_schedule(delta, eta, eps0)
    if not 0 <= i <= sched.i_max:
        raise BadParameters(f"index {i} outside 0..{sched.i_max}")
    return PerturbationProblem(profile, Barrier(xi, profile.box), w, float(sched.eps[i]),
                               float(sched.r[i]), **kw)


def expansion_check(profile, xi, w, eps, r, n_grid=65, rho=DEFAULT_RHO, **kw) -> ExpansionReport:
    return PerturbationProblem(profile, Barrier(xi, profile.box), w, eps, r, n_grid=n_grid,
                               **kw).expansion_check(rho)
