"""Damped Newton solver for the Euler-Lagrange equation of the surface tension.

The discrete residual is

    F(u) = a11(q) Dxx u + 2 a12(q) Dxy u + a22(q) Dyy u,   q = (Dx u, Dy u) + tilt,

with a_ij(q) = m_i m_j sigma_ij(M q), M = diag(m).  M = identity gives the
plain equation; general M is the equation rewritten on the unit disk after
the diagonal rescaling of an ellipse.

Unknowns are stored as deviations v = u - A from the least-squares affine
fit A of the boundary data.  Difference operators annihilate A exactly, so
only Dx, Dy pick up its constant gradient; keeping the unknowns small keeps
their rounding (and hence the residual floor) proportional to the deviation
from affine rather than to the size of u.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..errors import (LinearSolveFailure, NoConvergence, SlopeEscapedNewtonPolygon,
                      TooCloseToBoundary)
from ..surface import DEFAULT_GUARD, hess_sigma, third_sigma
from .grid import Discretization, ScalarField2D

log = logging.getLogger(__name__)


class Tension:
    """Coefficients a_ij(q) = m_i m_j sigma_ij(M q) and their q-derivatives."""

    def __init__(self, scale=(1.0, 1.0), guard=DEFAULT_GUARD):
        self.m = (float(scale[0]), float(scale[1]))
        self.guard = guard

    def slopes(self, q1, q2):
        return self.m[0] * q1, self.m[1] * q2

    def second(self, q1, q2):
        m1, m2 = self.m
        s, t = self.slopes(q1, q2)
        a, b, c = hess_sigma(s, t, self.guard)
        return m1 * m1 * a, m1 * m2 * b, m2 * m2 * c

    def third(self, q1, q2):
        """(d a11/dq1, d a11/dq2 = d a12/dq1, d a12/dq2 = d a22/dq1, d a22/dq2)."""
        m1, m2 = self.m
        s, t = self.slopes(q1, q2)
        sss, sst, stt, ttt = third_sigma(s, t, self.guard)
        return m1 ** 3 * sss, m1 * m1 * m2 * sst, m1 * m2 * m2 * stt, m2 ** 3 * ttt


@dataclass
class NewtonTrace:
    residuals: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    iterates: list = field(default_factory=list)
    converged: bool = False
    linear_fallbacks: int = 0
    problem: object = None
    v: np.ndarray | None = None

    def decay_factors(self):
        r = np.asarray(self.residuals)
        return r[1:] / r[:-1] if len(r) > 1 else np.zeros(0)


class EulerLagrange:
    """Discrete residual, Jacobian and tilt derivative on one discretization."""

    def __init__(self, disc: Discretization, gb, tension: Tension | None = None, tilt=(0.0, 0.0)):
        self.disc = disc
        self.gb = np.asarray(gb, dtype=float)
        self.tension = tension or Tension()
        self.tilt = np.asarray(tilt, dtype=float)
        self.affine = _affine_fit(disc.boundary_points, self.gb)
        self.gv = self.gb - self._affine_at(disc.boundary_points)

    def _affine_at(self, pts):
        c = self.affine
        return c[0] + c[1] * pts[:, 0] + c[2] * pts[:, 1] if len(pts) else np.zeros(0)

    def to_full(self, v):
        """Nodal values u = A + v."""
        return self._affine_at(self.disc.xy) + v

    def from_full(self, u):
        return np.asarray(u, dtype=float) - self._affine_at(self.disc.xy)

    def with_tilt(self, tilt):
        out = EulerLagrange.__new__(EulerLagrange)
        out.__dict__.update(self.__dict__)
        out.tilt = np.asarray(tilt, dtype=float)
        return out

    def derivs(self, v):
        """Difference operators of u = A + v; 'x' and 'y' exclude the affine gradient."""
        return {k: self.disc.apply(k, v, self.gv) for k in self.disc.OPS}

    def _q(self, d, tilt=None):
        tl = self.tilt if tilt is None else tilt
        return d["x"] + (self.affine[1] + tl[0]), d["y"] + (self.affine[2] + tl[1])

    def gradient(self, v):
        """Discrete gradient of u at the nodes (pinned rows report the affine part only)."""
        d = self.derivs(v)
        return d["x"] + self.affine[1], d["y"] + self.affine[2]

    def residual(self, v, tilt=None):
        d = self.derivs(v)
        q1, q2 = self._q(d, tilt)
        try:
            a11, a12, a22 = self.tension.second(q1, q2)
        except TooCloseToBoundary as exc:
            raise SlopeEscapedNewtonPolygon(str(exc)) from None
        return a11 * d["xx"] + 2 * a12 * d["xy"] + a22 * d["yy"] + \
            self.disc.apply("pin", v, self.gv)

    def jacobian(self, u, tilt=None):
        A = self.disc.A
        d = self.derivs(u)
        q1, q2 = self._q(d, tilt)
        try:
            a11, a12, a22 = self.tension.second(q1, q2)
            t111, t112, t122, t222 = self.tension.third(q1, q2)
        except TooCloseToBoundary as exc:
            raise SlopeEscapedNewtonPolygon(str(exc)) from None
        c1 = t111 * d["xx"] + 2 * t112 * d["xy"] + t122 * d["yy"]
        c2 = t112 * d["xx"] + 2 * t122 * d["xy"] + t222 * d["yy"]
        D = sp.diags
        J = D(a11) @ A["xx"] + D(2 * a12) @ A["xy"] + D(a22) @ A["yy"] + \
            D(c1) @ A["x"] + D(c2) @ A["y"] + A["pin"]
        return J.tocsr()

    def tilt_derivative(self, u, direction, tilt=None):
        """d/d(tilt) of the residual applied to a tilt vector (linear in it)."""
        d = self.derivs(u)
        q1, q2 = self._q(d, tilt)
        t111, t112, t122, t222 = self.tension.third(q1, q2)
        l1, l2 = direction
        c1 = t111 * d["xx"] + 2 * t112 * d["xy"] + t122 * d["yy"]
        c2 = t112 * d["xx"] + 2 * t122 * d["xy"] + t222 * d["yy"]
        return l1 * c1 + l2 * c2

    def field(self, v):
        return self.disc.field(self.to_full(v), self.gb)


def _affine_fit(pts, g):
    if len(pts) < 3:
        return np.zeros(3)
    M = np.column_stack([np.ones(len(pts)), pts[:, 0], pts[:, 1]])
    c, *_ = np.linalg.lstsq(M, g, rcond=None)
    return c


class LinearSolver:
    """GMRES with an incomplete-LU preconditioner, falling back to SuperLU.

    A relative residual of 1e-12 sits at the round-off floor of these systems
    (a direct LU solve typically lands at 1e-12 to 1e-11), so GMRES runs a
    bounded number of restarts and accepts any result within ``accept`` of
    the target; only worse results trigger the direct fallback.
    """

    def __init__(self, J, method="gmres", rtol=1e-12, accept=1e-10):
        self.J = J.tocsc()
        self.method = method
        self.rtol = rtol
        self.accept = accept
        self.fallbacks = 0
        self._lu = None
        self._M = None
        if method == "direct":
            self._lu = spla.splu(self.J)
        elif method == "gmres":
            try:
                ilu = spla.spilu(self.J, drop_tol=1e-6, fill_factor=20)
                self._M = spla.LinearOperator(self.J.shape, ilu.solve)
            except RuntimeError:
                self._M = None
        else:
            raise ValueError(f"unknown linear solver {method!r}")

    def solve(self, b):
        if self._lu is not None:
            x = self._lu.solve(b)
        else:
            bnorm = np.linalg.norm(b)
            if bnorm == 0:
                return np.zeros_like(b)
            x, info = spla.gmres(self.J, b, M=self._M, rtol=self.rtol, atol=0.0,
                                 restart=40, maxiter=5)
            rel = np.linalg.norm(self.J @ x - b) / bnorm
            if not rel <= self.accept:
                log.warning("GMRES stalled at relative residual %.2e; using a direct solve", rel)
                self.fallbacks += 1
                self._lu = self._lu or spla.splu(self.J)
                x = self._lu.solve(b)
        if not np.all(np.isfinite(x)):
            raise LinearSolveFailure("linear solve produced non-finite values")
        return x


def newton(problem: EulerLagrange, u0, tol=1e-9, maxiter=40, frozen=False, J0=None,
           linear_solver="gmres", keep_iterates=False, max_halvings=30):
    """Damped (or frozen-differential) Newton iteration on the residual.

    Returns (u, trace).  A trial step whose gradients leave the guarded
    Newton polygon is halved; SlopeEscapedNewtonPolygon is raised only when
    the damping limit is reached.
    """
    u = np.array(u0, dtype=float)
    trace = NewtonTrace()
    F = problem.residual(u)
    nrm = float(np.max(np.abs(F))) if F.size else 0.0
    trace.residuals.append(nrm)
    if keep_iterates:
        trace.iterates.append(u.copy())
    solver = None
    if frozen:
        solver = LinearSolver(J0 if J0 is not None else problem.jacobian(u), linear_solver)
    for it in range(maxiter):
        if nrm <= tol:
            trace.converged = True
            break
        if not frozen:
            if solver is not None:
                trace.linear_fallbacks += solver.fallbacks
            solver = LinearSolver(problem.jacobian(u), linear_solver)
        du = solver.solve(-F)
        alpha = 1.0
        escaped = False
        for _ in range(max_halvings):
            trial = u + alpha * du
            try:
                Ft = problem.residual(trial)
            except SlopeEscapedNewtonPolygon:
                escaped = True
                alpha *= 0.5
                continue
            nt = float(np.max(np.abs(Ft)))
            if nt <= (1 - 1e-4 * alpha) * nrm or nt <= tol:
                break
            alpha *= 0.5
        else:
            trace.linear_fallbacks += solver.fallbacks
            solver = None
            if escaped:
                raise SlopeEscapedNewtonPolygon("damping limit reached with slopes outside the guard")
            if nrm <= 1e3 * tol:   # round-off floor just above tol
                trace.converged = True
                break
            raise NoConvergence(f"line search failed at residual {nrm:.3e}")
        u, F, nrm = trial, Ft, nt
        trace.residuals.append(nrm)
        trace.steps.append(alpha)
        if keep_iterates:
            trace.iterates.append(u.copy())
    else:
        if nrm > tol:
            raise NoConvergence(f"no convergence in {maxiter} iterations (residual {nrm:.3e})")
    trace.converged = trace.converged or nrm <= tol
    if solver is not None:
        trace.linear_fallbacks += solver.fallbacks
    return u, trace


def initial_guess(disc: Discretization, gb):
    """Harmonic extension of boundary data (a Laplace solve, pinned rows kept)."""
    L = (disc.A["xx"] + disc.A["yy"] + disc.A["pin"]).tocsc()
    rhs = -(disc.B["xx"] @ gb + disc.B["yy"] @ gb + disc.B["pin"] @ gb)
    return spla.spsolve(L, rhs)


def solve_euler_lagrange(disc: Discretization, bc, tension: Tension | None = None, u0=None,
                         tol=1e-9, tilt=(0.0, 0.0), frozen=False, linear_solver="gmres",
                         maxiter=40):
    """Solve F(u) = 0 with Dirichlet data ``bc`` (callable or array at crossings).

    ``u0`` holds full nodal values.  Returns (ScalarField2D, nodal values u,
    NewtonTrace); the trace additionally carries the problem and deviation
    vector as ``trace.problem`` and ``trace.v``.
    """
    gb = disc.boundary_values(bc) if callable(bc) else np.asarray(bc, dtype=float)
    prob = EulerLagrange(disc, gb, tension, tilt)
    v0 = initial_guess(disc, prob.gv) if u0 is None else prob.from_full(u0)
    v, trace = newton(prob, v0, tol=tol, frozen=frozen, linear_solver=linear_solver,
                      maxiter=maxiter)
    trace.problem, trace.v = prob, v
    return prob.field(v), prob.to_full(v), trace


def maximum_principle_check(disc: Discretization, bc_a, bc_b, tension=None, tol=1e-10,
                            grid_tol=1e-9):
    """Solve both problems; True iff A >= B - grid_tol wherever bc_a >= bc_b."""
    ga = disc.boundary_values(bc_a) if callable(bc_a) else np.asarray(bc_a, dtype=float)
    gbv = disc.boundary_values(bc_b) if callable(bc_b) else np.asarray(bc_b, dtype=float)
    if np.any(ga < gbv - 1e-15):
        raise ValueError("boundary data A must dominate boundary data B")
    _, ua, _ = solve_euler_lagrange(disc, ga, tension, tol=tol)
    _, ub, _ = solve_euler_lagrange(disc, gbv, tension, tol=tol)
    return bool(np.all(ua >= ub - grid_tol)), float(np.min(ua - ub))


@dataclass
class SelfConvergence:
    ns: tuple
    errors: tuple          # max |u_n - u_2n| on the common coarse nodes, per consecutive pair
    l2_errors: tuple

    @property
    def ratio(self):
        return self.errors[0] / self.errors[1]

    @property
    def l2_ratio(self):
        return self.l2_errors[0] / self.l2_errors[1]


def self_convergence(region, bc, n=65, lo=-1.0, hi=1.0, tension=None, tol=1e-11,
                     theta_pin=None):
    """Three nested grids n, 2n-1, 4n-3 on [lo, hi]^2; differences on the coarse nodes.

    The ratio of successive differences is about 4 for a second-order scheme.
    """
    from .grid import THETA_PIN, Grid
    ns = (n, 2 * n - 1, 4 * n - 3)
    vals = []
    for k, m in enumerate(ns):
        disc = Discretization(Grid.square(lo, hi, m), region,
                              THETA_PIN if theta_pin is None else theta_pin)
        f, _, _ = solve_euler_lagrange(disc, bc, tension, tol=tol)
        vals.append(f.values[::2 ** k, ::2 ** k])
    common = np.all([np.isfinite(v) for v in vals], axis=0)
    d1 = np.abs(vals[0] - vals[1])[common]
    d2 = np.abs(vals[1] - vals[2])[common]
    return SelfConvergence(ns, (float(d1.max()), float(d2.max())),
                           (float(np.sqrt(np.mean(d1 ** 2))), float(np.sqrt(np.mean(d2 ** 2)))))
