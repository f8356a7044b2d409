"""Lozenge surface tension, the concave barrier psi and the iteration schedule.

Slopes (s, t) are gradients in the oblique e1/e2 frame.  The tile densities
are p1 = -s, p2 = -t, p3 = 1 + s + t and

    sigma(s, t) = -(1/pi) * (L(pi p1) + L(pi p2) + L(pi p3)),

with L the Lobachevsky function L(theta) = -int_0^theta log|2 sin u| du.
The Newton polygon is {s <= 0, t <= 0, s + t >= -1}.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import zeta

from .errors import BadParameters, OutsideNewtonPolygon, TooCloseToBoundary

PI = math.pi
DEFAULT_GUARD = 1e-3

# series L(th) = th - th log(2 th) + sum_n zeta(2n) th^(2n+1) / (n (2n+1) pi^(2n)),
# valid on [0, pi); used on [0, pi/2] where the terms decay like 4^-n
_NTERMS = 30
_n = np.arange(1, _NTERMS + 1)
_COEF = zeta(2 * _n) / (_n * (2 * _n + 1) * PI ** (2 * _n))


def lobachevsky(theta):
    """Lobachevsky function, vectorized; odd and pi-periodic."""
    th = np.asarray(theta, dtype=float)
    r = np.mod(th, PI)
    sign = np.where(r > PI / 2, -1.0, 1.0)
    x = np.where(r > PI / 2, PI - r, r)
    with np.errstate(divide="ignore", invalid="ignore"):
        lead = np.where(x > 0, x - x * np.log(2 * x), 0.0)
    x2 = x * x
    acc = np.zeros_like(x)
    for c in _COEF[::-1]:
        acc = acc * x2 + c
    out = sign * (lead + acc * x2 * x)
    return out if out.ndim else float(out)


def densities(s, t):
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    return -s, -t, 1.0 + s + t


def in_newton_polygon(s, t, tol=0.0):
    p1, p2, p3 = densities(s, t)
    return (p1 >= -tol) & (p2 >= -tol) & (p3 >= -tol)


def sigma(s, t, strict=False):
    """Surface tension; +inf outside the Newton polygon (or raise if strict)."""
    p1, p2, p3 = densities(s, t)
    inside = in_newton_polygon(s, t, 1e-15)
    if strict and not np.all(inside):
        raise OutsideNewtonPolygon(f"slope ({s}, {t}) outside the Newton polygon")
    c1, c2, c3 = (np.clip(p, 0.0, 1.0) for p in (p1, p2, p3))
    val = -(lobachevsky(PI * c1) + lobachevsky(PI * c2) + lobachevsky(PI * c3)) / PI
    out = np.where(inside, val, np.inf)
    return out if out.ndim else float(out)


def boundary_distance(s, t):
    """min(p1, p2, p3/sqrt 2): Euclidean distance to the edges of the polygon."""
    p1, p2, p3 = densities(s, t)
    return np.minimum(np.minimum(p1, p2), p3 / math.sqrt(2.0))


def _guard(s, t, guard):
    d = boundary_distance(s, t)
    if np.any(~(d >= guard)):
        raise TooCloseToBoundary(
            f"slope within {float(np.min(d)):.3g} of the polygon boundary (guard {guard})")


def grad_sigma(s, t, guard=DEFAULT_GUARD):
    """(d sigma/ds, d sigma/dt) = (log(sin pi p3 / sin pi p1), log(sin pi p3 / sin pi p2))."""
    _guard(s, t, guard)
    p1, p2, p3 = densities(s, t)
    l3 = np.log(np.sin(PI * p3))
    return l3 - np.log(np.sin(PI * p1)), l3 - np.log(np.sin(PI * p2))


def hess_sigma(s, t, guard=DEFAULT_GUARD):
    """Hessian entries (sigma_ss, sigma_st, sigma_tt)."""
    _guard(s, t, guard)
    p1, p2, p3 = densities(s, t)
    c1, c2, c3 = (PI / np.tan(PI * p) for p in (p1, p2, p3))
    return c1 + c3, c3, c2 + c3


def hess_matrix(s, t, guard=DEFAULT_GUARD):
    a, b, c = hess_sigma(s, t, guard)
    return np.array([[a, b], [b, c]])


def third_sigma(s, t, guard=DEFAULT_GUARD):
    """Third derivatives (sigma_sss, sigma_sst, sigma_stt, sigma_ttt)."""
    _guard(s, t, guard)
    p1, p2, p3 = densities(s, t)
    k1, k2, k3 = ((PI / np.sin(PI * p)) ** 2 for p in (p1, p2, p3))
    return k1 - k3, -k3, -k3, k2 - k3


def sigma_table(n=41):
    """sigma on a regular grid of the closed polygon: rows (s, t, sigma)."""
    rows = []
    for i in range(n):
        for j in range(n - i):
            s = -i / (n - 1)
            t = -j / (n - 1)
            rows.append((s, t, float(sigma(s, t))))
    return np.array(rows)


# ---------------------------------------------------------------------------
# barrier

class Barrier:
    """psi(x) = c - exp(x1/xi) - exp(x2/xi) on the box U.

    c is fixed so that min_U psi = 1; the minimum sits at the corner where
    both coordinates are largest.
    """

    def __init__(self, xi, box=(-1.0, 1.0, -1.0, 1.0)):
        if not xi > 0:
            raise BadParameters("xi must be positive")
        self.xi = float(xi)
        self.box = tuple(float(b) for b in box)
        x1max, x2max = self.box[1], self.box[3]
        self.c = 1.0 + math.exp(x1max / self.xi) + math.exp(x2max / self.xi)

    def __call__(self, x1, x2):
        return self.c - np.exp(np.asarray(x1) / self.xi) - np.exp(np.asarray(x2) / self.xi)

    psi = __call__

    def grad(self, x1, x2):
        return -np.exp(np.asarray(x1) / self.xi) / self.xi, -np.exp(np.asarray(x2) / self.xi) / self.xi

    def hess(self, x1, x2):
        """Diagonal Hessian entries (psi_11, psi_22); psi_12 = 0."""
        xi2 = self.xi ** 2
        return -np.exp(np.asarray(x1) / self.xi) / xi2, -np.exp(np.asarray(x2) / self.xi) / xi2

    def m(self, w):
        """m_k(w) = sqrt(-psi_kk(w)) = exp(w_k / (2 xi)) / xi."""
        return np.array([math.exp(w[0] / (2 * self.xi)), math.exp(w[1] / (2 * self.xi))]) / self.xi

    def q_form(self, w, x1, x2):
        """Q_w(x) = -<x - w, Hess psi(w) (x - w)>."""
        m1, m2 = self.m(w)
        return (m1 * (np.asarray(x1) - w[0])) ** 2 + (m2 * (np.asarray(x2) - w[1])) ** 2

    def ellipse(self, w, r, rho=1.0):
        return Ellipse(np.asarray(w, dtype=float), float(rho) * float(r), self.m(w))

    def ellipse_contains(self, w, r, rho, x1, x2):
        return self.q_form(w, x1, x2) <= (rho * r) ** 2

    def aspect_ratio(self, w):
        m1, m2 = self.m(w)
        return m2 / m1


@dataclass(frozen=True)
class Ellipse:
    """{x : sum_k m_k^2 (x_k - w_k)^2 <= radius^2}, axes radius / m_k."""

    center: np.ndarray
    radius: float
    m: np.ndarray

    @property
    def semi_axes(self):
        return self.radius / self.m

    def contains(self, x1, x2):
        q = (self.m[0] * (np.asarray(x1) - self.center[0])) ** 2 + \
            (self.m[1] * (np.asarray(x2) - self.center[1])) ** 2
        return q <= self.radius ** 2

    def to_disk(self, x1, x2):
        """Unit-disk coordinates y with x = center + radius * y / m."""
        return ((np.asarray(x1) - self.center[0]) * self.m[0] / self.radius,
                (np.asarray(x2) - self.center[1]) * self.m[1] / self.radius)

    def from_disk(self, y1, y2):
        return (self.center[0] + self.radius * np.asarray(y1) / self.m[0],
                self.center[1] + self.radius * np.asarray(y2) / self.m[1])


# ---------------------------------------------------------------------------
# schedule

@dataclass(frozen=True)
class Schedule:
    delta: float
    eta: float
    eps0: float
    eps: np.ndarray      # eps_i, i = 0..i_max
    r: np.ndarray        # r_i
    t: np.ndarray        # t_i
    i_max: int

    @property
    def eps_terminal(self):
        return self.delta ** (1 - 4 * self.eta)

    @property
    def r_terminal(self):
        return self.delta ** (1.5 * self.eta)

    @property
    def t_max(self):
        return float(self.t[-1])

    @property
    def t_max_order(self):
        """delta^(-2-7 eta), the order of t_{i_max}."""
        return self.delta ** (-2 - 7 * self.eta)


def build_schedule(delta, eta, eps0) -> Schedule:
    """eps_i = eps0 - delta i, r_i = sqrt(delta^(1-eta)/eps_i), increments of t."""
    for name, val in (("delta", delta), ("eta", eta), ("eps0", eps0)):
        if not 0 < val < 1:
            raise BadParameters(f"{name} must lie in (0, 1), got {val}")
    floor_eps = delta ** (1 - 4 * eta)
    if not eps0 > floor_eps:
        raise BadParameters(f"eps0={eps0} must exceed delta^(1-4eta)={floor_eps:.6g}")
    i_max = int(math.floor((eps0 - floor_eps) / delta + 1e-12))
    i = np.arange(i_max + 1)
    eps = eps0 - delta * i
    r = np.sqrt(delta ** (1 - eta) / eps)
    t = np.empty(i_max + 1)
    t[0] = delta ** (-2 - eta)
    t[1:] = t[0] + np.cumsum(delta ** (-1 - 6 * eta) / eps[:-1])
    return Schedule(float(delta), float(eta), float(eps0), eps, r, t, i_max)


@dataclass(frozen=True)
class BoundaryConstants:
    psi_w: float
    r: float

    @property
    def C(self):
        return self.psi_w - self.r ** 2 / 2

    def c_prime(self, a):
        return self.psi_w - (0.5 - a) * self.r ** 2


def boundary_constants(barrier: Barrier, w, r) -> BoundaryConstants:
    return BoundaryConstants(float(barrier(w[0], w[1])), float(r))
