"""Base limit-shape profiles phi used by the perturbation experiments.

Two families: affine profiles, and a smooth non-affine solution obtained by
solving the Euler-Lagrange equation once on a square with perturbed-affine
boundary data and interpolating the nodal field with a quintic spline.
"""
from __future__ import annotations

import functools

import numpy as np
from scipy.interpolate import RectBivariateSpline

from ..errors import BadParameters
from ..surface import boundary_distance
from .grid import BoxRegion, Discretization, Grid
from .solver import Tension, solve_euler_lagrange

DEFAULT_SLOPE = (-1.0 / 3.0, -1.0 / 3.0)


class Profile:
    box = (-1.0, 1.0, -1.0, 1.0)

    def value(self, x, y):
        raise NotImplementedError

    def grad(self, x, y):
        raise NotImplementedError

    def hess(self, x, y):
        """(phi_xx, phi_xy, phi_yy)."""
        raise NotImplementedError

    def contains(self, x, y):
        x0, x1, y0, y1 = self.box
        x, y = np.asarray(x), np.asarray(y)
        return (x >= x0) & (x <= x1) & (y >= y0) & (y <= y1)


class AffineProfile(Profile):
    def __init__(self, slope=DEFAULT_SLOPE, offset=0.0, box=(-1.0, 1.0, -1.0, 1.0)):
        self.slope = (float(slope[0]), float(slope[1]))
        self.offset = float(offset)
        self.box = tuple(float(b) for b in box)
        if not boundary_distance(*self.slope) > 0:
            raise BadParameters(f"slope {self.slope} is not inside the Newton polygon")

    def value(self, x, y):
        return self.offset + self.slope[0] * np.asarray(x, float) + self.slope[1] * np.asarray(y, float)

    def grad(self, x, y):
        z = np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape)
        return z + self.slope[0], z + self.slope[1]

    def hess(self, x, y):
        z = np.zeros(np.broadcast(np.asarray(x), np.asarray(y)).shape)
        return z, z.copy(), z.copy()


class SplineProfile(Profile):
    """Quintic spline through nodal values on a full rectangular grid."""

    def __init__(self, x, y, values, box=None):
        self.x = np.asarray(x, float)
        self.y = np.asarray(y, float)
        self.values = np.asarray(values, float)
        self.box = box or (self.x[0], self.x[-1], self.y[0], self.y[-1])
        self._s = RectBivariateSpline(self.x, self.y, self.values, kx=5, ky=5, s=0)

    def _ev(self, x, y, dx, dy):
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        out = self._s.ev(x.ravel(), y.ravel(), dx=dx, dy=dy).reshape(x.shape)
        return out if out.ndim else float(out)

    def value(self, x, y):
        return self._ev(x, y, 0, 0)

    def grad(self, x, y):
        return self._ev(x, y, 1, 0), self._ev(x, y, 0, 1)

    def hess(self, x, y):
        return self._ev(x, y, 2, 0), self._ev(x, y, 1, 1), self._ev(x, y, 0, 2)


def perturbed_affine_data(slope=DEFAULT_SLOPE, amplitude=0.05, seed=0, modes=3):
    """Boundary data s x + t y + amplitude * (random combination of low Fourier modes)."""
    rng = np.random.default_rng(seed)
    c = rng.normal(size=(modes, 4)) / np.arange(1, modes + 1)[:, None] ** 2
    ph = rng.uniform(0, 2 * np.pi, size=(modes, 2))

    def g(x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        out = slope[0] * x + slope[1] * y
        for k in range(modes):
            kk = k + 1
            out = out + amplitude * (c[k, 0] * np.sin(kk * x + ph[k, 0]) * np.cos(kk * y + ph[k, 1])
                                     + c[k, 1] * np.cos(kk * x - ph[k, 1]) * np.sin(kk * y)
                                     + c[k, 2] * x * y / kk + c[k, 3] * (x * x - y * y) / (2 * kk))
        return out
    return g


@functools.lru_cache(maxsize=8)
def curved_profile(n=257, amplitude=0.05, seed=0, slope=DEFAULT_SLOPE, tol=1e-11) -> SplineProfile:
    """Solve the equation on [-1, 1]^2 once and return the interpolated solution."""
    grid = Grid.square(-1.0, 1.0, n)
    disc = Discretization(grid, BoxRegion(-1.0, 1.0, -1.0, 1.0))
    g = perturbed_affine_data(slope, amplitude, seed)
    field, _, _ = solve_euler_lagrange(disc, g, Tension(), tol=tol)
    X, Y = grid.mesh()
    vals = np.where(field.mask, field.values, g(X, Y))
    return SplineProfile(grid.x, grid.y, vals)
