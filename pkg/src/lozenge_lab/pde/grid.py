"""Cartesian grids, level-set regions and ghost-point difference operators.

Unknowns live on grid nodes strictly inside the region.  A stencil arm that
leaves the region is closed by quadratic extrapolation through the node, the
node on the opposite side (or the opposite boundary crossing) and the exact
boundary crossing on the arm, so Dirichlet data enter at the true boundary
rather than at the nearest node.  Every operator D is affine in the
unknowns: D u = A u + B g where g are the Dirichlet values at the recorded
boundary crossings.

A node whose nearest crossing sits closer than ``theta_pin`` grid steps is
pinned instead: its equation is replaced by quadratic interpolation through
the crossing and the two nodes behind it.  This keeps every stencil weight
O(1/h^2); without it extrapolation weights grow like 1/(theta h^2) and
round-off in O(1) nodal values dominates the residual.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq

_INSIDE_TOL = 1e-12
_THETA_MIN = 1e-8
THETA_PIN = 0.25

# arms of the nine-point stencil in index units
ARMS = ((1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, -1), (1, -1), (-1, 1))


@dataclass(frozen=True)
class Grid:
    x0: float
    y0: float
    hx: float
    hy: float
    nx: int
    ny: int

    @staticmethod
    def square(lo, hi, n):
        h = (hi - lo) / (n - 1)
        return Grid(lo, lo, h, h, n, n)

    @staticmethod
    def box(x0, x1, y0, y1, nx, ny):
        return Grid(x0, y0, (x1 - x0) / (nx - 1), (y1 - y0) / (ny - 1), nx, ny)

    @property
    def x(self):
        return self.x0 + self.hx * np.arange(self.nx)

    @property
    def y(self):
        return self.y0 + self.hy * np.arange(self.ny)

    def mesh(self):
        return np.meshgrid(self.x, self.y, indexing="ij")


class Region:
    """Region {level < 0}; subclasses may override crossing() with exact roots."""

    def level(self, x, y):
        raise NotImplementedError

    def crossing(self, px, py, qx, qy):
        """Fraction theta in (0, 1] of segment P->Q where it leaves the region."""
        f = lambda th: float(self.level(px + th * (qx - px), py + th * (qy - py)))
        if f(1.0) <= 0.0:
            return 1.0
        return brentq(f, 0.0, 1.0, xtol=1e-15, rtol=1e-15)


class LevelSetRegion(Region):
    def __init__(self, func):
        self.func = func

    def level(self, x, y):
        return self.func(x, y)


class EllipseRegion(Region):
    def __init__(self, center=(0.0, 0.0), semi_axes=(1.0, 1.0)):
        self.c = (float(center[0]), float(center[1]))
        self.ab = (float(semi_axes[0]), float(semi_axes[1]))

    def level(self, x, y):
        return ((np.asarray(x) - self.c[0]) / self.ab[0]) ** 2 + \
            ((np.asarray(y) - self.c[1]) / self.ab[1]) ** 2 - 1.0

    def crossing(self, px, py, qx, qy):
        ux, uy = (px - self.c[0]) / self.ab[0], (py - self.c[1]) / self.ab[1]
        dx, dy = (qx - px) / self.ab[0], (qy - py) / self.ab[1]
        A = dx * dx + dy * dy
        B = 2 * (ux * dx + uy * dy)
        C = ux * ux + uy * uy - 1.0
        disc = max(B * B - 4 * A * C, 0.0)
        # numerically stable positive root
        th = (2 * -C) / (B + math.sqrt(disc)) if B >= 0 else (-B + math.sqrt(disc)) / (2 * A)
        return min(max(th, 0.0), 1.0)


class BoxRegion(Region):
    def __init__(self, x0, x1, y0, y1):
        self.lim = (float(x0), float(x1), float(y0), float(y1))

    def level(self, x, y):
        x0, x1, y0, y1 = self.lim
        cx, cy = (x0 + x1) / 2, (y0 + y1) / 2
        return np.maximum(np.abs(np.asarray(x) - cx) / ((x1 - x0) / 2),
                          np.abs(np.asarray(y) - cy) / ((y1 - y0) / 2)) - 1.0

    def crossing(self, px, py, qx, qy):
        x0, x1, y0, y1 = self.lim
        th = 1.0
        for p, q, lo, hi in ((px, qx, x0, x1), (py, qy, y0, y1)):
            if q > hi:
                th = min(th, (hi - p) / (q - p))
            elif q < lo:
                th = min(th, (lo - p) / (q - p))
        return th


class Discretization:
    """Interior nodes of a region on a grid plus the affine difference operators."""

    OPS = ("x", "y", "xx", "yy", "xy")

    def __init__(self, grid: Grid, region: Region, theta_pin=THETA_PIN):
        self.grid = grid
        self.theta_pin = float(theta_pin)
        self.region = region
        X, Y = grid.mesh()
        scale = max(1.0, float(np.nanmax(np.abs(region.level(X, Y)))))
        self.mask = np.asarray(region.level(X, Y)) < -_INSIDE_TOL * scale
        self.ids = np.full(self.mask.shape, -1, dtype=np.int64)
        self.nodes = np.argwhere(self.mask)          # (n, 2) index pairs, row-major
        self.ids[tuple(self.nodes.T)] = np.arange(len(self.nodes))
        self.xy = np.column_stack([grid.x[self.nodes[:, 0]], grid.y[self.nodes[:, 1]]])
        self.n = len(self.nodes)
        self._bpts = []
        self._bindex = {}
        self._nearest = {}    # row -> (theta, arm, boundary id) of its closest crossing
        arms = {o: self._arm(o) for o in ARMS}
        self._pin_terms = self._pins()
        self.boundary_points = np.array(self._bpts, dtype=float).reshape(-1, 2)
        self.nb = len(self.boundary_points)
        self.A, self.B = self._operators(arms)

    # -- neighbour expressions --------------------------------------------
    def _boundary_id(self, x, y):
        key = (round(x, 13), round(y, 13))
        if key not in self._bindex:
            self._bindex[key] = len(self._bpts)
            self._bpts.append((x, y))
        return self._bindex[key]

    def _cut(self, px, py, qx, qy, o):
        """Crossing fraction on P->Q and its boundary id.

        theta is recomputed from the rounded crossing coordinates so that
        the extrapolation weights match the point where the data are sampled.
        """
        th = max(self.region.crossing(px, py, qx, qy), _THETA_MIN)
        bx, by = px + th * (qx - px), py + th * (qy - py)
        if o[0] != 0 and o[1] != 0:
            th = 0.5 * ((bx - px) / (qx - px) + (by - py) / (qy - py))
        elif o[0] != 0:
            th = (bx - px) / (qx - px)
        else:
            th = (by - py) / (qy - py)
        return max(th, _THETA_MIN), self._boundary_id(bx, by)

    def _arm(self, o):
        """Terms of (u at node + o) - u at node, as (rows, src, coef, is_boundary).

        Interior neighbour: one term (1, u_N).  Cut arm: the quadratic
        extrapolant minus u_P, i.e. La (v_a - u_P) + Lb (g_B - u_P), the
        weight of u_P cancelling because the Lagrange weights sum to one.
        """
        g = self.grid
        nx, ny = g.nx, g.ny
        I, J = self.nodes[:, 0], self.nodes[:, 1]
        In, Jn = I + o[0], J + o[1]
        valid = (In >= 0) & (In < nx) & (Jn >= 0) & (Jn < ny)
        nid = np.full(self.n, -1, dtype=np.int64)
        nid[valid] = self.ids[In[valid], Jn[valid]]
        reg = nid >= 0
        rows = [np.flatnonzero(reg)]
        src = [nid[reg]]
        coef = [np.ones(int(reg.sum()))]
        isb = [np.zeros(int(reg.sum()), dtype=bool)]
        er, es, ec, eb = [], [], [], []
        for p in np.flatnonzero(~reg):
            i, j = int(I[p]), int(J[p])
            px, py = g.x0 + i * g.hx, g.y0 + j * g.hy
            qx, qy = px + o[0] * g.hx, py + o[1] * g.hy
            th, bid = self._cut(px, py, qx, qy, o)
            if p not in self._nearest or th < self._nearest[p][0]:
                self._nearest[p] = (th, o, bid)
            # node on the opposite side, or the crossing there
            im, jm = i - o[0], j - o[1]
            inside_m = 0 <= im < nx and 0 <= jm < ny and self.ids[im, jm] >= 0
            if inside_m:
                sa = -1.0
                a_src, a_b = int(self.ids[im, jm]), False
            else:
                mx, my = px - o[0] * g.hx, py - o[1] * g.hy
                tha, a_src = self._cut(px, py, mx, my, (-o[0], -o[1]))
                sa = -tha
                a_b = True
            # Lagrange weights at s = 1 for nodes (sa, 0, th)
            La = (1.0 - th) / (sa * (sa - th))
            Lb = (1.0 - sa) / ((th - sa) * th)
            er += [p, p]
            es += [bid, a_src]
            ec += [Lb, La]
            eb += [True, a_b]
        rows.append(np.asarray(er, dtype=np.int64))
        src.append(np.asarray(es, dtype=np.int64))
        coef.append(np.asarray(ec, dtype=float))
        isb.append(np.asarray(eb, dtype=bool))
        return (np.concatenate(rows), np.concatenate(src), np.concatenate(coef),
                np.concatenate(isb))

    def _pins(self):
        """Interpolation rows u_P = wB g_B + w1 u(P-o) + w2 u(P-2o) for close cuts."""
        g = self.grid
        r, z, c = [], [], []
        pinned = np.zeros(self.n, dtype=bool)
        for p, (th, o, bid) in sorted(self._nearest.items()):
            if th >= self.theta_pin:
                continue
            i, j = int(self.nodes[p, 0]), int(self.nodes[p, 1])
            ids = []
            for k in (1, 2):
                a, b = i - k * o[0], j - k * o[1]
                ids.append(int(self.ids[a, b]) if 0 <= a < g.nx and 0 <= b < g.ny else -1)
            if ids[0] < 0:
                continue
            if ids[1] >= 0:
                w = (2.0 / ((1 + th) * (2 + th)), 2 * th / (1 + th), -th / (2 + th))
                src = (bid, ids[0], ids[1])
            else:
                w = (1.0 / (1 + th), th / (1 + th))
                src = (bid, ids[0])
            pinned[p] = True
            for k, (wk, sk) in enumerate(zip(w, src)):
                r.append(p)
                c.append(wk)
                z.append(-1 - sk if k == 0 else sk)   # boundary ids stored as -1 - id
        self.pinned = pinned
        return np.asarray(r, dtype=np.int64), np.asarray(z, dtype=np.int64), np.asarray(c, float)

    _WEIGHTS = {
        "x": {(1, 0): (1, "x"), (-1, 0): (-1, "x")},
        "y": {(0, 1): (1, "y"), (0, -1): (-1, "y")},
        "xx": {(1, 0): (1, "xx"), (-1, 0): (1, "xx")},
        "yy": {(0, 1): (1, "yy"), (0, -1): (1, "yy")},
        "xy": {(1, 1): (1, "xy"), (-1, -1): (1, "xy"), (1, -1): (-1, "xy"), (-1, 1): (-1, "xy")},
    }

    def _operators(self, arms):
        n, nb = self.n, len(self._bpts)
        hx, hy = self.grid.hx, self.grid.hy
        scale = {"x": 1 / (2 * hx), "y": 1 / (2 * hy), "xx": 1 / hx ** 2, "yy": 1 / hy ** 2,
                 "xy": 1 / (4 * hx * hy)}
        self._terms = {}
        A, B = {}, {}
        for op, arms_w in self._WEIGHTS.items():
            r = np.concatenate([arms[o][0] for o in arms_w])
            s = np.concatenate([arms[o][1] for o in arms_w])
            c = np.concatenate([arms[o][2] * w * scale[op] for o, (w, _) in arms_w.items()])
            b = np.concatenate([arms[o][3] for o in arms_w])
            keep = ~self.pinned[r]
            r, s, c, b = r[keep], s[keep], c[keep], b[keep]
            # combined source index into [u, g]
            z = np.where(b, s + n, s)
            self._terms[op] = (r, z, c)
            diag = np.bincount(r, weights=c, minlength=n)
            A[op] = (sp.csr_matrix((c[~b], (r[~b], s[~b])), shape=(n, n))
                     - sp.diags(diag)).tocsr()
            B[op] = sp.csr_matrix((c[b], (r[b], s[b])), shape=(n, nb))
        # pinned rows: -(sum_t w_t (z_t - u_P)) / h^2, i.e. (u_P - interpolant) / h^2
        r, z, w = self._pin_terms
        b = z < 0
        s = np.where(b, -1 - z, z)
        c = -w / (hx * hy)
        self._terms["pin"] = (r, np.where(b, s + n, s), c)
        diag = np.bincount(r, weights=c, minlength=n)
        A["pin"] = (sp.csr_matrix((c[~b], (r[~b], s[~b])), shape=(n, n)) - sp.diags(diag)).tocsr()
        B["pin"] = sp.csr_matrix((c[b], (r[b], s[b])), shape=(n, nb))
        return A, B

    # -- helpers --------------------------------------------------------------
    def boundary_values(self, g):
        """Evaluate Dirichlet data g(x, y) at the boundary crossings."""
        if self.nb == 0:
            return np.zeros(0)
        return np.asarray(g(self.boundary_points[:, 0], self.boundary_points[:, 1]), dtype=float)

    def apply(self, op, u, gb):
        """D_op u in difference form: sum_t c_t (z_src - u_row), z = [u, g]."""
        r, z, c = self._terms[op]
        zz = np.concatenate([u, gb])
        return np.bincount(r, weights=c * (zz[z] - u[r]), minlength=self.n)

    def node_index(self, x, y):
        """Interior unknown index of the grid node at (x, y), or -1."""
        g = self.grid
        i = int(round((x - g.x0) / g.hx))
        j = int(round((y - g.y0) / g.hy))
        if 0 <= i < g.nx and 0 <= j < g.ny and abs(g.x0 + i * g.hx - x) < 1e-9 * max(1, g.hx) \
                and abs(g.y0 + j * g.hy - y) < 1e-9 * max(1, g.hy):
            return int(self.ids[i, j])
        return -1

    def field(self, u, gb=None):
        vals = np.full(self.mask.shape, np.nan)
        vals[tuple(self.nodes.T)] = u
        return ScalarField2D(self.grid, self.mask.copy(), vals, self.boundary_points.copy(),
                             None if gb is None else np.asarray(gb, dtype=float).copy())


@dataclass
class ScalarField2D:
    """Nodal values on a grid; entries outside the mask are NaN."""

    grid: Grid
    mask: np.ndarray
    values: np.ndarray
    boundary_points: np.ndarray | None = None
    boundary_values: np.ndarray | None = None

    def interior(self):
        return self.values[self.mask]

    def max_abs(self):
        return float(np.nanmax(np.abs(self.values))) if self.mask.any() else 0.0

    def to_csv(self, header_lines=()):
        buf = io.StringIO()
        for line in header_lines:
            buf.write(f"# {line}\n")
        buf.write("x,y,value,in_mask\n")
        X, Y = self.grid.mesh()
        for x, y, v, m in zip(X.ravel(), Y.ravel(), self.values.ravel(), self.mask.ravel()):
            buf.write(f"{x:.12g},{y:.12g},{'' if not m else repr(float(v))},{int(m)}\n")
        if self.boundary_points is not None and self.boundary_values is not None:
            for (x, y), v in zip(self.boundary_points, self.boundary_values):
                buf.write(f"{x:.12g},{y:.12g},{float(v)!r},2\n")
        return buf.getvalue()
