"""Admissible height functions, flips, tilings and extremal configurations."""
from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .errors import (IllegalFlip, Infeasible, MissingVertex, NotInterior,
                     ParseError, Untilable)
from .lattice import (BIG, DIRECTIONS, FACE_UP, HI_OFF, LO_OFF, Domain,
                      discretize, face_vertices, is_admissible_field, relax_lower,
                      relax_upper, word_path)

UP, DOWN = "up", "down"


class HeightFunction:
    """Integer height field (units of the mesh) on all vertices of a domain."""

    __slots__ = ("dom", "values")

    def __init__(self, dom: Domain, values):
        values = np.asarray(values)
        if values.shape != (dom.n_vertices,):
            raise MissingVertex(
                f"expected {dom.n_vertices} values, got shape {values.shape}")
        self.dom = dom
        self.values = values.astype(np.int64, copy=True)

    @classmethod
    def from_mapping(cls, dom, mapping: Mapping):
        vals = np.empty(dom.n_vertices, dtype=np.int64)
        for i, (u, v) in enumerate(dom.coords.tolist()):
            try:
                vals[i] = mapping[(u, v)]
            except KeyError:
                raise MissingVertex(f"no height given for vertex {(u, v)}") from None
        return cls(dom, vals)

    def __getitem__(self, key):
        return int(self.values[self.dom.vertex(key)])

    def __eq__(self, other):
        return (isinstance(other, HeightFunction) and other.dom is self.dom
                and np.array_equal(self.values, other.values))

    def __hash__(self):
        return hash(self.values.tobytes())

    def __le__(self, other):
        return bool(np.all(self.values <= other.values))

    def copy(self):
        return HeightFunction(self.dom, self.values)

    def to_mapping(self):
        return {(int(u), int(v)): int(h) for (u, v), h in zip(self.dom.coords, self.values)}

    def __repr__(self):
        return f"HeightFunction({self.dom!r}, range=[{self.values.min()}, {self.values.max()}])"


@dataclass(frozen=True)
class BoundaryHeight:
    """Heights prescribed on the boundary vertices (aligned with dom.boundary)."""

    dom: Domain
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.int64)
        if vals.shape != (len(self.dom.boundary),):
            raise MissingVertex(
                f"expected {len(self.dom.boundary)} boundary values, got {vals.shape}")
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_height(cls, h: HeightFunction):
        return cls(h.dom, h.values[h.dom.boundary])

    def full(self, fill=0):
        out = np.full(self.dom.n_vertices, fill, dtype=np.int64)
        out[self.dom.boundary] = self.values
        return out


@dataclass(frozen=True)
class FlipSite:
    vertex: int
    direction: str


def check_admissible(h: HeightFunction) -> bool:
    if not isinstance(h, HeightFunction) or len(h.values) != h.dom.n_vertices:
        raise MissingVertex("height function does not cover the domain")
    return is_admissible_field(h.values, h.dom.nbr)


def local_bounds(values, nbr, x):
    """Range [lo, hi] of values at x compatible with all neighbours."""
    y = nbr[x]
    ok = y >= 0
    hy = values[y[ok]]
    lo = int(np.max(hy + LO_OFF[ok]))
    hi = int(np.min(hy + HI_OFF[ok]))
    return lo, hi


def flippable(h: HeightFunction, x) -> set:
    dom = h.dom
    i = dom.vertex(x)
    if not dom.is_interior[i]:
        raise NotInterior(f"vertex {tuple(dom.coords[i])} is on the boundary")
    lo, hi = local_bounds(h.values, dom.nbr, i)
    cur = h.values[i]
    out = set()
    if cur + 1 <= hi:
        out.add(FlipSite(i, UP))
    if cur - 1 >= lo:
        out.add(FlipSite(i, DOWN))
    return out


def apply_flip(h: HeightFunction, site: FlipSite) -> HeightFunction:
    i = h.dom.vertex(site.vertex)
    site = FlipSite(i, site.direction)
    if not h.dom.is_interior[i] or site not in flippable(h, i):
        raise IllegalFlip(f"{site.direction} flip not allowed at {tuple(h.dom.coords[i])}")
    out = h.copy()
    out.values[i] += 1 if site.direction == UP else -1
    return out


# ---------------------------------------------------------------------------
# boundary data

def forced_boundary(dom: Domain) -> BoundaryHeight:
    """Boundary heights of a tilable domain.

    Polygon and hexagon domains: walk the boundary word; a step along (1,1)
    lowers the height by one, a step along (-1,-1) raises it, the other four
    directions keep it (unit lozenge edges are level along e1 and e2 and climb
    along e3).  Rectangle domains: floor of the affine profile.
    """
    spec = dom.spec
    if spec is None:
        raise Untilable("domain carries no spec; boundary heights must be given")
    if spec.variant == "rectangle":
        _, s, t = spec.params
        g = discretize(lambda x1, x2: s * x1 + t * x2, dom)
        return BoundaryHeight(dom, g[dom.boundary])
    word = spec.word()
    path = word_path(word)
    heights = {}
    cur = 0
    for (p, ch) in zip(path[:-1], word):
        heights.setdefault(p, cur)
        if heights[p] != cur:
            raise Untilable(f"boundary height is not single valued at {p}")
        cur += {"2": -1, "5": 1}.get(ch, 0)
    if cur != 0:
        raise Untilable("boundary word has non-zero height winding")
    vals = []
    for i in dom.boundary:
        key = tuple(int(c) for c in dom.coords[i])
        if key not in heights:
            raise Untilable(f"boundary vertex {key} is not on the boundary path")
        vals.append(heights[key])
    return BoundaryHeight(dom, np.asarray(vals, dtype=np.int64))


def extremal_heights(g: BoundaryHeight):
    """Pointwise minimal and maximal admissible extensions of g."""
    dom = g.dom
    b = dom.boundary
    init = np.full(dom.n_vertices, BIG, dtype=np.int64)
    init[b] = g.values
    hmax = relax_upper(init, dom.nbr)
    init[:] = -BIG
    init[b] = g.values
    hmin = relax_lower(init, dom.nbr)
    if (not np.array_equal(hmax[b], g.values) or not np.array_equal(hmin[b], g.values)
            or np.any(hmin > hmax) or np.any(np.abs(hmax) >= BIG // 2)):
        raise Untilable("boundary values admit no admissible extension")
    lo, hi = HeightFunction(dom, hmin), HeightFunction(dom, hmax)
    if not (check_admissible(lo) and check_admissible(hi)):
        raise Untilable("extremal extensions are not admissible")
    return lo, hi


def quantize_ceiling(dom, ceil):
    """Real ceiling field (in mesh units) to integer caps; None means +inf."""
    if ceil is None:
        return np.full(dom.n_vertices, BIG, dtype=np.int64)
    c = np.broadcast_to(np.asarray(ceil, dtype=float), (dom.n_vertices,))
    out = np.where(np.isfinite(c), np.floor(np.clip(c, -1e15, 1e15)), float(BIG))
    return np.where(c == np.inf, BIG, out).astype(np.int64)


def quantize_floor(dom, floor):
    if floor is None:
        return np.full(dom.n_vertices, -BIG, dtype=np.int64)
    return -quantize_ceiling(dom, -np.asarray(floor, dtype=float))


def max_below_ceiling(g: BoundaryHeight, ceil) -> HeightFunction:
    """Highest admissible h with boundary g and h <= ceil (ceil in mesh units).

    Starts from the extremal maximum clipped to floor(ceil) and lowers
    vertices to the admissibility fixpoint.
    """
    dom = g.dom
    hmin, hmax = extremal_heights(g)
    cap = quantize_ceiling(dom, ceil)
    if np.any(hmin.values > cap):
        raise Infeasible("the minimal configuration already exceeds the ceiling")
    start = np.minimum(hmax.values, cap)
    h = relax_upper(start, dom.nbr)
    if not np.array_equal(h[dom.boundary], g.values) or np.any(h < hmin.values):
        raise Infeasible("ceiling incompatible with the boundary values")
    return HeightFunction(dom, h)


def min_above_floor(g: BoundaryHeight, floor) -> HeightFunction:
    """Mirror of max_below_ceiling."""
    dom = g.dom
    hmin, hmax = extremal_heights(g)
    cap = quantize_floor(dom, floor)
    if np.any(hmax.values < cap):
        raise Infeasible("the maximal configuration is already below the floor")
    h = relax_lower(np.maximum(hmin.values, cap), dom.nbr)
    if not np.array_equal(h[dom.boundary], g.values) or np.any(h > hmax.values):
        raise Infeasible("floor incompatible with the boundary values")
    return HeightFunction(dom, h)


# ---------------------------------------------------------------------------
# tilings

@dataclass(frozen=True)
class Lozenge:
    """Two faces glued along a diagonal edge; kind = class of that diagonal.

    kind 0: diagonal along (1,0); kind 1: along (0,1); kind 2: along (1,1).
    """

    kind: int
    a: tuple   # diagonal endpoints, a + direction = b
    b: tuple


_KIND_DIR = {0: (1, 0), 1: (0, 1), 2: (1, 1)}


def _edge_drop(values, dom, p, q):
    return int(values[dom.index[p]] - values[dom.index[q]])


def tiling_from_height(h: HeightFunction):
    """Set of lozenges encoded by an admissible height function."""
    dom = h.dom
    vals = h.values
    diag = {}
    for kind, u, v in dom.faces.tolist():
        p0, p1, p2 = face_vertices(kind, u, v)
        # edges of the face in positive directions
        if kind == FACE_UP:
            e_a, e_b = (p0, p1), (p1, p2)   # (1,0) then (0,1)
            ka, kb = 0, 1
        else:
            e_a, e_b = (p0, p1), (p1, p2)   # (0,1) then (1,0)
            ka, kb = 1, 0
        da = _edge_drop(vals, dom, *e_a)
        db = _edge_drop(vals, dom, *e_b)
        if da == 1 and db == 0:
            key = (ka,) + e_a
        elif da == 0 and db == 1:
            key = (kb,) + e_b
        elif da == 0 and db == 0:
            key = (2, p0, p2)
        else:
            raise Untilable(f"face {(kind, u, v)} has inconsistent height drops")
        diag.setdefault(key, []).append((kind, u, v))
    out = set()
    for (kind, a, b), fs in diag.items():
        if len(fs) != 2:
            raise Untilable(f"diagonal {a}-{b} is not shared by two faces of the domain")
        out.add(Lozenge(kind, a, b))
    return frozenset(out)


def height_from_tiling(dom: Domain, tiling, ref_vertex=None, ref_value=0) -> HeightFunction:
    """Integrate the height from a tiling, fixing one vertex's value."""
    diagonals = {(lz.a, lz.b) for lz in tiling}
    ref = dom.vertex(ref_vertex if ref_vertex is not None else int(dom.boundary[0]))
    vals = np.full(dom.n_vertices, BIG, dtype=np.int64)
    vals[ref] = ref_value
    stack = [ref]
    while stack:
        i = stack.pop()
        p = tuple(int(c) for c in dom.coords[i])
        for k in range(6):
            j = dom.nbr[i, k]
            if j < 0:
                continue
            du, dv = DIRECTIONS[k]
            q = (p[0] + du, p[1] + dv)
            if k < 3:
                a, b, sign = p, q, 1
            else:
                a, b, sign = q, p, -1
            is_diag = (a, b) in diagonals
            d = (b[0] - a[0], b[1] - a[1])
            drop = int(is_diag) if d != (1, 1) else int(not is_diag)
            want = vals[i] - sign * drop
            if vals[j] == BIG:
                vals[j] = want
                stack.append(j)
            elif vals[j] != want:
                raise Untilable("tiling does not define a consistent height")
    return HeightFunction(dom, vals)


# ---------------------------------------------------------------------------
# CSV dumps

def dump_height_csv(h: HeightFunction, header_lines=()):
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    buf.write(f"# mesh={h.dom.mesh!r}\n")
    buf.write("u,v,height\n")
    for (u, v), val in zip(h.dom.coords.tolist(), h.values.tolist()):
        buf.write(f"{u},{v},{val}\n")
    return buf.getvalue()


def parse_height_csv(text):
    """Parse a height dump; returns (coords array, heights array, mesh)."""
    coords, heights = [], []
    mesh = 1.0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("mesh="):
                try:
                    mesh = float(body[5:])
                except ValueError:
                    raise ParseError(f"bad mesh value {body[5:]!r}", lineno) from None
            continue
        if line.replace(" ", "") == "u,v,height":
            continue
        parts = line.split(",")
        if len(parts) != 3:
            raise ParseError(f"expected 3 fields, got {len(parts)}", lineno)
        try:
            u, v, val = (int(p) for p in parts)
        except ValueError:
            raise ParseError(f"non-integer field in {line!r}", lineno) from None
        coords.append((u, v))
        heights.append(val)
    if not coords:
        raise ParseError("no height rows found")
    return np.asarray(coords, dtype=np.int64), np.asarray(heights, dtype=np.int64), mesh
