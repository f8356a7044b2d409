"""Triangular lattice, discrete domains and K-discretization.

Vertices are stored in axial integer coordinates (u, v).  The Euclidean
position of (u, v) at mesh delta is ``delta * (u*E1 + v*E2)`` with
``E1 = (1, 0)`` and ``E2 = (-1/2, sqrt(3)/2)``; the third lattice vector is
``E3 = -(E1 + E2)``.  In axial coordinates the three classes of lattice
directions are (1,0), (0,1) and (1,1) together with their negatives.

Continuum functions (limit shapes, barrier, PDE fields) are always written in
the oblique frame ``x = delta * (u, v)`` so that a slope (s, t) is the
gradient along e1 and e2.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (DisconnectedDomain, DiscretizationInfeasible, EmptyDomain,
                     NonClosedBoundary, DomainError)

# counterclockwise, 60 degrees apart; labels "1".."6" in boundary words
DIRECTIONS = ((1, 0), (1, 1), (0, 1), (-1, 0), (-1, -1), (0, -1))
WORD_LETTERS = "123456"
E1 = (1, 0)
E2 = (0, 1)
E3 = (-1, -1)
EUCLID_E1 = np.array([1.0, 0.0])
EUCLID_E2 = np.array([-0.5, math.sqrt(3.0) / 2.0])

# Constraint offsets: for y = nbr[x, k], admissibility reads
#   h(y) + LO_OFF[k] <= h(x) <= h(y) + HI_OFF[k].
# k < 3 are the "positive" directions (1,0),(1,1),(0,1); h drops by 0 or 1 along them.
HI_OFF = np.array([1, 1, 1, 0, 0, 0], dtype=np.int64)
LO_OFF = np.array([0, 0, 0, -1, -1, -1], dtype=np.int64)
OPPOSITE = np.array([3, 4, 5, 0, 1, 2], dtype=np.int64)

BIG = np.int64(1) << np.int64(40)

FACE_UP, FACE_DOWN = 0, 1


def to_euclid(u, v, mesh=1.0):
    """Euclidean embedding of axial coordinates (vectorized)."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return mesh * (u - 0.5 * v), mesh * (math.sqrt(3.0) / 2.0) * v


def face_vertices(kind, u, v):
    if kind == FACE_UP:
        return ((u, v), (u + 1, v), (u + 1, v + 1))
    return ((u, v), (u, v + 1), (u + 1, v + 1))


def hexagon_word(a, b, c):
    return "1" * a + "2" * b + "3" * c + "4" * a + "5" * b + "6" * c


def word_path(word):
    """Vertices visited by a boundary word starting from the origin."""
    pts = [(0, 0)]
    for ch in word:
        try:
            du, dv = DIRECTIONS[WORD_LETTERS.index(ch)]
        except ValueError:
            raise DomainError(f"invalid boundary letter {ch!r}") from None
        u, v = pts[-1]
        pts.append((u + du, v + dv))
    return pts


def _sym_transforms():
    # rotations by k*60 deg act as d -> d+k; the reflection across e1 as d -> -d
    out = []
    for refl in (False, True):
        for k in range(6):
            out.append(tuple(((-d if refl else d) + k) % 6 for d in range(6)))
    return out


_SYMS = _sym_transforms()


def normalize_word(word):
    """Canonical representative of a closed word under lattice symmetries.

    The orbit covers the 12 point symmetries of the lattice, traversal
    reversal and the choice of starting corner.  Domains whose words share a
    canonical form are congruent, so they carry the same tiling statistics.
    """
    digits = [WORD_LETTERS.index(ch) for ch in word]
    best = None
    n = len(digits)
    for perm in _SYMS:
        img = [perm[d] for d in digits]
        rev = [(d + 3) % 6 for d in reversed(img)]
        for seq in (img, rev):
            for s in range(n):
                cand = "".join(WORD_LETTERS[d] for d in seq[s:] + seq[:s])
                if best is None or cand < best:
                    best = cand
    return best if best is not None else ""


@dataclass(frozen=True)
class DomainSpec:
    """Geometric description of a discrete domain.

    variant is ``"hexagon"`` (params a, b, c), ``"polygon"`` (params: boundary
    word over "123456") or ``"rectangle"`` (params L, s, t: the axial rhombus
    [0, L]^2 with boundary heights given by the affine profile of slope (s, t)).
    """

    variant: str
    params: tuple
    mesh: float | None = None

    @staticmethod
    def hexagon(a, b, c, mesh=1.0):
        return DomainSpec("hexagon", (int(a), int(b), int(c)), float(mesh))

    @staticmethod
    def polygon(word, mesh=1.0):
        return DomainSpec("polygon", (str(word),), float(mesh))

    @staticmethod
    def rectangle(L, slope=(-1.0 / 3.0, -1.0 / 3.0), mesh=None):
        L = int(L)
        return DomainSpec("rectangle", (L, float(slope[0]), float(slope[1])),
                          float(mesh) if mesh is not None else 1.0 / L)

    # -- validation / normal form --------------------------------------
    def validate(self):
        if self.mesh is None or not self.mesh > 0:
            raise DomainError("mesh must be positive")
        if self.variant == "hexagon":
            if len(self.params) != 3 or min(self.params) < 1:
                raise DomainError("hexagon side lengths must be positive integers")
        elif self.variant == "polygon":
            word = self.params[0]
            if not word:
                raise EmptyDomain("empty boundary word")
            end = word_path(word)[-1]
            if end != (0, 0):
                raise NonClosedBoundary(f"boundary word ends at {end}, not at the start")
        elif self.variant == "rectangle":
            if len(self.params) != 3 or self.params[0] < 1:
                raise DomainError("rectangle needs L >= 1 and a slope pair")
        else:
            raise DomainError(f"unknown domain variant {self.variant!r}")
        return self

    def word(self):
        if self.variant == "hexagon":
            return hexagon_word(*self.params)
        if self.variant == "polygon":
            return self.params[0]
        L = self.params[0]
        return "1" * L + "3" * L + "4" * L + "6" * L

    def normalized(self):
        """Equivalent spec in canonical polygon form (rectangles unchanged)."""
        self.validate()
        if self.variant == "rectangle":
            return self
        return DomainSpec("polygon", (normalize_word(self.word()),), self.mesh)

    # -- (de)serialization ---------------------------------------------
    def to_json(self):
        d = {"variant": self.variant, "mesh": self.mesh}
        if self.variant == "hexagon":
            d.update(a=self.params[0], b=self.params[1], c=self.params[2])
        elif self.variant == "polygon":
            d["word"] = self.params[0]
        else:
            d.update(L=self.params[0], slope=[self.params[1], self.params[2]])
        return d

    @staticmethod
    def from_json(d):
        if isinstance(d, str):
            d = json.loads(d)
        variant = d.get("variant")
        mesh = d.get("mesh")
        if variant == "hexagon":
            return DomainSpec.hexagon(d["a"], d["b"], d["c"], 1.0 if mesh is None else mesh)
        if variant == "polygon":
            return DomainSpec.polygon(d["word"], 1.0 if mesh is None else mesh)
        if variant in ("rectangle", "rectangle-like"):
            return DomainSpec.rectangle(d["L"], tuple(d.get("slope", (-1 / 3, -1 / 3))), mesh)
        raise DomainError(f"unknown domain variant {variant!r}")

    @staticmethod
    def parse(text):
        """Parse ``hex:a,b,c``, ``poly:WORD``, ``rect:L[,s,t]`` or a JSON object."""
        text = text.strip()
        if text.startswith("{"):
            return DomainSpec.from_json(text).validate()
        kind, _, rest = text.partition(":")
        kind = kind.lower()
        try:
            if kind in ("hex", "hexagon"):
                a, b, c = (int(x) for x in rest.split(","))
                return DomainSpec.hexagon(a, b, c).validate()
            if kind in ("poly", "polygon"):
                return DomainSpec.polygon(rest).validate()
            if kind in ("rect", "rectangle"):
                parts = [x for x in rest.split(",") if x]
                L = int(parts[0])
                slope = (float(parts[1]), float(parts[2])) if len(parts) == 3 else (-1 / 3, -1 / 3)
                return DomainSpec.rectangle(L, slope).validate()
        except (ValueError, IndexError) as exc:
            if isinstance(exc, DomainError):
                raise
            raise DomainError(f"cannot parse domain {text!r}: {exc}") from None
        raise DomainError(f"cannot parse domain {text!r}")


class Domain:
    """A finite set of lattice vertices with its faces and boundary split.

    Arrays are read-only after construction.  Vertex ``i`` has coordinates
    ``coords[i]``; ``nbr[i, k]`` is the index of ``coords[i] + DIRECTIONS[k]``
    or -1 when that lattice neighbour is not in the vertex set.
    """

    def __init__(self, mesh, coords, faces, spec=None):
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, 2)
        order = np.lexsort((coords[:, 1], coords[:, 0]))
        self.coords = coords[order]
        self.mesh = float(mesh)
        self.spec = spec
        self.index = {(int(u), int(v)): i for i, (u, v) in enumerate(self.coords)}
        n = len(self.coords)
        nbr = np.full((n, 6), -1, dtype=np.int64)
        for i, (u, v) in enumerate(self.coords):
            for k, (du, dv) in enumerate(DIRECTIONS):
                nbr[i, k] = self.index.get((int(u + du), int(v + dv)), -1)
        self.nbr = nbr
        self.is_interior = np.all(nbr >= 0, axis=1)
        self.interior = np.flatnonzero(self.is_interior)
        self.boundary = np.flatnonzero(~self.is_interior)
        f = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
        self.faces = f[np.lexsort((f[:, 2], f[:, 1], f[:, 0]))]
        for arr in (self.coords, self.nbr, self.is_interior, self.interior,
                    self.boundary, self.faces):
            arr.setflags(write=False)

    @property
    def n_vertices(self):
        return len(self.coords)

    def vertex(self, key):
        """Index of a vertex given either an index or a (u, v) pair."""
        if isinstance(key, (tuple, list, np.ndarray)) and len(key) == 2:
            try:
                return self.index[(int(key[0]), int(key[1]))]
            except KeyError:
                raise DomainError(f"vertex {tuple(key)} not in domain") from None
        i = int(key)
        if not 0 <= i < self.n_vertices:
            raise DomainError(f"vertex index {i} out of range")
        return i

    def positions(self):
        """Oblique continuum coordinates delta*(u, v), shape (V, 2)."""
        return self.mesh * self.coords.astype(float)

    def euclidean(self):
        x, y = to_euclid(self.coords[:, 0], self.coords[:, 1], self.mesh)
        return np.column_stack([x, y])

    def center_vertex(self):
        """Interior vertex closest to the barycentre of the vertex set."""
        pts = self.euclidean()
        c = pts.mean(axis=0)
        cand = self.interior if len(self.interior) else np.arange(self.n_vertices)
        d = np.sum((pts[cand] - c) ** 2, axis=1)
        return int(cand[np.argmin(d)])

    def diameter(self):
        """Euclidean diameter of the vertex set (in continuum units)."""
        pts = self.euclidean()
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        return float(np.hypot(*(hi - lo)))

    def to_json(self):
        return {
            "mesh": self.mesh,
            "spec": self.spec.to_json() if self.spec is not None else None,
            "vertices": self.coords.tolist(),
            "interior": self.interior.tolist(),
            "faces": self.faces.tolist(),
        }

    def serialize(self):
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":")).encode()

    def __repr__(self):
        return (f"Domain(V={self.n_vertices}, interior={len(self.interior)}, "
                f"faces={len(self.faces)}, mesh={self.mesh:g})")


def _faces_in_polygon(path):
    pts = np.asarray(path[:-1], dtype=float) * 3.0
    umin, vmin = np.min(pts, axis=0) / 3 - 1
    umax, vmax = np.max(pts, axis=0) / 3 + 1
    uu, vv = np.meshgrid(np.arange(umin, umax + 1), np.arange(vmin, vmax + 1), indexing="ij")
    uu, vv = uu.ravel(), vv.ravel()
    cand = np.concatenate([
        np.column_stack([np.zeros_like(uu), uu, vv]),
        np.column_stack([np.ones_like(uu), uu, vv]),
    ])
    # centroids scaled by 3 are integers and never lie on a lattice line
    cx = 3 * cand[:, 1] + np.where(cand[:, 0] == FACE_UP, 2, 1)
    cy = 3 * cand[:, 2] + np.where(cand[:, 0] == FACE_UP, 1, 2)
    inside = np.zeros(len(cand), dtype=bool)
    x1, y1 = pts[:, 0], pts[:, 1]
    x2, y2 = np.roll(x1, -1), np.roll(y1, -1)
    for a, b, c, d in zip(x1, y1, x2, y2):
        crosses = (b > cy) != (d > cy)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = a + (cy - b) * (c - a) / (d - b)
        inside ^= crosses & (cx < xint)
    return cand[inside].astype(np.int64)


def _check_edge_connected(faces):
    fs = {tuple(f) for f in faces.tolist()}
    start = next(iter(fs))
    seen = {start}
    stack = [start]
    while stack:
        kind, u, v = stack.pop()
        if kind == FACE_UP:
            nb = [(1, u, v), (1, u + 1, v), (1, u, v - 1)]
        else:
            nb = [(0, u, v), (0, u - 1, v), (0, u, v + 1)]
        for f in nb:
            if f in fs and f not in seen:
                seen.add(f)
                stack.append(f)
    if len(seen) != len(fs):
        raise DisconnectedDomain("face set is not edge-connected")


def build_domain(spec: DomainSpec) -> Domain:
    """Build the vertex set, faces and interior/boundary split of a spec."""
    spec.validate()
    if spec.variant == "rectangle":
        L = spec.params[0]
        uu, vv = np.meshgrid(np.arange(L + 1), np.arange(L + 1), indexing="ij")
        coords = np.column_stack([uu.ravel(), vv.ravel()])
        fu, fv = np.meshgrid(np.arange(L), np.arange(L), indexing="ij")
        fu, fv = fu.ravel(), fv.ravel()
        faces = np.concatenate([
            np.column_stack([np.zeros_like(fu), fu, fv]),
            np.column_stack([np.ones_like(fu), fu, fv]),
        ])
        return Domain(spec.mesh, coords, faces, spec)
    faces = _faces_in_polygon(word_path(spec.word()))
    if len(faces) == 0:
        raise EmptyDomain("boundary word encloses no faces")
    _check_edge_connected(faces)
    verts = set()
    for kind, u, v in faces.tolist():
        verts.update(face_vertices(kind, u, v))
    return Domain(spec.mesh, sorted(verts), faces, spec)


# ---------------------------------------------------------------------------
# constraint propagation on the admissibility digraph

def relax_upper(h0, nbr, off=HI_OFF):
    """Largest integer field h <= h0 satisfying every upper admissibility bound.

    Iterates h(x) <- min(h(x), min_k h(nbr[x,k]) + HI_OFF[k]) to its fixpoint.
    Entries equal to BIG act as +infinity.
    """
    h = np.array(h0, dtype=np.int64)
    mask = nbr >= 0
    idx = np.where(mask, nbr, 0)
    off = np.broadcast_to(off, nbr.shape)
    while True:
        cand = np.where(mask, h[idx] + off, BIG).min(axis=1)
        new = np.minimum(h, cand)
        if np.array_equal(new, h):
            return h
        h = new


def relax_lower(h0, nbr):
    """Mirror of relax_upper: smallest h >= h0 satisfying the lower bounds."""
    return -relax_upper(-np.asarray(h0, dtype=np.int64), nbr, -LO_OFF)


def is_admissible_field(h, nbr):
    h = np.asarray(h, dtype=np.int64)
    for k in range(3):
        y = nbr[:, k]
        ok = y >= 0
        d = h[ok] - h[y[ok]]
        if np.any((d < 0) | (d > 1)):
            return False
    return True


def discretize(f: Callable, dom: Domain, K: float = 1.0) -> np.ndarray:
    """Integer heights g (units of delta) with |delta*g - f| <= K*delta.

    ``f`` is evaluated on oblique continuum coordinates ``f(x1, x2)``.  The
    floor rounding is tried first (it is admissible whenever the discrete
    increments of f stay in the Newton polygon); otherwise the largest
    admissible field below f/delta + K is computed and accepted if it stays
    above f/delta - K.
    """
    pos = dom.positions()
    F = np.asarray(f(pos[:, 0], pos[:, 1]), dtype=float) / dom.mesh
    F = np.broadcast_to(F, (dom.n_vertices,))
    g = np.floor(F).astype(np.int64)
    if np.max(np.abs(g - F)) <= K and is_admissible_field(g, dom.nbr):
        return g
    upper = np.floor(F + K).astype(np.int64)
    g = relax_upper(upper, dom.nbr)
    if np.all(g >= F - K - 1e-12) and is_admissible_field(g, dom.nbr):
        return g
    raise DiscretizationInfeasible(
        f"no admissible height within {K} lattice units of the target "
        f"(worst deficit {float(np.max(F - K - g)):.3g})")
