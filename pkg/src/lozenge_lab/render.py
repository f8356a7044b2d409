"""Deterministic SVG rendering of lozenge tilings."""
from __future__ import annotations

import io
import math

import numpy as np

from .errors import ParseError
from .height import HeightFunction, parse_height_csv, tiling_from_height
from .lattice import FACE_DOWN, FACE_UP, Domain, DomainSpec, build_domain, face_vertices, to_euclid

COLORS = ("#d95f02", "#1b9e77", "#7570b3")   # by lozenge kind
SCALE = 40.0
MARGIN = 10.0


def _faces_from_vertices(coords):
    """Every unit triangle whose three corners are present."""
    have = {(int(u), int(v)) for u, v in coords}
    faces = []
    for u, v in sorted(have):
        for kind in (FACE_UP, FACE_DOWN):
            if all(p in have for p in face_vertices(kind, u, v)):
                faces.append((kind, u, v))
    return faces


def domain_for_dump(text):
    """Height function described by a CSV dump.

    A ``# domain=<spec>`` header line rebuilds the original domain; without
    it the faces are all unit triangles spanned by the listed vertices.
    """
    coords, heights, mesh = parse_height_csv(text)
    spec = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        s = raw.strip()
        if s.startswith("#") and s[1:].strip().startswith("domain="):
            try:
                spec = DomainSpec.parse(s[1:].strip()[len("domain="):])
            except Exception as exc:
                raise ParseError(f"bad domain header: {exc}", lineno) from None
    if spec is not None:
        dom = build_domain(spec)
    else:
        dom = Domain(mesh, coords, _faces_from_vertices(coords))
    vals = np.zeros(dom.n_vertices, dtype=np.int64)
    seen = np.zeros(dom.n_vertices, dtype=bool)
    for (u, v), h in zip(coords.tolist(), heights.tolist()):
        i = dom.index.get((u, v))
        if i is None:
            raise ParseError(f"vertex {(u, v)} is not part of the domain")
        vals[i] = h
        seen[i] = True
    if not seen.all():
        raise ParseError(f"dump misses {int((~seen).sum())} vertices of the domain")
    return HeightFunction(dom, vals)


def _xy(p):
    x, y = to_euclid(p[0], p[1])
    return float(x), float(y)


def lozenge_polygon(lz):
    """The four corners of a lozenge, in order around it."""
    a, b = lz.a, lz.b
    d = (b[0] - a[0], b[1] - a[1])
    # the two apexes of the triangles on either side of the diagonal
    apex = {(1, 0): ((a[0] + 1, a[1] + 1), (a[0], a[1] - 1)),
            (0, 1): ((a[0] - 1, a[1]), (a[0] + 1, a[1] + 1)),
            (1, 1): ((a[0] + 1, a[1]), (a[0], a[1] + 1))}[d]
    return [a, apex[0], b, apex[1]]


def _contours(h: HeightFunction):
    """Segments of the piecewise-linear height at half-integer levels."""
    dom = h.dom
    segs = []
    for kind, u, v in dom.faces.tolist():
        pts = face_vertices(kind, u, v)
        hv = [float(h.values[dom.index[p]]) for p in pts]
        lo, hi = min(hv), max(hv)
        for level in np.arange(math.floor(lo) + 0.5, hi, 1.0):
            cross = []
            for i in range(3):
                p, q = pts[i], pts[(i + 1) % 3]
                a, b = hv[i], hv[(i + 1) % 3]
                if (a - level) * (b - level) < 0:
                    t = (level - a) / (b - a)
                    pa, pb = _xy(p), _xy(q)
                    cross.append((pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])))
            if len(cross) == 2:
                segs.append(tuple(cross))
    return segs


def render_svg(h: HeightFunction, contours=False, scale=SCALE) -> str:
    """SVG text for the tiling of h; identical input gives identical bytes."""
    tiling = sorted(tiling_from_height(h), key=lambda z: (z.kind, z.a, z.b))
    pts = np.array([_xy(p) for p in map(tuple, h.dom.coords.tolist())])
    xmin, ymin = pts.min(axis=0)
    xmax, ymax = pts.max(axis=0)
    W = (xmax - xmin) * scale + 2 * MARGIN
    H = (ymax - ymin) * scale + 2 * MARGIN

    def tr(p):
        return (MARGIN + (p[0] - xmin) * scale, MARGIN + (ymax - p[1]) * scale)

    out = io.StringIO()
    out.write('<?xml version="1.0" encoding="UTF-8"?>\n')
    out.write(f'<svg xmlns="http://www.w3.org/2000/svg" width="{W:.2f}" height="{H:.2f}" '
              f'viewBox="0 0 {W:.2f} {H:.2f}">\n')
    out.write(f'<g stroke="#222222" stroke-width="1" stroke-linejoin="round">\n')
    for lz in tiling:
        corners = " ".join("{:.3f},{:.3f}".format(*tr(_xy(p))) for p in lozenge_polygon(lz))
        out.write(f'<polygon class="lozenge kind{lz.kind}" fill="{COLORS[lz.kind]}" '
                  f'points="{corners}"/>\n')
    out.write("</g>\n")
    if contours:
        out.write('<g stroke="#000000" stroke-width="0.6" fill="none">\n')
        for p, q in _contours(h):
            (x1, y1), (x2, y2) = tr(p), tr(q)
            out.write(f'<line x1="{x1:.3f}" y1="{y1:.3f}" x2="{x2:.3f}" y2="{y2:.3f}"/>\n')
        out.write("</g>\n")
    out.write("</svg>\n")
    return out.getvalue()
