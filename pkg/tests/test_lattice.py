import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lozenge_lab.errors import DisconnectedDomain, DomainError, EmptyDomain, NonClosedBoundary
from lozenge_lab.lattice import (DIRECTIONS, Domain, DomainSpec, build_domain, discretize,
                                 face_vertices, hexagon_word, normalize_word, to_euclid,
                                 word_path)

from conftest import hexagon


def test_directions_are_sixty_degrees_apart():
    ang = [math.atan2(*to_euclid(u, v)[::-1]) for u, v in DIRECTIONS]
    steps = np.diff(np.unwrap(ang))
    assert np.allclose(steps, math.pi / 3)
    assert all(np.isclose(np.hypot(*to_euclid(u, v)), 1.0) for u, v in DIRECTIONS)


@pytest.mark.parametrize("abc", [(1, 1, 1), (2, 3, 4), (3, 3, 3)])
def test_hexagon_counts(abc):
    a, b, c = abc
    dom = hexagon(a, b, c)
    # a hexagon with sides a,b,c,a,b,c holds 2(ab+bc+ca) unit triangles
    assert len(dom.faces) == 2 * (a * b + b * c + c * a)
    nb = len(dom.boundary)
    assert nb == 2 * (a + b + c)
    assert dom.n_vertices == nb + len(dom.interior)


def test_hexagon_word_closes():
    assert word_path(hexagon_word(2, 3, 4))[-1] == (0, 0)


def test_neighbour_table_is_symmetric():
    dom = hexagon(2, 2, 3)
    for i in range(dom.n_vertices):
        for k in range(6):
            j = dom.nbr[i, k]
            if j >= 0:
                assert dom.nbr[j, (k + 3) % 6] == i


def test_faces_have_vertices_in_domain():
    dom = hexagon(2, 1, 3)
    for kind, u, v in dom.faces.tolist():
        assert all(p in dom.index for p in face_vertices(kind, u, v))


def test_arrays_read_only():
    dom = hexagon(1, 1, 1)
    with pytest.raises(ValueError):
        dom.coords[0, 0] = 5


def test_parse_forms():
    assert DomainSpec.parse("hex:1,2,3") == DomainSpec.hexagon(1, 2, 3)
    assert DomainSpec.parse('{"variant": "hexagon", "a": 1, "b": 2, "c": 3}') == \
        DomainSpec.hexagon(1, 2, 3)
    r = DomainSpec.parse("rect:6")
    assert r.variant == "rectangle" and r.mesh == pytest.approx(1 / 6)
    assert DomainSpec.from_json(r.to_json()) == r


@pytest.mark.parametrize("text,exc", [("poly:12", NonClosedBoundary), ("poly:", EmptyDomain),
                                      ("hex:0,1,1", DomainError), ("blob:1", DomainError),
                                      ("hex:1,x,1", DomainError)])
def test_bad_specs(text, exc):
    with pytest.raises(exc):
        build_domain(DomainSpec.parse(text))


def test_disconnected_face_set():
    from lozenge_lab.lattice import _check_edge_connected
    _check_edge_connected(np.array([[0, 0, 0], [1, 0, 0]]))
    with pytest.raises(DisconnectedDomain):
        _check_edge_connected(np.array([[0, 0, 0], [0, 5, 5]]))


def test_rotations_and_reflections_share_normal_form():
    w = hexagon_word(1, 2, 3)
    rotated = "".join(str((int(ch) % 6) + 1) for ch in w)          # rotate by 60 degrees
    shifted = w[3:] + w[:3]
    assert normalize_word(rotated) == normalize_word(w) == normalize_word(shifted)


def test_serialization_deterministic():
    a = hexagon(2, 2, 2).serialize()
    b = hexagon(2, 2, 2).serialize()
    assert a == b


def test_rectangle_domain():
    dom = build_domain(DomainSpec.rectangle(5))
    assert dom.n_vertices == 36 and len(dom.interior) == 16


def test_discretize_affine_is_floor():
    dom = build_domain(DomainSpec.rectangle(8))
    g = discretize(lambda x, y: -(x + y) / 3, dom)
    x = dom.positions()
    assert np.all(np.abs(dom.mesh * g - (-(x[:, 0] + x[:, 1]) / 3)) < dom.mesh + 1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4))
def test_hexagon_vertex_count_property(a, b, c):
    dom = hexagon(a, b, c)
    # Euler: V - E + F = 1 for a simply connected triangulated disk
    F = len(dom.faces)
    E = (3 * F + len(dom.boundary)) // 2
    assert dom.n_vertices - E + F == 1


def test_domain_direct_constructor_orders_vertices():
    d = Domain(1.0, [(1, 0), (0, 0), (0, 1)], np.zeros((0, 3)))
    assert d.coords.tolist() == [[0, 0], [0, 1], [1, 0]]
