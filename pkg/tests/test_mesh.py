import numpy as np
import pytest

from streamfem.mesh import (build_structured_mesh, dump_text, edge_geometry,
                            uniform_refine)


def test_smallest_mesh_counts():
    m = build_structured_mesh(1)
    assert m.num_vertices == 4
    assert m.num_triangles == 2
    assert m.num_edges == 5
    assert m.num_vertices - m.num_edges + m.num_triangles == 1


def test_n2_counts():
    m = build_structured_mesh(2)
    assert (m.num_vertices, m.num_triangles, m.num_edges) == (9, 8, 16)


@pytest.mark.parametrize("n", [1, 2, 3, 5, 8])
def test_euler_relation(n):
    m = build_structured_mesh(n)
    assert m.num_vertices - m.num_edges + m.num_triangles == 1


def test_mesh_size_is_cell_diagonal():
    m = build_structured_mesh(4)
    assert m.mesh_size_h == pytest.approx(np.sqrt(2.0) / 4, abs=1e-15)


def test_rejects_degenerate_input():
    with pytest.raises(ValueError):
        build_structured_mesh(0)
    with pytest.raises(ValueError):
        build_structured_mesh(2, domain=((0.0, 0.0), (0.0, 1.0)))


def test_positive_ccw_areas_and_total_area():
    for n in (1, 3, 6):
        m = build_structured_mesh(n, domain=((0.0, 2.0), (0.0, 1.0)))
        areas = m.signed_areas()
        assert np.all(areas > 0)
        assert areas.sum() == pytest.approx(2.0, rel=1e-12)


def test_adjacency_counts_and_consistency():
    m = build_structured_mesh(3)
    interior = ~m.boundary_edge
    assert np.all(m.edge_tris[interior, 1] >= 0)
    assert np.all(m.edge_tris[m.boundary_edge, 1] == -1)
    # both adjacent triangles contain the edge's vertex pair
    for e in range(m.num_edges):
        pair = set(m.edges[e])
        for t in m.edge_tris[e]:
            if t >= 0:
                assert pair <= set(m.triangles[t])


def test_triangle_edges_are_three_distinct():
    m = build_structured_mesh(3)
    for f in range(m.num_triangles):
        assert len(set(m.tri_edges[f])) == 3


def test_interior_normal_points_from_tminus_to_tplus():
    m = build_structured_mesh(3)
    cent = m.vertices[m.triangles].mean(axis=1)
    interior = np.flatnonzero(~m.boundary_edge)
    tm = m.edge_tris[interior, 0]
    tp = m.edge_tris[interior, 1]
    assert np.all(tm < tp)  # lower triangle index is the minus side
    d = np.einsum("ei,ei->e", m.normals[interior], cent[tp] - cent[tm])
    assert np.all(d > 0)


def test_boundary_normals_point_outward():
    m = build_structured_mesh(2)
    for e in np.flatnonzero(m.boundary_edge):
        length, n, pts = edge_geometry(m, e)
        mid = pts.mean(axis=0)
        assert np.dot(n, mid + 0.01 * n - np.array([0.5, 0.5])) > \
            np.dot(n, mid - np.array([0.5, 0.5]))
        outside = mid + 1e-6 * n
        assert not (0.0 < outside[0] < 1.0 and 0.0 < outside[1] < 1.0) or \
            np.linalg.norm(n) == pytest.approx(1.0)
        # the genuinely binding check: stepping along n leaves the square
        assert (outside[0] < 0.0 or outside[0] > 1.0 or
                outside[1] < 0.0 or outside[1] > 1.0)


def test_edge_geometry_values():
    m = build_structured_mesh(1)
    # bottom boundary edge of the unit square
    bottom = [e for e in range(m.num_edges)
              if np.allclose(m.vertices[m.edges[e]][:, 1], 0.0)][0]
    length, n, _ = edge_geometry(m, bottom)
    assert length == pytest.approx(1.0)
    assert n == pytest.approx([0.0, -1.0])
    # the diagonal edge
    diag = [e for e in range(m.num_edges)
            if set(m.edges[e]) == {0, 3}][0]
    length, n, pts = edge_geometry(m, diag)
    assert length == pytest.approx(np.sqrt(2.0))
    assert abs(np.dot(n, pts[1] - pts[0])) < 1e-14


def test_interior_vertical_edge_n2():
    m = build_structured_mesh(2)
    for e in range(m.num_edges):
        pts = m.vertices[m.edges[e]]
        if np.allclose(pts[:, 0], 0.5) and not m.boundary_edge[e]:
            length, n, _ = edge_geometry(m, e)
            assert length == pytest.approx(0.5)
            assert abs(np.dot(n, [0.0, 1.0])) < 1e-14
            break
    else:
        pytest.fail("no interior vertical edge found")


def test_edge_geometry_out_of_range():
    m = build_structured_mesh(1)
    with pytest.raises(IndexError):
        edge_geometry(m, m.num_edges)


def test_uniform_refine_matches_structured():
    fine = uniform_refine(build_structured_mesh(1))
    ref = build_structured_mesh(2)
    assert fine.num_triangles == ref.num_triangles == 8
    assert fine.num_vertices == ref.num_vertices == 9
    assert fine.num_edges == ref.num_edges == 16
    assert sorted(map(tuple, np.sort(fine.vertices, axis=0).tolist())) == \
        sorted(map(tuple, np.sort(ref.vertices, axis=0).tolist()))


def test_refine_twice_counts_and_h():
    m = build_structured_mesh(1)
    m2 = uniform_refine(uniform_refine(m))
    assert m2.num_triangles == 32
    assert m2.mesh_size_h == pytest.approx(m.mesh_size_h / 4)
    assert m2.signed_areas().sum() == pytest.approx(1.0, rel=1e-12)


def test_dump_text_roundtrip_header():
    m = build_structured_mesh(1)
    text = dump_text(m)
    assert text.startswith("vertices 4\n")
    assert "triangles 2" in text
