import numpy as np
import pytest

from measopt import (Mesh, MeshError, MeshParseError, build_lshape_mesh,
                     build_square_mesh, mesh_io, parse, refine_uniform)


# (n, vertices, triangles, interior)
LSHAPE_COUNTS = [
    (2, 8, 6, 0),
    (4, 21, 24, 5),
    (8, 65, 96, 33),
    (16, 225, 384, 161),
    (32, 833, 1536, 705),
]


@pytest.mark.parametrize("n,nv,nt,ni", LSHAPE_COUNTS)
def test_lshape_counts(n, nv, nt, ni):
    m = build_lshape_mesh(n)
    assert m.n_vertices == nv
    assert m.n_triangles == nt
    assert len(m.interior_indices()) == ni


def test_lshape_mesh_size():
    for n in (2, 4, 8):
        m = build_lshape_mesh(n)
        assert m.h == pytest.approx(np.sqrt(2.0) / n, rel=0, abs=1e-15)


def test_lshape_area_sum():
    for n in (2, 4, 8, 16):
        m = build_lshape_mesh(n)
        assert abs(m.triangle_areas().sum() - 0.75) <= 1e-13


def test_triangles_counterclockwise(lshape4):
    v = lshape4.vertices[lshape4.triangles]
    cross = ((v[:, 1, 0] - v[:, 0, 0]) * (v[:, 2, 1] - v[:, 0, 1])
             - (v[:, 1, 1] - v[:, 0, 1]) * (v[:, 2, 0] - v[:, 0, 0]))
    assert np.all(cross > 0)


def test_boundary_flags_geometry(lshape4):
    xy = lshape4.vertices
    b = lshape4.boundary

    def flag_at(x, y):
        j = np.argmin(np.hypot(xy[:, 0] - x, xy[:, 1] - y))
        assert np.hypot(xy[j, 0] - x, xy[j, 1] - y) < 1e-12
        return bool(b[j])

    assert flag_at(0.0, 0.0)
    assert flag_at(1.0, 0.0)
    assert flag_at(0.5, 0.5)      # re-entrant corner
    assert flag_at(0.75, 0.5)     # inner horizontal edge
    assert flag_at(0.5, 0.75)     # inner vertical edge
    assert not flag_at(0.25, 0.25)
    assert not flag_at(0.25, 0.75)
    assert b.sum() == 16


def test_odd_or_bad_n_rejected():
    with pytest.raises(MeshError, match="even"):
        build_lshape_mesh(3)
    with pytest.raises(MeshError):
        build_lshape_mesh(0)
    with pytest.raises(MeshError):
        build_lshape_mesh(-4)


def test_square_mesh_counts(square2):
    assert square2.n_vertices == 9
    assert square2.n_triangles == 8
    assert len(square2.interior_indices()) == 1
    assert abs(square2.triangle_areas().sum() - 1.0) <= 1e-14
    # odd n is fine on the square
    m3 = build_square_mesh(3)
    assert m3.n_vertices == 16
    assert m3.n_triangles == 18


def test_refine_matches_finer_grid(lshape4):
    r = refine_uniform(lshape4)
    m8 = build_lshape_mesh(8)
    assert r.n_vertices == m8.n_vertices
    assert r.n_triangles == m8.n_triangles
    assert len(r.interior_indices()) == len(m8.interior_indices())
    assert r.h == pytest.approx(lshape4.h / 2, rel=1e-15)
    assert abs(r.triangle_areas().sum() - 0.75) <= 1e-13
    # twice -> n=16 counts
    rr = refine_uniform(r)
    assert rr.n_vertices == 225
    assert rr.n_triangles == 384
    assert len(rr.interior_indices()) == 161


def test_refine_without_polygon_uses_edge_incidence(lshape4):
    bare = Mesh(lshape4.vertices.copy(), lshape4.triangles.copy(),
                boundary=lshape4.boundary.copy())
    r = refine_uniform(bare)
    ref = refine_uniform(lshape4)
    assert np.array_equal(r.boundary, ref.boundary)


def test_io_roundtrip_exact(lshape4):
    text = mesh_io(lshape4)
    m2 = parse(text)
    assert np.array_equal(m2.vertices, lshape4.vertices)
    assert np.array_equal(m2.triangles, lshape4.triangles)
    assert np.array_equal(m2.boundary, lshape4.boundary)
    assert text.endswith("\n")
    assert text.splitlines()[0] == "mesh-v1"
    # serialization is reproducible
    assert mesh_io(m2) == text


def test_parse_rejects_bad_header():
    with pytest.raises(MeshParseError, match="line 1"):
        parse("mesh-v2\n1 0\n0 0 1\n")


def test_parse_rejects_truncated_file():
    good = mesh_io(build_square_mesh(1))
    lines = good.splitlines()
    with pytest.raises(MeshParseError, match="truncated"):
        parse("\n".join(lines[:4]) + "\n")


def test_parse_rejects_bad_vertex_line():
    good = mesh_io(build_square_mesh(1))
    lines = good.splitlines()
    lines[2] = "0 nope 1"
    with pytest.raises(MeshParseError, match="line 3"):
        parse("\n".join(lines) + "\n")


def test_parse_rejects_bad_triangle_index():
    good = mesh_io(build_square_mesh(1))
    lines = good.splitlines()
    lines[-1] = "0 1 99"
    with pytest.raises(MeshError):
        parse("\n".join(lines) + "\n")


def test_clockwise_triangle_is_reoriented():
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    tris = np.array([[0, 2, 1]])  # clockwise
    with pytest.warns(UserWarning, match="reoriented"):
        m = Mesh(verts, tris, boundary=np.array([True, True, True]))
    assert m.triangle_areas()[0] > 0


def test_degenerate_triangle_rejected():
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    tris = np.array([[0, 1, 2]])
    with pytest.raises(MeshError, match="degenerate"):
        Mesh(verts, tris, boundary=np.array([True, True, True]))


def test_repeated_vertex_rejected():
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    tris = np.array([[0, 1, 1]])
    with pytest.raises(MeshError):
        Mesh(verts, tris, boundary=np.ones(3, dtype=bool))


def test_out_of_range_vertex_rejected():
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    tris = np.array([[0, 1, 3]])
    with pytest.raises(MeshError):
        Mesh(verts, tris, boundary=np.ones(3, dtype=bool))


def test_nonconforming_edge_rejected():
    # three triangles sharing the edge (0,1)
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 1.0], [0.5, -1.0],
                      [2.0, 1.0]])
    tris = np.array([[0, 1, 2], [0, 3, 1], [0, 1, 4]])
    with pytest.raises(MeshError, match="edge"):
        Mesh(verts, tris, boundary=np.ones(5, dtype=bool))


def test_vertices_are_read_only(lshape4):
    with pytest.raises(ValueError):
        lshape4.vertices[0, 0] = 42.0
    with pytest.raises(ValueError):
        lshape4.triangles[0, 0] = 0
