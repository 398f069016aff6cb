import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from polystokes.mesh import (MeshError, build_topology, generate_uniform_square_mesh,
                             generate_voronoi_mesh, read_mesh, validate_regularity, write_mesh)
from polystokes import mesh as meshmod

from conftest import uniform, voronoi


def test_single_cell():
    m = build_topology([[0, 0], [1, 0], [1, 1], [0, 1]], [[0, 1, 2, 3]])
    assert (m.n_cells, m.n_edges, m.n_interior_edges, m.n_interior_vertices) == (1, 4, 0, 0)
    assert m.euler_characteristic() == 1


@pytest.mark.parametrize("n,counts", [(1, (1, 0, 0)), (2, (4, 4, 1)), (4, (16, 24, 9)),
                                      (8, (64, 112, 49))])
def test_uniform_counts(n, counts):
    m = generate_uniform_square_mesh(n)
    assert (m.n_cells, m.n_interior_edges, m.n_interior_vertices) == counts
    assert m.h == pytest.approx(np.sqrt(2) / n)
    m.check_invariants()


def test_edge_orientation_conventions():
    m = uniform(4)
    interior = ~m.edge_is_boundary
    assert np.all(m.edges[interior, 0] < m.edges[interior, 1])
    # n_e is t_e rotated by -90 degrees
    t, n = m.edge_tangent, m.edge_normal
    assert np.allclose(n, np.column_stack([t[:, 1], -t[:, 0]]))
    # boundary normals point out of the unit square
    mid = m.edge_midpoint[m.edge_is_boundary]
    out = mid + 1e-3 * n[m.edge_is_boundary]
    assert np.all(np.any((out < 0) | (out > 1), axis=1))


def test_sigma_partition_on_interior_edges():
    m = voronoi(64)
    seen = {}
    for c in range(m.n_cells):
        for e, s in zip(m.cell_edges[c], m.cell_edge_sign[c]):
            seen.setdefault(int(e), []).append(s)
    for e, signs in seen.items():
        if m.edge_is_boundary[e]:
            assert signs == [1.0]
        else:
            assert sorted(signs) == [-1.0, 1.0]


def test_boundary_loop_is_ccw_and_closed():
    m = voronoi(16)
    verts, edges = m.boundary_loop()
    assert len(verts) == len(edges) == m.n_boundary_edges
    for i, e in enumerate(edges):
        assert m.edges[e, 0] == verts[i]
        assert m.edges[e, 1] == verts[(i + 1) % len(verts)]
    xy = m.points[verts]
    area = 0.5 * np.sum(xy[:, 0] * np.roll(xy[:, 1], -1) - np.roll(xy[:, 0], -1) * xy[:, 1])
    assert area == pytest.approx(1.0)


@pytest.mark.parametrize("cells,msg", [
    ([[0, 3, 2, 1]], "clockwise"),
    ([[0, 1, 2, 1]], "repeated"),
    ([[0, 1, 4]], "out of range"),
])
def test_topology_errors(cells, msg):
    pts = [[0, 0], [1, 0], [1, 1], [0, 1]]
    with pytest.raises(MeshError, match=msg):
        build_topology(pts, cells)


def test_nonconvex_rejected():
    pts = [[0, 0], [2, 0], [1, 0.2], [2, 2], [0, 2]]
    with pytest.raises(MeshError, match="convex"):
        build_topology(pts, [[0, 1, 2, 3, 4]])


def test_non_manifold_edge():
    pts = [[0, 0], [1, 0], [0.5, 1], [0.5, -1], [1.5, 0.5]]
    with pytest.raises(MeshError, match="non-manifold|orientation"):
        build_topology(pts, [[0, 1, 2], [0, 3, 1], [1, 0, 2]])


def test_dangling_vertex():
    with pytest.raises(MeshError, match="dangling"):
        build_topology([[0, 0], [1, 0], [0, 1], [5, 5]], [[0, 1, 2]])


def test_voronoi_single_seed():
    m = generate_voronoi_mesh(1)
    assert m.n_cells == 1 and m.n_vertices == 4


def test_voronoi_small_golden():
    m = voronoi(16)
    m.check_invariants()
    assert m.n_cells == 16
    assert m.euler_characteristic() == 1
    assert (m.n_interior_edges, m.n_interior_vertices) == (33, 18)


def test_voronoi_is_deterministic():
    a = generate_voronoi_mesh(40, lloyd_iters=10, rng_seed=7)
    b = generate_voronoi_mesh(40, lloyd_iters=10, rng_seed=7)
    assert np.array_equal(a.points, b.points)
    assert all(np.array_equal(x, y) for x, y in zip(a.cells, b.cells))


@settings(max_examples=15, deadline=None)
@given(n=st.integers(2, 120), seed=st.integers(0, 10_000), iters=st.integers(0, 5))
def test_voronoi_invariants(n, seed, iters):
    m = generate_voronoi_mesh(n, lloyd_iters=iters, rng_seed=seed)
    m.check_invariants()
    assert m.n_cells == n
    assert m.n_boundary_edges == m.n_boundary_vertices
    assert abs(m.cell_area.sum() - 1.0) < 1e-10
    assert not validate_regularity(m, 0.0).nonconvex_cells


# Independent oracle: Sutherland-Hodgman clipping of the square by bisectors.
def _clip(poly, a, b):
    """Keep the part of poly with a . x <= b."""
    out = []
    for i in range(len(poly)):
        p, q = poly[i], poly[(i + 1) % len(poly)]
        fp, fq = a @ p - b, a @ q - b
        if fp <= 0:
            out.append(p)
        if fp * fq < 0:
            out.append(p + fp / (fp - fq) * (q - p))
    return out


def _halfplane_cell(seeds, i):
    poly = [np.array(v, float) for v in [(0, 0), (1, 0), (1, 1), (0, 1)]]
    s = seeds[i]
    for j, t in enumerate(seeds):
        if j != i:
            poly = _clip(poly, t - s, 0.5 * (t @ t - s @ s))
    xy = np.array(poly)
    return 0.5 * np.sum(xy[:, 0] * np.roll(xy[:, 1], -1) - np.roll(xy[:, 0], -1) * xy[:, 1])


@pytest.mark.parametrize("n,seed", [(5, 0), (12, 1), (30, 2)])
def test_voronoi_cells_match_halfplane_clipping(n, seed):
    seeds = np.random.default_rng(seed).random((n, 2))
    verts, owner, vid, lens = meshmod._clipped_cells(seeds)
    start = 0
    for i, m in enumerate(lens):
        xy = verts[vid[start:start + m]]
        start += m
        area = 0.5 * np.sum(xy[:, 0] * np.roll(xy[:, 1], -1) - np.roll(xy[:, 0], -1) * xy[:, 1])
        assert area == pytest.approx(_halfplane_cell(seeds, i), abs=1e-12)


def test_regularity_report():
    r = validate_regularity(uniform(4), 0.5)
    assert r.passed and r.min_edge_ratio == pytest.approx(1 / np.sqrt(2))
    pts = [[0, 0], [1, 0], [1, 1], [0.5, 1.05], [0.45, 1.05], [0, 1]]
    m = build_topology(pts, [[0, 1, 2, 3, 4, 5]])
    r = validate_regularity(m, 0.1)
    assert not r.passed and r.failing_cells == [0]


def test_mesh_roundtrip(tmp_path):
    m = voronoi(16)
    path = tmp_path / "m.txt"
    write_mesh(m, path)
    m2 = read_mesh(path)
    assert np.array_equal(m.points, m2.points)
    assert all(np.array_equal(a, b) for a, b in zip(m.cells, m2.cells))


def test_read_mesh_errors(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("4 1\n0 0\n1 0\n1 1\n")
    with pytest.raises(MeshError, match="truncated"):
        read_mesh(p)
    p.write_text("# clockwise square\n4 1\n0 0\n1 0\n1 1\n0 1\n4 0 3 2 1\n")
    with pytest.raises(MeshError, match="orientation"):
        read_mesh(p)
    p.write_text("5 3\n0 0\n1 0\n0.5 1\n0.5 -1\n1.5 0.5\n3 0 1 2\n3 0 3 1\n3 0 1 4\n")
    with pytest.raises(MeshError, match="non-manifold"):
        read_mesh(p)
