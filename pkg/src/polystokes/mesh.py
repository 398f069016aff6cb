"""Convex polygonal meshes of the unit square.

A :class:`Mesh` is immutable after construction. Edges carry a fixed global
orientation: interior edges run from the smaller to the larger vertex index,
boundary edges run counterclockwise around the domain. The unit normal of an
edge is its tangent rotated by -90 degrees, so boundary normals point outward.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import Voronoi, cKDTree


class MeshError(ValueError):
    """Raised for meshes that violate topology, orientation or convexity."""


def _rotate_cw(v):
    return np.stack([v[..., 1], -v[..., 0]], axis=-1)


def polygon_area_centroid(xy: np.ndarray) -> tuple[float, np.ndarray]:
    """Signed area and area centroid of a polygon by the shoelace formulas."""
    x, y = xy[:, 0], xy[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = 0.5 * cross.sum()
    cx = ((x + xn) * cross).sum() / (6.0 * area)
    cy = ((y + yn) * cross).sum() / (6.0 * area)
    return float(area), np.array([cx, cy])


def polygon_diameter(xy: np.ndarray) -> float:
    d = xy[:, None, :] - xy[None, :, :]
    return float(np.sqrt((d**2).sum(-1)).max())


@dataclass(frozen=True, eq=False)
class Mesh:
    """Polygonal mesh with derived edge topology.

    Use :func:`build_topology` (or one of the generators) rather than the
    constructor.
    """

    points: np.ndarray  # (NV, 2)
    cells: tuple  # tuple of int arrays, CCW vertex ids
    edges: np.ndarray  # (NE, 2) v0, v1
    edge_cells: np.ndarray  # (NE, 2); column 1 is -1 on boundary edges
    edge_tangent: np.ndarray  # (NE, 2)
    edge_normal: np.ndarray  # (NE, 2)
    edge_length: np.ndarray
    edge_midpoint: np.ndarray
    edge_is_boundary: np.ndarray
    vertex_is_boundary: np.ndarray
    cell_edges: tuple  # per cell: edge ids in CCW order, edge i joins local vertex i and i+1
    cell_edge_sign: tuple  # per cell: sigma = n_K . n_e in {+1, -1}
    cell_area: np.ndarray
    cell_centroid: np.ndarray
    cell_diameter: np.ndarray
    _extra: dict = field(default_factory=dict, repr=False)

    # counts ------------------------------------------------------------
    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def n_vertices(self) -> int:
        return len(self.points)

    @property
    def n_interior_edges(self) -> int:
        return int((~self.edge_is_boundary).sum())

    @property
    def n_boundary_edges(self) -> int:
        return int(self.edge_is_boundary.sum())

    @property
    def n_interior_vertices(self) -> int:
        return int((~self.vertex_is_boundary).sum())

    @property
    def n_boundary_vertices(self) -> int:
        return int(self.vertex_is_boundary.sum())

    @property
    def h(self) -> float:
        """Largest cell diameter."""
        return float(self.cell_diameter.max())

    def counts(self) -> dict:
        return {
            "N_P": self.n_cells,
            "N_E": self.n_edges,
            "N_Ei": self.n_interior_edges,
            "N_Eb": self.n_boundary_edges,
            "N_V": self.n_vertices,
            "N_Vi": self.n_interior_vertices,
            "N_Vb": self.n_boundary_vertices,
        }

    def euler_characteristic(self) -> int:
        """N_P - N_Ei + N_Vi; equals 1 for a simply connected tiling."""
        return self.n_cells - self.n_interior_edges + self.n_interior_vertices

    def cell_xy(self, c: int) -> np.ndarray:
        return self.points[self.cells[c]]

    # derived adjacency -------------------------------------------------
    def vertex_edges(self) -> list[np.ndarray]:
        """Incident edge ids of every vertex."""
        if "vertex_edges" not in self._extra:
            buckets: list[list[int]] = [[] for _ in range(self.n_vertices)]
            for e, (a, b) in enumerate(self.edges):
                buckets[a].append(e)
                buckets[b].append(e)
            self._extra["vertex_edges"] = [np.array(b, dtype=int) for b in buckets]
        return self._extra["vertex_edges"]

    def boundary_loop(self) -> tuple[np.ndarray, np.ndarray]:
        """Boundary vertices v_1..v_N and edges e_1..e_N in CCW order.

        Edge e_i joins v_i and v_{i+1}; the loop starts at the boundary vertex
        with the smallest index.
        """
        if "boundary_loop" in self._extra:
            return self._extra["boundary_loop"]
        bnd = np.flatnonzero(self.edge_is_boundary)
        nxt = {int(self.edges[e, 0]): int(e) for e in bnd}
        start = int(self.edges[bnd, 0].min())
        verts, edges = [start], []
        v = start
        while True:
            e = nxt[v]
            edges.append(e)
            v = int(self.edges[e, 1])
            if v == start:
                break
            verts.append(v)
            if len(verts) > len(bnd):
                raise MeshError("boundary is not a single closed loop")
        out = (np.array(verts), np.array(edges))
        self._extra["boundary_loop"] = out
        return out

    def check_invariants(self, atol: float = 1e-10) -> None:
        """Raise MeshError if a global mesh invariant fails."""
        if self.euler_characteristic() != 1:
            raise MeshError(f"Euler formula violated: {self.euler_characteristic()} != 1")
        if self.n_boundary_edges != self.n_boundary_vertices:
            raise MeshError("boundary is not a single closed polygon")
        domain_area = abs(polygon_area_centroid(self.points[self.boundary_loop()[0]])[0])
        if abs(self.cell_area.sum() - domain_area) > atol * domain_area:
            raise MeshError("cell areas do not sum to the domain area")


def build_topology(points, cells, convex_tol: float = 1e-12) -> Mesh:
    """Derive edges, orientations and boundary flags from cell connectivity.

    Raises MeshError on clockwise or non-convex cells, repeated vertices,
    edges shared by more than two cells, and vertices used by no cell.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != 2:
        raise MeshError("points must have shape (n, 2)")
    if not np.all(np.isfinite(points)):
        raise MeshError("non-finite coordinates")
    nv = len(points)
    cells = tuple(np.asarray(c, dtype=int) for c in cells)

    areas = np.empty(len(cells))
    centroids = np.empty((len(cells), 2))
    diams = np.empty(len(cells))
    edge_map: dict[tuple[int, int], list[tuple[int, int, int]]] = {}
    used = np.zeros(nv, dtype=bool)
    for c, ids in enumerate(cells):
        if len(ids) < 3:
            raise MeshError(f"cell {c} has fewer than 3 vertices")
        if ids.min() < 0 or ids.max() >= nv:
            raise MeshError(f"cell {c}: vertex index out of range")
        if len(set(ids.tolist())) != len(ids):
            raise MeshError(f"cell {c} has repeated vertices")
        used[ids] = True
        xy = points[ids]
        area, cen = polygon_area_centroid(xy)
        if area <= 0:
            raise MeshError(f"cell {c} has clockwise orientation")
        diam = polygon_diameter(xy)
        d = np.roll(xy, -1, axis=0) - xy
        cross = d[:, 0] * np.roll(d, -1, axis=0)[:, 1] - d[:, 1] * np.roll(d, -1, axis=0)[:, 0]
        if np.any(cross < -convex_tol * diam**2):
            raise MeshError(f"cell {c} is not convex")
        areas[c], centroids[c], diams[c] = area, cen, diam
        for i in range(len(ids)):
            a, b = int(ids[i]), int(ids[(i + 1) % len(ids)])
            edge_map.setdefault((min(a, b), max(a, b)), []).append((c, i, a))
    if not used.all():
        raise MeshError(f"dangling vertex {int(np.flatnonzero(~used)[0])}")

    ne = len(edge_map)
    edges = np.empty((ne, 2), dtype=int)
    edge_cells = np.full((ne, 2), -1, dtype=int)
    is_bnd = np.zeros(ne, dtype=bool)
    cell_edges = [np.empty(len(ids), dtype=int) for ids in cells]
    cell_sign = [np.empty(len(ids), dtype=float) for ids in cells]
    for e, (key, uses) in enumerate(sorted(edge_map.items())):
        if len(uses) > 2:
            raise MeshError(f"non-manifold edge {key}: shared by {len(uses)} cells")
        if len(uses) == 2 and uses[0][2] == uses[1][2]:
            raise MeshError(f"inconsistent orientation across edge {key}")
        if len(uses) == 1:
            c, i, a = uses[0]
            is_bnd[e] = True
            edges[e] = (a, key[0] + key[1] - a)
        else:
            edges[e] = key
        for j, (c, i, a) in enumerate(uses):
            edge_cells[e, j] = c
            cell_edges[c][i] = e
            cell_sign[c][i] = 1.0 if a == edges[e, 0] else -1.0

    vec = points[edges[:, 1]] - points[edges[:, 0]]
    length = np.sqrt((vec**2).sum(1))
    tangent = vec / length[:, None]
    vb = np.zeros(nv, dtype=bool)
    vb[edges[is_bnd].ravel()] = True
    return Mesh(
        points=points,
        cells=cells,
        edges=edges,
        edge_cells=edge_cells,
        edge_tangent=tangent,
        edge_normal=_rotate_cw(tangent),
        edge_length=length,
        edge_midpoint=0.5 * (points[edges[:, 0]] + points[edges[:, 1]]),
        edge_is_boundary=is_bnd,
        vertex_is_boundary=vb,
        cell_edges=tuple(cell_edges),
        cell_edge_sign=tuple(cell_sign),
        cell_area=areas,
        cell_centroid=centroids,
        cell_diameter=diams,
    )


def generate_uniform_square_mesh(n: int) -> Mesh:
    """n x n axis-aligned squares of side 1/n tiling the unit square."""
    if n < 1:
        raise ValueError("n must be positive")
    t = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(t, t)  # row j is y = t[j]
    points = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)
    cells = [
        [idx[j, i], idx[j, i + 1], idx[j + 1, i + 1], idx[j + 1, i]]
        for j in range(n)
        for i in range(n)
    ]
    return build_topology(points, cells)


# --------------------------------------------------------------------------
# Voronoi meshes
# --------------------------------------------------------------------------

def _reflect(seeds, band):
    """Mirror images of the seeds lying within ``band`` of each side."""
    x, y = seeds[:, 0], seeds[:, 1]
    parts = [seeds]
    for mask, img in (
        (x < band, np.column_stack([-x, y])),
        (x > 1.0 - band, np.column_stack([2.0 - x, y])),
        (y < band, np.column_stack([x, -y])),
        (y > 1.0 - band, np.column_stack([x, 2.0 - y])),
    ):
        parts.append(img[mask])
    return np.vstack(parts)


def _clipped_cells(seeds):
    """Voronoi cells of seeds clipped to the unit square.

    Mirroring the seeds across the sides makes the square boundary a union of
    Voronoi edges, so the cells of the original seeds are exactly the clipped
    cells. Only seeds near a side are mirrored; the band is widened until no
    cell leaks outside the square. Returns (vertices, owner, vertex ids,
    lengths) with each region sorted counterclockwise around its seed.
    """
    n = len(seeds)
    band = 2.0 / np.sqrt(n)
    while True:
        vor = Voronoi(_reflect(seeds, band))
        regions = [vor.regions[vor.point_region[i]] for i in range(n)]
        ok = all(len(r) >= 3 and -1 not in r for r in regions)
        if ok:
            vid = np.concatenate(regions)
            v = vor.vertices[vid]
            ok = bool(np.all(v > -1e-9) and np.all(v < 1.0 + 1e-9))
        if ok or band >= 1.0:
            break
        band *= 2.0
    if not ok:
        raise MeshError("unbounded Voronoi region")
    lens = np.array([len(r) for r in regions])
    owner = np.repeat(np.arange(n), lens)
    rel = vor.vertices[vid] - seeds[owner]
    ang = np.arctan2(rel[:, 1], rel[:, 0])
    order = np.lexsort((ang, owner))
    return vor.vertices, owner, vid[order], lens


def _lloyd_step(seeds):
    verts, owner, vid, lens = _clipped_cells(seeds)
    n = len(seeds)
    starts = np.concatenate([[0], np.cumsum(lens)[:-1]])
    pos = np.arange(len(vid))
    nxt = pos + 1
    last = starts + lens - 1
    nxt[last] = starts
    p, q = verts[vid], verts[vid[nxt]]
    cross = p[:, 0] * q[:, 1] - q[:, 0] * p[:, 1]
    area = 0.5 * np.bincount(owner, cross, minlength=n)
    cx = np.bincount(owner, (p[:, 0] + q[:, 0]) * cross, minlength=n) / (6.0 * area)
    cy = np.bincount(owner, (p[:, 1] + q[:, 1]) * cross, minlength=n) / (6.0 * area)
    return np.column_stack([cx, cy])


def _mesh_from_seeds(seeds, merge_tol):
    verts, owner, vid, lens = _clipped_cells(seeds)
    used = np.unique(vid)
    xy = verts[used].copy()
    for d in range(2):
        xy[np.abs(xy[:, d]) < merge_tol, d] = 0.0
        xy[np.abs(xy[:, d] - 1.0) < merge_tol, d] = 1.0
    if np.any(xy < -merge_tol) or np.any(xy > 1 + merge_tol):
        raise MeshError("Voronoi vertex outside the square")
    # merge near-coincident vertices (cocircular seed quadruples)
    rep = np.arange(len(xy))
    for a, b in sorted(cKDTree(xy).query_pairs(merge_tol)):
        ra, rb = rep[a], rep[b]
        while rep[ra] != ra:
            ra = rep[ra]
        while rep[rb] != rb:
            rb = rep[rb]
        if ra != rb:
            rep[max(ra, rb)] = min(ra, rb)
    for i in range(len(rep)):
        r = i
        while rep[r] != r:
            r = rep[r]
        rep[i] = r
    keep, new_id = np.unique(rep, return_inverse=True)
    points = xy[keep]
    remap = np.full(len(verts), -1)
    remap[used] = new_id
    cells = []
    start = 0
    for n_c in lens:
        ids = remap[vid[start:start + n_c]]
        start += n_c
        ids = ids[np.r_[True, ids[1:] != ids[:-1]]]
        if len(ids) > 1 and ids[0] == ids[-1]:
            ids = ids[:-1]
        cells.append(ids)
    return build_topology(points, cells)


def generate_voronoi_mesh(n_seeds: int, lloyd_iters: int = 100, rng_seed: int = 0,
                          max_retries: int = 5) -> Mesh:
    """Centroidal-Voronoi-like mesh of the unit square.

    Seeds are drawn uniformly with ``numpy.random.default_rng(rng_seed)`` and
    moved to their clipped cell centroids ``lloyd_iters`` times. A degenerate
    final configuration is retried after a tiny deterministic perturbation.
    """
    if n_seeds < 1:
        raise ValueError("n_seeds must be positive")
    if n_seeds == 1:
        return build_topology([[0, 0], [1, 0], [1, 1], [0, 1]], [[0, 1, 2, 3]])
    rng = np.random.default_rng(rng_seed)
    seeds = rng.random((n_seeds, 2))
    for _ in range(lloyd_iters):
        seeds = _lloyd_step(seeds)
    merge_tol = 1e-10
    for attempt in range(max_retries + 1):
        try:
            mesh = _mesh_from_seeds(seeds, merge_tol)
            mesh.check_invariants()
            return mesh
        except MeshError:
            if attempt == max_retries:
                raise
            jitter = 1e-6 / np.sqrt(n_seeds)
            seeds = np.clip(seeds + jitter * (rng.random(seeds.shape) - 0.5), 1e-9, 1 - 1e-9)
    raise AssertionError("unreachable")


# --------------------------------------------------------------------------
# Regularity
# --------------------------------------------------------------------------

@dataclass
class RegularityReport:
    rho: float
    min_edge_ratio: float  # min over cells of min h_e / h_K
    worst_cell: int
    failing_cells: list
    nonconvex_cells: list

    @property
    def passed(self) -> bool:
        return not self.failing_cells and not self.nonconvex_cells


def validate_regularity(mesh: Mesh, rho: float, convex_tol: float = 1e-12) -> RegularityReport:
    """Check h_e >= rho h_K and convexity cell by cell."""
    ratios = np.empty(mesh.n_cells)
    nonconvex = []
    for c in range(mesh.n_cells):
        ratios[c] = mesh.edge_length[mesh.cell_edges[c]].min() / mesh.cell_diameter[c]
        xy = mesh.cell_xy(c)
        d = np.roll(xy, -1, axis=0) - xy
        dn = np.roll(d, -1, axis=0)
        if np.any(d[:, 0] * dn[:, 1] - d[:, 1] * dn[:, 0] < -convex_tol * mesh.cell_diameter[c] ** 2):
            nonconvex.append(c)
    worst = int(np.argmin(ratios))
    return RegularityReport(
        rho=rho,
        min_edge_ratio=float(ratios[worst]),
        worst_cell=worst,
        failing_cells=np.flatnonzero(ratios < rho).tolist(),
        nonconvex_cells=nonconvex,
    )


# --------------------------------------------------------------------------
# Text I/O
# --------------------------------------------------------------------------

def write_mesh(mesh: Mesh, path) -> None:
    """Write ``NV NC``, then NV coordinate lines, then NC cell lines."""
    with open(path, "w") as fh:
        fh.write(f"# polystokes mesh: {mesh.n_vertices} vertices, {mesh.n_cells} cells\n")
        fh.write(f"{mesh.n_vertices} {mesh.n_cells}\n")
        for x, y in mesh.points:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        for ids in mesh.cells:
            fh.write(f"{len(ids)} " + " ".join(str(int(i)) for i in ids) + "\n")


def read_mesh(path: str | os.PathLike) -> Mesh:
    lines = []
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if line:
                lines.append(line.split())
    try:
        nv, nc = int(lines[0][0]), int(lines[0][1])
        if len(lines) < 1 + nv + nc:
            raise MeshError("truncated mesh file")
        points = np.array([[float(t) for t in ln[:2]] for ln in lines[1:1 + nv]])
        cells = []
        for ln in lines[1 + nv:1 + nv + nc]:
            m = int(ln[0])
            ids = [int(t) for t in ln[1:]]
            if len(ids) != m:
                raise MeshError(f"cell line declares {m} vertices, has {len(ids)}")
            cells.append(ids)
    except (IndexError, ValueError) as exc:
        if isinstance(exc, MeshError):
            raise
        raise MeshError(f"malformed mesh file: {exc}") from exc
    if points.shape != (nv, 2):
        raise MeshError("malformed coordinate block")
    for c, ids in enumerate(cells):
        if min(ids) < 0 or max(ids) >= nv:
            raise MeshError(f"cell {c}: vertex index out of range")
    return build_topology(points, cells)
