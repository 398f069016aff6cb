"""Explicit basis of the pointwise divergence-free subspace Z_{h,0}.

Four families of sparse columns over the global velocity DOFs:

* vertex functions: lowest normal moments on the incident edges weighted by
  h <n_e, n_{e,v}> / |e|, plus cell-gradient corrections;
* tangential edge functions: a single tangential moment;
* higher normal edge functions (k >= 2): one normal moment of degree >= 1
  plus cell-gradient corrections on the one or two incident cells;
* cell functions (k >= 3): a single complement moment m xperp.

The cell-gradient corrections cancel the boundary term of
int_K q div psi = int_dK q psi . n_K - int_K psi . grad q for every
non-constant q, using edge restrictions of q only (no quadrature).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps

from . import polybasis as pb
from .assembly import DofMap, SparseSystem, build_dofmap
from .mesh import Mesh
from .vem_local import CellGeometry, dof_layout


class DivergenceCheckError(RuntimeError):
    """A constructed column is not divergence free."""


class CompatibilityError(ValueError):
    """Boundary data with nonzero net flux."""


def dim_Z(mesh: Mesh, k: int) -> int:
    return (
        mesh.n_interior_vertices
        + (2 * k - 1) * mesh.n_interior_edges
        + (k - 1) * (k - 2) // 2 * mesh.n_cells
    )


class _CellCorrections:
    """Per cell and local edge: the map from the k normal moments of that edge
    to the cell-gradient DOFs that cancel its boundary divergence moments.

    corr[c][i] has shape (n_mono(k-1) - 1, k): entry [b-1, j] is
    (h_K / |K|) sigma_{K,e} |e| R_e[b, j], where R_e holds the coefficients of
    the restriction m_b|_e over the edge monomials q_j.
    """

    def __init__(self, mesh: Mesh, k: int):
        self.mesh = mesh
        self.k = k
        self._corr: dict[int, list[np.ndarray]] = {}
        self._local: dict[int, dict[int, int]] = {}

    def local_edge(self, c: int, e: int) -> int:
        table = self._local.get(c)
        if table is None:
            table = self._local[c] = {int(g): i for i, g in enumerate(self.mesh.cell_edges[c])}
        return table[e]

    def get(self, c: int, e: int) -> np.ndarray:
        corr = self._corr.get(c)
        if corr is None:
            geo = CellGeometry.from_mesh(self.mesh, c)
            basis = geo.basis(self.k - 1)
            length, _, _ = geo.edge_frames()
            corr = []
            for i in range(geo.n_edges):
                R = pb.restriction_matrix(basis, geo.edge(i, self.k - 1), self.k - 1)
                corr.append((geo.diameter / geo.area) * geo.sign[i] * length[i] * R[1:])
            self._corr[c] = corr
        return corr[self.local_edge(c, e)]


@dataclass
class Column:
    rows: np.ndarray
    vals: np.ndarray
    tag: tuple

    def dense(self, n: int) -> np.ndarray:
        out = np.zeros(n)
        np.add.at(out, self.rows, self.vals)
        return out


def _cells_of_edge(mesh: Mesh, e: int):
    return [int(c) for c in mesh.edge_cells[e] if c >= 0]


def _add_corrections(entries: dict, dm: DofMap, corr: _CellCorrections, c: int,
                     e: int, w: np.ndarray) -> None:
    """Accumulate cell-gradient DOFs of cell c cancelling normal moments w on e."""
    if dm.k < 2:
        return
    d = corr.get(c, e) @ w
    for b, val in enumerate(d):
        g = int(dm.cell_dofs[c, b])
        entries[g] = entries.get(g, 0.0) + val


def _column(entries: dict, tag) -> Column:
    rows = np.fromiter(entries.keys(), dtype=int, count=len(entries))
    vals = np.fromiter(entries.values(), dtype=float, count=len(entries))
    order = np.argsort(rows)
    return Column(rows[order], vals[order], tag)


def psi_vertex(dm: DofMap, v: int, h: float | None = None,
               corr: _CellCorrections | None = None) -> Column:
    """Vertex function psi_v (boundary vertices allowed, used by the lifting)."""
    mesh = dm.mesh
    if not 0 <= v < mesh.n_vertices:
        raise IndexError(f"vertex {v} out of range")
    h = mesh.h if h is None else h
    corr = corr or _CellCorrections(mesh, dm.k)
    entries: dict[int, float] = {}
    w = np.zeros(dm.k)
    for e in mesh.vertex_edges()[v]:
        a, b = mesh.edges[e]
        other = b if a == v else a
        d = mesh.points[other] - mesh.points[v]
        n_ev = np.array([-d[1], d[0]]) / np.linalg.norm(d)  # +90 deg: CCW about v
        weight = h * float(mesh.edge_normal[e] @ n_ev) / mesh.edge_length[e]
        g = int(dm.normal(e, 0))
        entries[g] = entries.get(g, 0.0) + weight
        w[0] = weight
        for c in _cells_of_edge(mesh, e):
            _add_corrections(entries, dm, corr, c, e, w)
    return _column(entries, ("vertex", v))


def psi_edge_tangential(dm: DofMap, e: int, j: int) -> Column:
    if not 0 <= j < dm.k:
        raise ValueError("tangential mode out of range")
    return Column(np.array([dm.tangential(e, j)]), np.array([1.0]), ("edge_t", e, j))


def psi_edge_normal(dm: DofMap, e: int, j: int, corr: _CellCorrections | None = None) -> Column:
    """Higher normal edge function; j = 0 carries net flux and is rejected."""
    if dm.k < 2:
        raise ValueError("normal edge functions need k >= 2")
    if not 1 <= j < dm.k:
        raise ValueError("normal mode must satisfy 1 <= j < k")
    corr = corr or _CellCorrections(dm.mesh, dm.k)
    entries = {int(dm.normal(e, j)): 1.0}
    w = np.zeros(dm.k)
    w[j] = 1.0
    for c in _cells_of_edge(dm.mesh, e):
        _add_corrections(entries, dm, corr, c, e, w)
    return _column(entries, ("edge_n", e, j))


def psi_cell(dm: DofMap, c: int, g: int) -> Column:
    if dm.k < 3:
        raise ValueError("cell functions need k >= 3")
    lay = dof_layout(len(dm.mesh.cell_edges[c]), dm.k)
    if not 0 <= g < lay.n_perp:
        raise ValueError("complement mode out of range")
    row = dm.cell_dofs[c, lay.n_grad + g]
    return Column(np.array([row]), np.array([1.0]), ("cell", c, g))


@dataclass
class DivFreeBasis:
    N: sps.csc_matrix  # (n_dof, dim_Z)
    column_tags: list = field(repr=False)
    dofmap: DofMap = field(repr=False)

    @property
    def dim_Z(self) -> int:
        return self.N.shape[1]


def columns(dm: DofMap, h: float | None = None) -> list[Column]:
    mesh, k = dm.mesh, dm.k
    corr = _CellCorrections(mesh, k)
    cols = [psi_vertex(dm, v, h, corr) for v in np.flatnonzero(~mesh.vertex_is_boundary)]
    interior_edges = np.flatnonzero(~mesh.edge_is_boundary)
    cols += [psi_edge_tangential(dm, e, j) for e in interior_edges for j in range(k)]
    cols += [psi_edge_normal(dm, e, j, corr) for e in interior_edges for j in range(1, k)]
    if k >= 3:
        n_perp = pb.n_perp_dofs(k)
        cols += [psi_cell(dm, c, g) for c in range(mesh.n_cells) for g in range(n_perp)]
    return cols


def build_basis(mesh_or_system, k: int | None = None, verify_tol: float | None = 1e-10,
                h: float | None = None) -> DivFreeBasis:
    """Assemble all columns into N; optionally verify B^T psi = 0 column by column.

    Pass a :class:`SparseSystem` to enable the verification pass.
    """
    if isinstance(mesh_or_system, SparseSystem):
        system = mesh_or_system
        dm = system.dofmap
    else:
        system = None
        dm = build_dofmap(mesh_or_system, k)
    cols = columns(dm, h)
    lens = [len(c.rows) for c in cols]
    rows = np.concatenate([c.rows for c in cols]) if cols else np.zeros(0, int)
    vals = np.concatenate([c.vals for c in cols]) if cols else np.zeros(0)
    colidx = np.repeat(np.arange(len(cols)), lens)
    N = sps.csc_matrix((vals, (rows, colidx)), shape=(dm.n_dof, len(cols)))
    basis = DivFreeBasis(N, [c.tag for c in cols], dm)
    if system is not None and verify_tol is not None:
        worst, j = divergence_residual(system, N)
        if worst > verify_tol:
            raise DivergenceCheckError(f"column {j} {basis.column_tags[j]}: |B^T psi| = {worst:.3e}")
    return basis


def divergence_residual(system: SparseSystem, N) -> tuple[float, int]:
    """Max over columns of ||B^T psi||_inf / max(1, ||psi||_inf), and its column."""
    if N.shape[1] == 0:
        return 0.0, -1
    R = abs(sps.csc_matrix(system.B.T @ N))
    col_max = R.max(axis=0).toarray().ravel()
    scale = np.maximum(1.0, abs(sps.csc_matrix(N)).max(axis=0).toarray().ravel())
    rel = col_max / scale
    j = int(np.argmax(rel))
    return float(rel[j]), j


# --------------------------------------------------------------------------
# Boundary lifting
# --------------------------------------------------------------------------

@dataclass
class Lifting:
    u_tilde: np.ndarray
    boundary_vertices: np.ndarray  # v_1..v_N, CCW
    boundary_edges: np.ndarray  # e_1..e_N, e_i = (v_i, v_{i+1})
    flux: np.ndarray  # int_{e_i} g . n_{e_i}
    C1: np.ndarray  # per boundary vertex
    C2: np.ndarray  # (N, k): tangential moments
    C3: np.ndarray  # (N, k): normal moments; column 0 unused


def boundary_moments(mesh: Mesh, k: int, g, edges, n_points: int | None = None):
    """Scaled moments (1/|e|) int_e g . n_e q_j and g . t_e q_j on the given edges."""
    n_points = n_points or k + 6
    mom_n = np.zeros((len(edges), k))
    mom_t = np.zeros((len(edges), k))
    for r, e in enumerate(edges):
        a, b = mesh.points[mesh.edges[e]]
        eb = pb.EdgeBasis(a, b, k - 1)
        pts, w = pb.gauss_edge(a, b, n_points)
        vals = np.asarray(g(pts[:, 0], pts[:, 1]), float).reshape(2, -1) * np.ones(len(pts))
        Q = eb.eval(pts) * w[:, None] / eb.length
        mom_n[r] = (mesh.edge_normal[e] @ vals) @ Q
        mom_t[r] = (mesh.edge_tangent[e] @ vals) @ Q
    return mom_n, mom_t


def build_lifting(system_or_dofmap, g, flux_tol: float = 1e-10, h: float | None = None) -> Lifting:
    """Divergence-free function matching the boundary moments of g.

    u_tilde = sum_v (C1_v / h) psi_v + sum C2 psi^t + sum C3 psi^n over the
    boundary; the 1/h undoes the h built into psi_v so that the lowest normal
    moment on e_i equals (-C1_{v_i} + C1_{v_{i+1}}) / |e_i|.
    """
    dm = system_or_dofmap.dofmap if isinstance(system_or_dofmap, SparseSystem) else system_or_dofmap
    mesh, k = dm.mesh, dm.k
    h = mesh.h if h is None else h
    verts, edges = mesh.boundary_loop()
    mom_n, mom_t = boundary_moments(mesh, k, g, edges)
    flux = mom_n[:, 0] * mesh.edge_length[edges]
    total = flux.sum()
    if abs(total) > flux_tol:
        raise CompatibilityError(f"net boundary flux {total:.3e} exceeds {flux_tol:.1e}")
    C1 = -np.cumsum(flux[::-1])[::-1]
    C2 = mom_t
    C3 = mom_n.copy()
    C3[:, 0] = 0.0

    corr = _CellCorrections(mesh, k)
    u = np.zeros(dm.n_dof)
    for v, c1 in zip(verts, C1):
        if c1 != 0.0:
            col = psi_vertex(dm, int(v), h, corr)
            np.add.at(u, col.rows, (c1 / h) * col.vals)
    for r, e in enumerate(edges):
        for j in range(k):
            u[dm.tangential(e, j)] += C2[r, j]
        for j in range(1, k):
            if C3[r, j] != 0.0:
                col = psi_edge_normal(dm, int(e), j, corr)
                np.add.at(u, col.rows, C3[r, j] * col.vals)
    return Lifting(u, verts, edges, flux, C1, C2, C3)


def dump_basis(basis: DivFreeBasis, path) -> None:
    from .assembly import dump_coo

    dump_coo(basis.N, path)
