"""Global DOF numbering and sparse assembly of the Stokes system.

Velocity DOFs: the 2k moments of edge e sit at ``2k e + [0, 2k)`` (normal
moments first), followed by the k(k-1) cell moments of every cell.  Pressure
is stored unconstrained as k(k+1)/2 monomial coefficients per cell; the
zero-mean condition is imposed by :func:`project_zero_mean`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sps

from . import polybasis as pb
from .mesh import Mesh
from .vem_local import CellGeometry, dof_layout, interpolate_local, local_kernels, local_load


@dataclass
class DofMap:
    mesh: Mesh
    k: int
    edge_dofs: np.ndarray  # (N_E, 2k)
    cell_dofs: np.ndarray  # (N_P, k(k-1))
    interior: np.ndarray  # bool mask over [0, n_dof)

    @property
    def n_dof(self) -> int:
        return len(self.interior)

    @property
    def boundary(self) -> np.ndarray:
        return ~self.interior

    @property
    def dim_V0(self) -> int:
        return int(self.interior.sum())

    @property
    def n_q_per_cell(self) -> int:
        return pb.n_monomials(self.k - 1)

    @property
    def n_q_raw(self) -> int:
        return self.n_q_per_cell * self.mesh.n_cells

    @property
    def dim_Q(self) -> int:
        return self.n_q_raw - 1

    def normal(self, e, j=0):
        return self.edge_dofs[e, j]

    def tangential(self, e, j=0):
        return self.edge_dofs[e, self.k + j]

    def cell_local_to_global(self, c: int) -> np.ndarray:
        edges = self.mesh.cell_edges[c]
        return np.concatenate([self.edge_dofs[edges].ravel(), self.cell_dofs[c]])

    def pressure_dofs(self, c: int) -> np.ndarray:
        nq = self.n_q_per_cell
        return np.arange(c * nq, (c + 1) * nq)


def build_dofmap(mesh: Mesh, k: int) -> DofMap:
    dof_layout(3, k)  # validates k
    ne, nc = mesh.n_edges, mesh.n_cells
    edge_dofs = np.arange(2 * k * ne).reshape(ne, 2 * k)
    ncd = k * (k - 1)
    cell_dofs = 2 * k * ne + np.arange(ncd * nc).reshape(nc, ncd)
    interior = np.ones(2 * k * ne + ncd * nc, dtype=bool)
    interior[edge_dofs[mesh.edge_is_boundary].ravel()] = False
    return DofMap(mesh, k, edge_dofs, cell_dofs, interior)


def dimensions(mesh: Mesh, k: int) -> dict:
    """dim V_{h,0}, dim Q_h and dim Z_{h,0} from the mesh counts."""
    dim_v0 = k * (k - 1) * mesh.n_cells + 2 * k * mesh.n_interior_edges
    dim_q = k * (k + 1) // 2 * mesh.n_cells - 1
    return {"dimV0": dim_v0, "dimQ": dim_q, "dimZ": dim_v0 - dim_q}


# --------------------------------------------------------------------------
# Kernel cache: local matrices depend on the cell shape and edge signs only
# --------------------------------------------------------------------------

def _shape_key(geo: CellGeometry, k: int):
    rel = (geo.xy - geo.xy[0]) / geo.diameter
    return (k, f"{geo.diameter:.13e}", np.round(rel, 13).tobytes(), geo.sign.tobytes())


def cell_kernels(mesh: Mesh, k: int, cache: dict | None = None, geos=None):
    """Local kernels of every cell; congruent cells share one computation."""
    cache = {} if cache is None else cache
    out = []
    for c in range(mesh.n_cells):
        geo = geos[c] if geos is not None else CellGeometry.from_mesh(mesh, c)
        key = _shape_key(geo, k)
        ker = cache.get(key)
        if ker is None:
            ker = cache[key] = local_kernels(geo, k)
        out.append(ker)
    return out


@dataclass
class SparseSystem:
    dofmap: DofMap
    A: sps.csr_matrix  # (n_dof, n_dof)
    B: sps.csr_matrix  # (n_dof, n_q_raw), entries b_h(phi_i, m_b)
    F: np.ndarray
    Mq: sps.csr_matrix  # pressure mass matrix, block diagonal
    cell_moments: np.ndarray  # (N_P, n_q): int_K m_b
    kernels: list = field(repr=False, default_factory=list)

    @property
    def mesh(self) -> Mesh:
        return self.dofmap.mesh

    @property
    def k(self) -> int:
        return self.dofmap.k


def assemble(mesh: Mesh, k: int, f=None, dump_dir=None) -> SparseSystem:
    """Scatter local stiffness, divergence and load into global sparse form.

    ``f(x, y) -> (fx, fy)``; ``None`` means a zero load.
    """
    dm = build_dofmap(mesh, k)
    geos = [CellGeometry.from_mesh(mesh, c) for c in range(mesh.n_cells)]
    kers = cell_kernels(mesh, k, geos=geos)
    nq = dm.n_q_per_cell
    rows_a, cols_a, vals_a = [], [], []
    rows_b, cols_b, vals_b = [], [], []
    F = np.zeros(dm.n_dof)
    mass_blocks = []
    moments = np.zeros((mesh.n_cells, nq))
    for c, ker in enumerate(kers):
        g = dm.cell_local_to_global(c)
        n = len(g)
        rows_a.append(np.repeat(g, n))
        cols_a.append(np.tile(g, n))
        vals_a.append(ker.A.ravel())
        pd = dm.pressure_dofs(c)
        rows_b.append(np.repeat(g, nq))
        cols_b.append(np.tile(pd, n))
        vals_b.append(ker.Bdiv.ravel())
        geo = geos[c]
        if f is not None:
            np.add.at(F, g, local_load(geo, k, f))
        basis = geo.basis(k - 1)
        mass_blocks.append(pb.monomial_mass(geo.xy, basis, k - 1))
        pts, w = pb.gauss_cell(geo.xy, k - 1, geo.centroid)
        moments[c] = w @ basis.eval(pts)
    A = sps.coo_matrix(
        (np.concatenate(vals_a), (np.concatenate(rows_a), np.concatenate(cols_a))),
        shape=(dm.n_dof, dm.n_dof),
    ).tocsr()
    B = sps.coo_matrix(
        (np.concatenate(vals_b), (np.concatenate(rows_b), np.concatenate(cols_b))),
        shape=(dm.n_dof, dm.n_q_raw),
    ).tocsr()
    A.sum_duplicates()
    B.sum_duplicates()
    system = SparseSystem(dm, A, B, F, sps.block_diag(mass_blocks, format="csr"), moments, kers)
    if dump_dir is not None:
        dump_coo(system.A, f"{dump_dir}/A.coo")
        dump_coo(system.B, f"{dump_dir}/B.coo")
    return system


def dump_coo(M, path) -> None:
    """Write a sparse matrix as ``row col value`` lines."""
    M = sps.coo_matrix(M)
    order = np.lexsort((M.col, M.row))
    with open(path, "w") as fh:
        fh.write(f"# {M.shape[0]} {M.shape[1]} {M.nnz}\n")
        for r, c, v in zip(M.row[order], M.col[order], M.data[order]):
            fh.write(f"{r} {c} {float(v)!r}\n")


# --------------------------------------------------------------------------
# Pressure helpers
# --------------------------------------------------------------------------

def pressure_mean(system: SparseSystem, coeffs) -> float:
    coeffs = np.asarray(coeffs, float).reshape(system.cell_moments.shape)
    total = float((coeffs * system.cell_moments).sum())
    return total / float(system.mesh.cell_area.sum())


def project_zero_mean(system: SparseSystem, coeffs) -> np.ndarray:
    out = np.array(coeffs, float).reshape(system.cell_moments.shape)
    out[:, 0] -= pressure_mean(system, out)
    return out.ravel()


def constant_pressure(system: SparseSystem) -> np.ndarray:
    out = np.zeros(system.cell_moments.shape)
    out[:, 0] = 1.0
    return out.ravel()


# --------------------------------------------------------------------------
# Interpolation of analytic data
# --------------------------------------------------------------------------

def interpolate(mesh: Mesh, k: int, v, dofmap: DofMap | None = None) -> np.ndarray:
    """Global DOF vector of the interpolant I_h v."""
    dm = dofmap or build_dofmap(mesh, k)
    out = np.zeros(dm.n_dof)
    done = np.zeros(mesh.n_edges, dtype=bool)
    for c in range(mesh.n_cells):
        geo = CellGeometry.from_mesh(mesh, c)
        loc = interpolate_local(geo, k, v)
        g = dm.cell_local_to_global(c)
        edges = mesh.cell_edges[c]
        lay = dof_layout(len(edges), k)
        for i, e in enumerate(edges):
            if not done[e]:
                out[g[2 * k * i:2 * k * (i + 1)]] = loc[2 * k * i:2 * k * (i + 1)]
                done[e] = True
        out[g[lay.cell_slice]] = loc[lay.cell_slice]
    return out


def project_pressure(mesh: Mesh, k: int, p) -> np.ndarray:
    """Per-cell L2 projection of a scalar p onto P_{k-1}, as raw coefficients."""
    from .vem_local import l2_project_scalar

    return np.concatenate([
        l2_project_scalar(CellGeometry.from_mesh(mesh, c), k - 1, p) for c in range(mesh.n_cells)
    ])
