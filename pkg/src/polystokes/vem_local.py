"""Per-cell kernels of the divergence-free nonconforming virtual element space.

Local DOF layout for a cell with n edges (all edge moments use the GLOBAL edge
orientation n_e, t_e and the global edge monomials q_j, j < k):

* for each edge i in CCW order: k normal moments, then k tangential moments,
  at local positions ``2k i + j`` and ``2k i + k + j``;
* k(k+1)/2 - 1 moments against h_K grad m, m in M_{k-1} minus {1};
* (k-1)(k-2)/2 moments against m xperp, m in M_{k-3}.

Every moment carries the 1/|e| or 1/|K| normalisation.  The vector
polynomial space P_k(K)^2 is ordered component-major: m_a e_x for all a, then
m_a e_y.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import polybasis as pb
from .mesh import Mesh, polygon_area_centroid, polygon_diameter


@dataclass
class CellGeometry:
    """A convex cell together with the global orientation of its edges.

    ``sign[i]`` is sigma_{K,e} = n_K . n_e for local edge i (joining local
    vertices i and i+1): +1 when the global edge runs along the CCW traversal.
    """

    xy: np.ndarray
    sign: np.ndarray
    area: float
    centroid: np.ndarray
    diameter: float
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def from_polygon(cls, xy, sign=None) -> "CellGeometry":
        xy = np.asarray(xy, float)
        area, cen = polygon_area_centroid(xy)
        if area <= 0:
            raise ValueError("polygon must be counterclockwise")
        sign = np.ones(len(xy)) if sign is None else np.asarray(sign, float)
        return cls(xy, sign, area, cen, polygon_diameter(xy))

    @classmethod
    def from_mesh(cls, mesh: Mesh, c: int) -> "CellGeometry":
        return cls(
            mesh.cell_xy(c),
            mesh.cell_edge_sign[c],
            float(mesh.cell_area[c]),
            mesh.cell_centroid[c],
            float(mesh.cell_diameter[c]),
        )

    @property
    def n_edges(self) -> int:
        return len(self.xy)

    def basis(self, degree: int) -> pb.CellBasis:
        return pb.CellBasis(self.centroid, self.diameter, degree)

    def edge(self, i: int, degree: int) -> pb.EdgeBasis:
        key = ("edge", i, degree)
        out = self._cache.get(key)
        if out is None:
            a, b = self.xy[i], self.xy[(i + 1) % len(self.xy)]
            if self.sign[i] < 0:
                a, b = b, a
            out = self._cache[key] = pb.EdgeBasis(a, b, degree)
        return out

    def edge_frames(self):
        """Per local edge: (length, t_e, n_e) in global orientation."""
        out = self._cache.get("frames")
        if out is None:
            b = np.roll(self.xy, -1, axis=0)
            vec = (b - self.xy) * self.sign[:, None]
            length = np.sqrt((vec**2).sum(1))
            t = vec / length[:, None]
            n = np.column_stack([t[:, 1], -t[:, 0]])
            out = self._cache["frames"] = (length, t, n)
        return out

    @property
    def perimeter(self) -> float:
        return float(self.edge_frames()[0].sum())


@dataclass
class LocalDofLayout:
    k: int
    n_edges: int

    @property
    def n_edge_dofs(self) -> int:
        return 2 * self.k * self.n_edges

    @property
    def n_grad(self) -> int:
        return pb.n_grad_dofs(self.k)

    @property
    def n_perp(self) -> int:
        return pb.n_perp_dofs(self.k)

    @property
    def n_cell_dofs(self) -> int:
        return self.k * (self.k - 1)

    @property
    def size(self) -> int:
        return self.n_edge_dofs + self.n_cell_dofs

    def normal(self, i: int, j: int) -> int:
        return 2 * self.k * i + j

    def tangential(self, i: int, j: int) -> int:
        return 2 * self.k * i + self.k + j

    def grad(self, b: int) -> int:
        """Local index of the moment against h_K grad m_b (b >= 1 in M_{k-1})."""
        return self.n_edge_dofs + b - 1

    def perp(self, g: int) -> int:
        return self.n_edge_dofs + self.n_grad + g

    @property
    def cell_slice(self) -> slice:
        return slice(self.n_edge_dofs, self.size)


def dof_layout(n_edges: int, k: int) -> LocalDofLayout:
    if not 1 <= k <= 3:
        raise ValueError("k must be 1, 2 or 3")
    return LocalDofLayout(k, n_edges)


def _edge_order(k: int) -> int:
    return k + 2


def _cell_order(k: int) -> int:
    return 2 * k + 2


@dataclass
class LocalKernels:
    """Local matrices of one cell; see module docstring for the orderings."""

    k: int
    layout: LocalDofLayout
    D: np.ndarray  # (N_K, n_p) DOFs of the vector monomials
    Bmat: np.ndarray  # (n_p, N_K) projector right-hand side
    G: np.ndarray  # (n_p, n_p) gradient Gram with constraint rows
    PiStar: np.ndarray  # (n_p, N_K) projector coefficients
    A: np.ndarray  # (N_K, N_K) stiffness with stabilisation
    Bdiv: np.ndarray  # (N_K, n_mono(k-1)) entries b^K(phi_i, m_b)

    @property
    def G_grad(self) -> np.ndarray:
        """G with the two constraint rows zeroed: the pure gradient Gram."""
        Gt = self.G.copy()
        nm = self.G.shape[0] // 2
        Gt[0] = 0.0
        Gt[nm] = 0.0
        return Gt


def dofs_of_vector_monomials(geo: CellGeometry, k: int) -> np.ndarray:
    """D matrix: column (c, a) holds the DOFs of m_a e_c."""
    lay = dof_layout(geo.n_edges, k)
    basis = geo.basis(k)
    nm = pb.n_monomials(k)
    D = np.zeros((lay.size, 2 * nm))
    _, tang, norm = geo.edge_frames()
    for i in range(geo.n_edges):
        edge = geo.edge(i, k - 1)
        pts, w = pb.gauss_edge(edge.a, edge.b, _edge_order(k))
        E = (edge.eval(pts) * w[:, None]).T @ basis.eval(pts) / edge.length  # (k, nm)
        rn = slice(lay.normal(i, 0), lay.normal(i, 0) + k)
        rt = slice(lay.tangential(i, 0), lay.tangential(i, 0) + k)
        for c in range(2):
            D[rn, c * nm:(c + 1) * nm] = norm[i, c] * E
            D[rt, c * nm:(c + 1) * nm] = tang[i, c] * E
    if k >= 2:
        pts, w = pb.gauss_cell(geo.xy, 2 * k - 2, geo.centroid)
        S = pb.split_eval(basis.scaled(pts), k)  # (np, ncell, 2)
        M = basis.eval(pts)
        for c in range(2):
            D[lay.cell_slice, c * nm:(c + 1) * nm] = (S[:, :, c] * w[:, None]).T @ M / geo.area
    return D


def projector_rhs(geo: CellGeometry, k: int) -> np.ndarray:
    """Bmat: a^K(p_a, phi_i) for non-constant p_a; boundary integrals for constants.

    Uses a^K(p, v) = -int_K v . Lap p + int_dK v . (grad p n_K), with Lap p
    expanded in the split basis (cell moments) and grad p n_K restricted to each
    edge (edge moments).
    """
    lay = dof_layout(geo.n_edges, k)
    basis = geo.basis(k)
    h = geo.diameter
    nm = pb.n_monomials(k)
    nlow = pb.n_monomials(k - 2)
    B = np.zeros((2 * nm, lay.size))
    length, tang, norm = geo.edge_frames()

    if k >= 2:
        L = pb.laplacian_table(k) / h**2  # (nm, nlow)
        Sinv = pb.split_inverse(k)
        for c in range(2):
            vec = np.zeros((nm, 2 * nlow))
            vec[:, c * nlow:(c + 1) * nlow] = L
            B[c * nm:(c + 1) * nm, lay.cell_slice] = -geo.area * vec @ Sinv.T

    grad = pb.gradient_table(k) / h  # (nm, 2, n_mono(k-1))
    for i in range(geo.n_edges):
        edge = geo.edge(i, k - 1)
        R = pb.restriction_matrix(basis, edge, k - 1)  # (n_mono(k-1), k)
        gn = (grad[:, 0, :] * norm[i, 0] + grad[:, 1, :] * norm[i, 1]) @ R  # (nm, k)
        coef = geo.sign[i] * length[i] * gn
        rn = slice(lay.normal(i, 0), lay.normal(i, 0) + k)
        rt = slice(lay.tangential(i, 0), lay.tangential(i, 0) + k)
        for c in range(2):
            B[c * nm:(c + 1) * nm, rn] += norm[i, c] * coef
            B[c * nm:(c + 1) * nm, rt] += tang[i, c] * coef
    # constraint rows: int_dK v = sum_e |e| (chi^n_{e,0} n_e + chi^t_{e,0} t_e)
    for c in range(2):
        row = c * nm
        B[row] = 0.0
        for i in range(geo.n_edges):
            B[row, lay.normal(i, 0)] = length[i] * norm[i, c]
            B[row, lay.tangential(i, 0)] = length[i] * tang[i, c]
    return B


def local_divergence(geo: CellGeometry, k: int) -> np.ndarray:
    """Bdiv[i, b] = b^K(phi_i, m_b) = -int_dK m_b phi_i . n_K + int_K phi_i . grad m_b."""
    lay = dof_layout(geo.n_edges, k)
    basis = geo.basis(k - 1)
    nq = pb.n_monomials(k - 1)
    Bd = np.zeros((lay.size, nq))
    length, _, _ = geo.edge_frames()
    for i in range(geo.n_edges):
        R = pb.restriction_matrix(basis, geo.edge(i, k - 1), k - 1)  # (nq, k)
        Bd[lay.normal(i, 0):lay.normal(i, 0) + k, :] = -geo.sign[i] * length[i] * R.T
    for b in range(1, nq):
        Bd[lay.grad(b), b] = geo.area / geo.diameter
    return Bd


def build_projector(geo: CellGeometry, k: int):
    """Return (D, Bmat, G, PiStar) with G = Bmat D and PiStar = G^{-1} Bmat."""
    D = dofs_of_vector_monomials(geo, k)
    Bmat = projector_rhs(geo, k)
    G = Bmat @ D
    try:
        PiStar = np.linalg.solve(G, Bmat)
    except np.linalg.LinAlgError as exc:
        raise ValueError("singular projector matrix: degenerate cell geometry") from exc
    return D, Bmat, G, PiStar


def local_kernels(geo: CellGeometry, k: int) -> LocalKernels:
    D, Bmat, G, PiStar = build_projector(geo, k)
    nm = G.shape[0] // 2
    Gt = G.copy()
    Gt[0] = 0.0
    Gt[nm] = 0.0
    stab = np.eye(D.shape[0]) - D @ PiStar
    A = PiStar.T @ Gt @ PiStar + stab.T @ stab
    A = 0.5 * (A + A.T)
    return LocalKernels(
        k=k,
        layout=dof_layout(geo.n_edges, k),
        D=D,
        Bmat=Bmat,
        G=G,
        PiStar=PiStar,
        A=A,
        Bdiv=local_divergence(geo, k),
    )


def local_stiffness(geo: CellGeometry, k: int) -> np.ndarray:
    return local_kernels(geo, k).A


# --------------------------------------------------------------------------
# Data-dependent vectors
# --------------------------------------------------------------------------

def _eval_field(f, pts):
    out = np.asarray(f(pts[:, 0], pts[:, 1]), dtype=float)
    if out.shape == (2,):
        out = np.broadcast_to(out[:, None], (2, len(pts)))
    return np.asarray(out).reshape(2, len(pts))


def local_load(geo: CellGeometry, k: int, f) -> np.ndarray:
    """Load vector <f_h, phi_i> for a vector field f(x, y) -> (fx, fy).

    k = 1: (Pi_0 f, mean of phi over dK) |K|; only lowest edge moments are hit.
    k > 1: (Pi_{k-2} f, phi); only cell moments are hit.
    """
    lay = dof_layout(geo.n_edges, k)
    F = np.zeros(lay.size)
    pts, w = pb.gauss_cell(geo.xy, _cell_order(k), geo.centroid)
    vals = _eval_field(f, pts)  # (2, np)
    if k == 1:
        f0 = vals @ w / geo.area
        length, tang, norm = geo.edge_frames()
        scale = geo.area * length / length.sum()
        for i in range(geo.n_edges):
            F[lay.normal(i, 0)] = scale[i] * f0 @ norm[i]
            F[lay.tangential(i, 0)] = scale[i] * f0 @ tang[i]
        return F
    basis = geo.basis(k)
    S = pb.split_eval(basis.scaled(pts), k)  # (np, ncell, 2)
    gram = np.einsum("p,pic,pjc->ij", w, S, S)
    rhs = np.einsum("p,pic,cp->i", w, S, vals)
    F[lay.cell_slice] = geo.area * np.linalg.solve(gram, rhs)
    return F


def interpolate_local(geo: CellGeometry, k: int, v, edge_points: int | None = None,
                      cell_order: int | None = None) -> np.ndarray:
    """DOFs of an analytic vector field v(x, y) -> (vx, vy), by Gauss quadrature."""
    lay = dof_layout(geo.n_edges, k)
    out = np.zeros(lay.size)
    _, tang, norm = geo.edge_frames()
    for i in range(geo.n_edges):
        edge = geo.edge(i, k - 1)
        pts, w = pb.gauss_edge(edge.a, edge.b, edge_points or _edge_order(k))
        vals = _eval_field(v, pts)
        Q = edge.eval(pts) * w[:, None] / edge.length  # (np, k)
        out[lay.normal(i, 0):lay.normal(i, 0) + k] = (norm[i] @ vals) @ Q
        out[lay.tangential(i, 0):lay.tangential(i, 0) + k] = (tang[i] @ vals) @ Q
    if k >= 2:
        basis = geo.basis(k)
        pts, w = pb.gauss_cell(geo.xy, cell_order or _cell_order(k), geo.centroid)
        S = pb.split_eval(basis.scaled(pts), k)
        vals = _eval_field(v, pts)
        out[lay.cell_slice] = np.einsum("p,pic,cp->i", w, S, vals) / geo.area
    return out


def l2_project_scalar(geo: CellGeometry, deg: int, p, order: int | None = None) -> np.ndarray:
    """Coefficients over M_deg(K) of the L2 projection of a scalar p(x, y)."""
    basis = geo.basis(deg)
    pts, w = pb.gauss_cell(geo.xy, order or 2 * deg + 4, geo.centroid)
    M = basis.eval(pts, deg)
    vals = np.asarray(p(pts[:, 0], pts[:, 1]), float) * np.ones(len(pts))
    return np.linalg.solve((M * w[:, None]).T @ M, (M * w[:, None]).T @ vals)
