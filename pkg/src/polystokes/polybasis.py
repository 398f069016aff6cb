"""Scaled monomials on cells and edges, and quadrature on polygons.

Cell monomials are m_a(x) = ((x - x_K) / h_K)^a with x_K the area centroid
and h_K the diameter, enumerated in graded lexicographic order
1, x, y, x^2, xy, y^2, ...  Edge monomials are q_j(s) = s^j, where
s = (x - x_e) . t_e / h_e is the scaled arclength coordinate measured from the
edge midpoint along the global edge tangent.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np


def n_monomials(deg: int) -> int:
    """Number of scaled monomials of degree <= deg (0 for deg < 0)."""
    return 0 if deg < 0 else (deg + 1) * (deg + 2) // 2


@lru_cache(maxsize=None)
def exponents(deg: int) -> np.ndarray:
    """(n, 2) multi-indices of degree <= deg in graded lexicographic order."""
    out = [(d - ay, ay) for d in range(deg + 1) for ay in range(d + 1)]
    arr = np.array(out, dtype=int).reshape(-1, 2)
    arr.setflags(write=False)
    return arr


@lru_cache(maxsize=None)
def _index_table(deg: int) -> dict:
    return {tuple(a): i for i, a in enumerate(exponents(deg).tolist())}


def monomial_index(alpha, deg: int) -> int:
    try:
        return _index_table(deg)[tuple(alpha)]
    except KeyError:
        raise ValueError(f"multi-index {tuple(alpha)} exceeds degree {deg}") from None


class CellBasis:
    """Scaled monomials of degree <= ``degree`` on one cell."""

    def __init__(self, centroid, diameter: float, degree: int):
        self.centroid = np.asarray(centroid, dtype=float)
        self.diameter = float(diameter)
        self.degree = int(degree)
        self.exps = exponents(self.degree)

    def __len__(self):
        return len(self.exps)

    def scaled(self, pts) -> np.ndarray:
        return (np.atleast_2d(pts) - self.centroid) / self.diameter

    def eval(self, pts, deg: int | None = None) -> np.ndarray:
        """Values of all monomials of degree <= deg at pts, shape (n_pts, n_mono)."""
        deg = self.degree if deg is None else deg
        return eval_scaled(self.scaled(pts), deg)

    def grad(self, pts, deg: int | None = None) -> np.ndarray:
        """Gradients, shape (n_pts, n_mono, 2). Includes the 1/h_K factor."""
        deg = self.degree if deg is None else deg
        xi = self.scaled(pts)
        exps = exponents(deg)
        low = eval_scaled(xi, max(deg - 1, 0))
        out = np.zeros((len(xi), len(exps), 2))
        for i, (ax, ay) in enumerate(exps.tolist()):
            if ax:
                out[:, i, 0] = ax * low[:, monomial_index((ax - 1, ay), deg - 1)]
            if ay:
                out[:, i, 1] = ay * low[:, monomial_index((ax, ay - 1), deg - 1)]
        return out / self.diameter

    def monomial_eval(self, alpha, pt) -> float:
        return float(self.eval(pt)[0, monomial_index(alpha, self.degree)])

    def monomial_grad(self, alpha, pt) -> np.ndarray:
        return self.grad(pt)[0, monomial_index(alpha, self.degree)]

    def monomial_laplacian_coeffs(self, alpha) -> np.ndarray:
        """Coefficients of Laplacian(m_alpha) over the monomials of degree |alpha|-2.

        The 1/h_K^2 factor is included.
        """
        ax, ay = alpha
        if ax + ay > self.degree:
            raise ValueError(f"multi-index {alpha} exceeds degree {self.degree}")
        return laplacian_table(ax + ay)[monomial_index(alpha, ax + ay)] / self.diameter**2


def eval_scaled(xi: np.ndarray, deg: int) -> np.ndarray:
    """Monomials xi^a of degree <= deg for already scaled points xi."""
    exps = exponents(deg)
    x, y = xi[:, 0:1], xi[:, 1:2]
    return x ** exps[:, 0] * y ** exps[:, 1]


@lru_cache(maxsize=None)
def laplacian_table(deg: int) -> np.ndarray:
    """Row i: Laplacian of monomial i (unit scaling) over monomials of degree deg-2."""
    exps = exponents(deg)
    n_low = n_monomials(deg - 2)
    out = np.zeros((len(exps), n_low))
    for i, (ax, ay) in enumerate(exps.tolist()):
        if ax >= 2:
            out[i, monomial_index((ax - 2, ay), deg - 2)] += ax * (ax - 1)
        if ay >= 2:
            out[i, monomial_index((ax, ay - 2), deg - 2)] += ay * (ay - 1)
    out.setflags(write=False)
    return out


@lru_cache(maxsize=None)
def gradient_table(deg: int) -> np.ndarray:
    """(n_mono(deg), 2, n_mono(deg-1)): unit-scale gradient of each monomial."""
    exps = exponents(deg)
    out = np.zeros((len(exps), 2, n_monomials(deg - 1)))
    for i, (ax, ay) in enumerate(exps.tolist()):
        if ax:
            out[i, 0, monomial_index((ax - 1, ay), deg - 1)] = ax
        if ay:
            out[i, 1, monomial_index((ax, ay - 1), deg - 1)] = ay
    out.setflags(write=False)
    return out


# --------------------------------------------------------------------------
# Gradient / complement splitting of P_{k-2}^2
# --------------------------------------------------------------------------

@lru_cache(maxsize=None)
def split_matrix(k: int) -> np.ndarray:
    """Monomial coefficients of the split basis of P_{k-2}(K)^2.

    Columns are h_K grad m_b for m_b in M_{k-1} minus {1}, then m_g xperp for
    m_g in M_{k-3}, with xperp = ((y - y_K)/h_K, -(x - x_K)/h_K). Rows are the
    component-major vector monomials (m_a e_x for all a, then m_a e_y).
    All entries are pure integers; the scaling makes them cell independent.
    """
    nlow = n_monomials(k - 2)
    grad = gradient_table(k - 1)[1:]  # drop the constant
    cols = []
    for g in grad:
        cols.append(np.concatenate([g[0], g[1]]))
    for ax, ay in exponents(k - 3).tolist():
        c = np.zeros(2 * nlow)
        c[monomial_index((ax, ay + 1), k - 2)] = 1.0
        c[nlow + monomial_index((ax + 1, ay), k - 2)] = -1.0
        cols.append(c)
    T = np.array(cols, dtype=float).T.reshape(2 * nlow, len(cols))
    T.setflags(write=False)
    return T


@lru_cache(maxsize=None)
def split_inverse(k: int) -> np.ndarray:
    """Maps monomial coefficients in P_{k-2}^2 to split-basis coefficients."""
    if k < 2:
        return np.zeros((0, 0))
    inv = np.linalg.inv(split_matrix(k))
    inv.setflags(write=False)
    return inv


def n_grad_dofs(k: int) -> int:
    return n_monomials(k - 1) - 1


def n_perp_dofs(k: int) -> int:
    return n_monomials(k - 3)


def split_eval(xi: np.ndarray, k: int) -> np.ndarray:
    """Split basis members at scaled points: shape (n_pts, k(k-1), 2)."""
    T = split_matrix(k)
    nlow = n_monomials(k - 2)
    if nlow == 0:
        return np.zeros((len(xi), 0, 2))
    M = eval_scaled(xi, k - 2)
    return np.stack([M @ T[:nlow], M @ T[nlow:]], axis=-1)


# --------------------------------------------------------------------------
# Quadrature
# --------------------------------------------------------------------------

@lru_cache(maxsize=None)
def gauss_legendre_01(n: int):
    """n-point Gauss-Legendre rule on [0, 1]."""
    if n < 1:
        raise ValueError("n_points must be >= 1")
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def triangle_rule(order: int):
    """Collapsed-square (Duffy) rule on the reference triangle, exact to ``order``.

    Returns barycentric-free reference coordinates (n, 2) on the triangle with
    vertices (0,0), (1,0), (0,1) and weights summing to 1/2.
    """
    if order < 0 or order > 40:
        raise ValueError(f"unsupported order {order}")
    n = order // 2 + 2
    u, wu = gauss_legendre_01(n)
    v, wv = gauss_legendre_01(n)
    U, V = np.meshgrid(u, v, indexing="ij")
    W = np.outer(wu, wv) * (1.0 - U)
    pts = np.column_stack([U.ravel(), (V * (1.0 - U)).ravel()])
    return pts, W.ravel()


def gauss_edge(a, b, n_points: int):
    """Gauss-Legendre nodes/weights on segment a-b; weights sum to |b - a|."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    t, w = gauss_legendre_01(n_points)
    return a + t[:, None] * (b - a), w * np.linalg.norm(b - a)


def gauss_cell(xy: np.ndarray, order: int, center=None):
    """Fan-triangulated rule on a convex polygon, exact to ``order``.

    The fan is rooted at ``center`` (default: vertex average).
    """
    xy = np.asarray(xy, float)
    c = xy.mean(axis=0) if center is None else np.asarray(center, float)
    ref, wref = triangle_rule(order)
    a = xy
    b = np.roll(xy, -1, axis=0)
    e1 = a - c  # (m, 2)
    e2 = b - c
    det = np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    pts = c + ref[None, :, 0:1] * e1[:, None, :] + ref[None, :, 1:2] * e2[:, None, :]
    w = det[:, None] * wref[None, :]
    return pts.reshape(-1, 2), w.ravel()


def integrate_monomial_cell(xy, basis: CellBasis, alpha, order: int | None = None) -> float:
    """Exact integral of m_alpha over the polygon xy."""
    deg = sum(alpha)
    pts, w = gauss_cell(xy, deg if order is None else order, basis.centroid)
    return float(w @ basis.eval(pts, deg)[:, monomial_index(alpha, deg)])


def monomial_mass(xy, basis: CellBasis, deg: int) -> np.ndarray:
    """Gram matrix of the cell monomials of degree <= deg."""
    pts, w = gauss_cell(xy, 2 * deg, basis.centroid)
    M = basis.eval(pts, deg)
    return (M * w[:, None]).T @ M


def integrate_poly_product_cell(xy, basis: CellBasis, alpha, beta) -> float:
    deg = max(sum(alpha), sum(beta))
    G = monomial_mass(xy, basis, deg)
    return float(G[monomial_index(alpha, deg), monomial_index(beta, deg)])


# --------------------------------------------------------------------------
# Edges
# --------------------------------------------------------------------------

class EdgeBasis:
    """Scaled monomials q_j(s) = s^j on an oriented edge."""

    def __init__(self, a, b, degree: int):
        self.a = np.asarray(a, float)
        self.b = np.asarray(b, float)
        self.degree = int(degree)
        self.length = float(np.linalg.norm(self.b - self.a))
        self.midpoint = 0.5 * (self.a + self.b)
        self.tangent = (self.b - self.a) / self.length

    def param(self, pts) -> np.ndarray:
        return (np.atleast_2d(pts) - self.midpoint) @ self.tangent / self.length

    def eval(self, pts, deg: int | None = None) -> np.ndarray:
        deg = self.degree if deg is None else deg
        s = self.param(pts)
        return s[:, None] ** np.arange(deg + 1)

    def point(self, s) -> np.ndarray:
        return self.midpoint + np.multiply.outer(np.asarray(s, float), self.tangent * self.length)


def integrate_monomial_edge(edge: EdgeBasis, j: int, i: int = 0) -> float:
    """Integral of q_i q_j over the edge (exact: h_e * int_{-1/2}^{1/2} s^(i+j) ds)."""
    p = i + j
    return 0.0 if p % 2 else edge.length * 2.0 * 0.5 ** (p + 1) / (p + 1)


@lru_cache(maxsize=None)
def _chebyshev_vandermonde(n: int):
    s = 0.5 * np.cos((2 * np.arange(n) + 1) * np.pi / (2 * n))
    V = s[:, None] ** np.arange(n)
    return s, np.linalg.inv(V)


def restriction_matrix(basis: CellBasis, edge: EdgeBasis, deg: int) -> np.ndarray:
    """R[b, j]: coefficients with m_b|_e = sum_j R[b, j] q_j for |b| <= deg.

    Computed from values at deg+1 Chebyshev points of the edge; exact for
    polynomial data of this degree.
    """
    s, Vinv = _chebyshev_vandermonde(deg + 1)
    vals = basis.eval(edge.point(s), deg)  # (deg+1, n_mono)
    return (Vinv @ vals).T


def restrict_cell_poly_to_edge(basis: CellBasis, alpha, edge: EdgeBasis) -> np.ndarray:
    """Coefficients of m_alpha restricted to the edge, over q_0..q_{edge.degree}."""
    if sum(alpha) > edge.degree:
        raise ValueError(f"|alpha| = {sum(alpha)} exceeds the edge degree {edge.degree}")
    R = restriction_matrix(basis, edge, edge.degree)
    return R[monomial_index(alpha, edge.degree)]
