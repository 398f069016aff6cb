import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from polystokes import polybasis as pb
from polystokes.vem_local import (CellGeometry, build_projector, dof_layout, interpolate_local,
                                  l2_project_scalar, local_divergence, local_kernels, local_load)

from conftest import random_convex_polygon

SQUARE = np.array([[0, 0], [1, 0], [1, 1], [0, 1]], float)


def _geo(rng, n, random_signs=True):
    xy = random_convex_polygon(rng, n)
    sign = rng.choice([-1.0, 1.0], n) if random_signs else None
    return CellGeometry.from_polygon(xy, sign)


def _poly_field(geo, k, coeffs):
    """Vector polynomial sum_a c[0,a] m_a e_x + c[1,a] m_a e_y and its gradient."""
    basis = geo.basis(k)

    def v(x, y):
        M = basis.eval(np.column_stack([np.ravel(x), np.ravel(y)]))
        return M @ coeffs[0], M @ coeffs[1]

    def grad(pts):
        G = basis.grad(pts)  # (np, nm, 2)
        return np.stack([np.einsum("pad,a->pd", G, coeffs[0]),
                         np.einsum("pad,a->pd", G, coeffs[1])], axis=1)  # (np, 2, 2)

    def div(pts):
        G = basis.grad(pts)
        return G[:, :, 0] @ coeffs[0] + G[:, :, 1] @ coeffs[1]

    return v, grad, div


@pytest.mark.parametrize("n,k,size", [(4, 1, 8), (5, 2, 22), (6, 3, 42)])
def test_layout_counts(n, k, size):
    lay = dof_layout(n, k)
    assert lay.size == size
    assert lay.n_grad == k * (k + 1) // 2 - 1 and lay.n_perp == (k - 1) * (k - 2) // 2
    with pytest.raises(ValueError):
        dof_layout(n, 4)


@settings(max_examples=20, deadline=None)
@given(n=st.integers(3, 8), k=st.integers(1, 3), seed=st.integers(0, 2**31))
def test_projector_reproduces_polynomials(n, k, seed):
    geo = _geo(np.random.default_rng(seed), n)
    D, Bmat, G, PiStar = build_projector(geo, k)
    assert np.abs(PiStar @ D - np.eye(D.shape[1])).max() < 1e-11


@settings(max_examples=20, deadline=None)
@given(n=st.integers(3, 8), k=st.integers(1, 3), seed=st.integers(0, 2**31))
def test_stiffness_symmetric_with_rigid_kernel(n, k, seed):
    geo = _geo(np.random.default_rng(seed), n)
    A = local_kernels(geo, k).A
    assert np.abs(A - A.T).max() <= 1e-13 * np.abs(A).max()
    ev = np.linalg.eigvalsh(A)
    assert np.sum(ev < 1e-10 * ev.max()) == 2
    # the kernel is the constant velocities
    for c in ([1.0, 0.0], [0.0, 1.0]):
        dofs = interpolate_local(geo, k, lambda x, y, c=c: (c[0] + 0 * x, c[1] + 0 * x))
        assert np.abs(A @ dofs).max() < 1e-11


def test_k_consistency_against_quadrature(rng):
    for k in (1, 2, 3):
        geo = _geo(rng, 6)
        nm = pb.n_monomials(k)
        cp, cw = rng.standard_normal((2, nm)), rng.standard_normal((2, nm))
        p, gp, _ = _poly_field(geo, k, cp)
        w, gw, _ = _poly_field(geo, k, cw)
        A = local_kernels(geo, k).A
        lhs = interpolate_local(geo, k, p) @ A @ interpolate_local(geo, k, w)
        pts, wts = pb.gauss_cell(geo.xy, 2 * k, geo.centroid)
        exact = wts @ np.einsum("pij,pij->p", gp(pts), gw(pts))
        assert lhs == pytest.approx(exact, rel=1e-10)


@settings(max_examples=20, deadline=None)
@given(n=st.integers(3, 8), k=st.integers(1, 3), seed=st.integers(0, 2**31))
def test_divergence_matrix_against_quadrature(n, k, seed):
    rng = np.random.default_rng(seed)
    geo = _geo(rng, n)
    Bdiv = local_divergence(geo, k)
    nm = pb.n_monomials(k)
    v, _, div = _poly_field(geo, k, rng.standard_normal((2, nm)))
    pts, w = pb.gauss_cell(geo.xy, 2 * k, geo.centroid)
    M = geo.basis(k - 1).eval(pts)
    exact = -(M * (w * div(pts))[:, None]).sum(0)
    got = interpolate_local(geo, k, v) @ Bdiv
    assert np.allclose(got, exact, atol=1e-11 * max(1, abs(exact).max()))


def test_divergence_constant_column_structure(rng):
    geo = _geo(rng, 5)
    k = 2
    lay = dof_layout(5, k)
    B = local_divergence(geo, k)
    length, _, _ = geo.edge_frames()
    for i in range(5):
        assert B[lay.normal(i, 0), 0] == pytest.approx(-geo.sign[i] * length[i])
        assert B[lay.normal(i, 1), 0] == 0.0
        assert np.all(B[lay.tangential(i, 0):lay.tangential(i, 0) + k, 0] == 0.0)


def test_load_k1_unit_square():
    geo = CellGeometry.from_polygon(SQUARE)
    F = local_load(geo, 1, lambda x, y: (1.0 + 0 * x, 0 * x))
    lay = dof_layout(4, 1)
    _, t, n = geo.edge_frames()
    for i in range(4):
        assert F[lay.normal(i, 0)] == pytest.approx(0.25 * n[i, 0])
        assert F[lay.tangential(i, 0)] == pytest.approx(0.25 * t[i, 0])


def test_load_zero():
    geo = CellGeometry.from_polygon(SQUARE)
    for k in (1, 2, 3):
        assert not local_load(geo, k, lambda x, y: (0 * x, 0 * x)).any()


@pytest.mark.parametrize("k", [2, 3])
def test_load_consistency(rng, k):
    geo = _geo(rng, 7)
    cf = np.zeros((2, pb.n_monomials(k)))
    cf[:, :pb.n_monomials(k - 2)] = rng.standard_normal((2, pb.n_monomials(k - 2)))
    f, _, _ = _poly_field(geo, k, cf)
    v, _, _ = _poly_field(geo, k, rng.standard_normal((2, pb.n_monomials(k))))
    F = local_load(geo, k, f)
    pts, w = pb.gauss_cell(geo.xy, 2 * k, geo.centroid)
    fv, vv = np.array(f(pts[:, 0], pts[:, 1])), np.array(v(pts[:, 0], pts[:, 1]))
    exact = w @ (fv * vv).sum(0)
    assert F @ interpolate_local(geo, k, v) == pytest.approx(exact, rel=1e-11)
    lay = dof_layout(7, k)
    assert not F[:lay.n_edge_dofs].any()


def test_interpolation_of_constant():
    geo = CellGeometry.from_polygon(SQUARE)
    dofs = interpolate_local(geo, 2, lambda x, y: (2.0 + 0 * x, -1.0 + 0 * x))
    lay = dof_layout(4, 2)
    _, t, n = geo.edge_frames()
    for i in range(4):
        assert dofs[lay.normal(i, 0)] == pytest.approx(n[i] @ [2, -1])
        assert dofs[lay.tangential(i, 0)] == pytest.approx(t[i] @ [2, -1])
        assert dofs[lay.normal(i, 1)] == pytest.approx(0.0, abs=1e-15)


def test_l2_projection_exact_on_polynomials(rng):
    geo = _geo(rng, 5)
    c = rng.standard_normal(6)
    b = geo.basis(2)

    def p(x, y):
        return b.eval(np.column_stack([np.ravel(x), np.ravel(y)])) @ c

    assert np.allclose(l2_project_scalar(geo, 2, p), c)


def test_stability_sandwich_recorded(rng):
    # a_h(v,v) / a(Pi v, Pi v) on random DOF vectors; bounded below, finite above
    geo = _geo(rng, 6)
    ker = local_kernels(geo, 2)
    Gt = ker.G_grad
    ratios = []
    for _ in range(100):
        v = rng.standard_normal(ker.A.shape[0])
        pv = ker.PiStar @ v
        cons = pv @ Gt @ pv
        if cons > 1e-8:
            ratios.append((v @ ker.A @ v) / cons)
    assert min(ratios) >= 0.9 and np.isfinite(max(ratios))


def test_clockwise_polygon_rejected():
    with pytest.raises(ValueError):
        CellGeometry.from_polygon(SQUARE[::-1])
