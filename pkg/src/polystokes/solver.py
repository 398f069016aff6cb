"""Reduced SPD solve on the divergence-free basis, pressure recovery, Uzawa."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sps

from .assembly import SparseSystem, assemble, project_zero_mean
from .divfree import DivFreeBasis, Lifting, build_basis, build_lifting


class SolverError(RuntimeError):
    pass


class CGBreakdown(SolverError):
    """p^T A p <= 0: the operator is not SPD on the Krylov space."""


class CGMaxIter(SolverError):
    def __init__(self, msg, x=None, residual=np.nan):
        super().__init__(msg)
        self.x = x
        self.residual = residual


class UzawaDiverged(SolverError):
    pass


@dataclass(frozen=True)
class CGInfo:
    iterations: int
    residual: float  # ||rhs - A x|| / ||rhs||


def _as_apply(A):
    if callable(A):
        return A
    return lambda x: A @ x


def cg(apply_A, rhs, tol: float = 1e-10, max_iter: int | None = None, x0=None,
       precond=None, return_info: bool = False):
    """Conjugate gradients until ||rhs - A x|| <= tol ||rhs||.

    ``apply_A`` may be a matrix or a callable; ``precond`` an optional callable
    applying M^-1 (off by default).
    """
    A = _as_apply(apply_A)
    b = np.asarray(rhs, float)
    n = b.size
    max_iter = 10 * n + 10 if max_iter is None else max_iter
    bnorm = np.linalg.norm(b)
    x = np.zeros(n) if x0 is None else np.array(x0, float)
    if bnorm == 0.0:
        x = np.zeros(n)
        return (x, CGInfo(0, 0.0)) if return_info else x
    r = b - A(x) if x0 is not None else b.copy()
    target = tol * bnorm
    rnorm = np.linalg.norm(r)
    it = 0
    if rnorm > target:
        z = precond(r) if precond else r
        p = z.copy()
        rz = r @ z
        while True:
            Ap = A(p)
            pAp = p @ Ap
            if not pAp > 0.0:
                raise CGBreakdown(f"p^T A p = {pAp:.3e} at iteration {it}")
            alpha = rz / pAp
            x += alpha * p
            r -= alpha * Ap
            it += 1
            rnorm = np.linalg.norm(r)
            if rnorm <= target:
                break
            if it >= max_iter:
                raise CGMaxIter(f"CG reached {max_iter} iterations, residual {rnorm / bnorm:.3e}",
                                x, rnorm / bnorm)
            z = precond(r) if precond else r
            rz_new = r @ z
            p = z + (rz_new / rz) * p
            rz = rz_new
    info = CGInfo(it, rnorm / bnorm)
    return (x, info) if return_info else x


def jacobi(M):
    d = np.asarray(M.diagonal(), float)
    inv = 1.0 / d
    return lambda r: inv * r


@dataclass(frozen=True)
class SolveResult:
    u_dofs: np.ndarray
    p_coeffs: np.ndarray
    iterations: int
    residual: float
    wall_time: float
    method: str = "reduced"
    pressure_iterations: int = 0
    timed_out: bool = False


# --------------------------------------------------------------------------
# Reduced path
# --------------------------------------------------------------------------

def reduced_operator(system: SparseSystem, basis: DivFreeBasis) -> sps.csr_matrix:
    N = basis.N.tocsr()
    return (N.T @ system.A @ N).tocsr()


def solve_velocity(system: SparseSystem, basis: DivFreeBasis, lifting: Lifting | None,
                   tol: float = 1e-10, max_iter: int | None = None, precond: bool = False):
    """u = N z + u_tilde with N^T A N z = N^T (F - A u_tilde)."""
    u_tilde = np.zeros(system.dofmap.n_dof) if lifting is None else lifting.u_tilde
    K = reduced_operator(system, basis)
    rhs = basis.N.T @ (system.F - system.A @ u_tilde)
    z, info = cg(K, rhs, tol, max_iter, precond=jacobi(K) if precond else None, return_info=True)
    return basis.N @ z + u_tilde, info


def recover_pressure(system: SparseSystem, u_dofs, tol: float = 1e-9,
                     max_iter: int | None = None, return_info: bool = False):
    """Least-squares p with B_int p = (F - A u)_int, mean zero."""
    mask = system.dofmap.interior
    Bi = system.B[mask]
    r = (system.F - system.A @ u_dofs)[mask]
    BiT = Bi.T.tocsr()
    rhs = BiT @ r

    def normal_op(p):
        return BiT @ (Bi @ p)

    try:
        p, info = cg(normal_op, rhs, tol, max_iter, return_info=True)
    except CGMaxIter as exc:
        raise SolverError(f"pressure recovery stagnated: {exc}") from exc
    p = project_zero_mean(system, p)
    return (p, info) if return_info else p


def solve_reduced(mesh, k: int, f=None, g=None, tol: float = 1e-10, p_tol: float = 1e-9,
                  system: SparseSystem | None = None, basis: DivFreeBasis | None = None,
                  max_iter: int | None = None, precond: bool = False) -> SolveResult:
    """Divergence-free solve; ``g(x, y) -> (gx, gy)`` or None for no-slip."""
    system = system or assemble(mesh, k, f)
    t0 = time.perf_counter()
    basis = basis or build_basis(system)
    lifting = None if g is None else build_lifting(system, g)
    u, info = solve_velocity(system, basis, lifting, tol, max_iter, precond)
    p, pinfo = recover_pressure(system, u, p_tol, return_info=True)
    wall = time.perf_counter() - t0
    return SolveResult(u, p, info.iterations, info.residual, wall, "reduced", pinfo.iterations)


# --------------------------------------------------------------------------
# Uzawa baseline on the full saddle-point system
# --------------------------------------------------------------------------

def boundary_values(system: SparseSystem, g) -> np.ndarray:
    """Velocity vector holding the boundary moments of g, zero elsewhere."""
    from .divfree import boundary_moments

    dm = system.dofmap
    u = np.zeros(dm.n_dof)
    if g is None:
        return u
    edges = np.flatnonzero(system.mesh.edge_is_boundary)
    mom_n, mom_t = boundary_moments(system.mesh, dm.k, g, edges)
    k = dm.k
    u[dm.edge_dofs[edges, :k].ravel()] = mom_n.ravel()
    u[dm.edge_dofs[edges, k:].ravel()] = mom_t.ravel()
    return u


def estimate_schur_max(A_II, B_I, Mq_solve, n_iter: int = 20, seed: int = 0) -> float:
    """Power iteration for the top eigenvalue of Mq^-1 B_I^T A_II^-1 B_I."""
    rng = np.random.default_rng(seed)
    p = rng.standard_normal(B_I.shape[1])
    lam = 0.0
    u = None
    for _ in range(n_iter):
        u = cg(A_II, B_I @ p, 1e-8, x0=u)
        q = Mq_solve(B_I.T @ u)
        lam = float(np.linalg.norm(q) / np.linalg.norm(p))
        p = q
    return lam


def uzawa(system: SparseSystem, g=None, omega: float | str = "auto", tol: float = 1e-10,
          max_outer: int = 5000, inner_tol: float | None = None, time_budget: float | None = None,
          interior: np.ndarray | None = None) -> SolveResult:
    """Mass-scaled Uzawa: p <- p + omega Mq^-1 B^T u, with CG inner solves.

    ``omega="auto"`` uses 1 / lambda, lambda a power-iteration estimate of the
    top eigenvalue of Mq^-1 S (S the pressure Schur complement). With the
    dofi-dofi stabilization that eigenvalue is about 2, 12, 170 for k = 1, 2, 3,
    so a fixed omega = 1 diverges for k >= 2.

    Stops when ||Mq^-1 B^T u||_Mq <= tol * ||f||; ``time_budget`` (seconds)
    or ``max_outer`` exhaustion returns with ``timed_out`` set.
    """
    t0 = time.perf_counter()
    dm = system.dofmap
    mask = dm.interior if interior is None else interior
    A_II = system.A[mask][:, mask].tocsr()
    A_IB = system.A[mask][:, ~mask].tocsr()
    B_I = system.B[mask].tocsr()
    B_T = system.B.T.tocsr()
    Mq = system.Mq.tocsc()
    Mq_solve = sps.linalg.factorized(Mq)
    inner_tol = tol * 1e-2 if inner_tol is None else inner_tol

    if omega == "auto":
        omega = 1.0 / estimate_schur_max(A_II, B_I, Mq_solve)

    u = boundary_values(system, g)
    u_B = u[~mask]
    f_I = system.F[mask] - A_IB @ u_B
    scale = max(np.linalg.norm(system.F[mask]), np.linalg.norm(A_IB @ u_B), 1.0)
    p = np.zeros(dm.n_q_raw)
    u_I = np.zeros(mask.sum())
    history = []
    timed_out = False
    inner_total = 0
    res = np.inf
    outer = 0
    for outer in range(1, max_outer + 1):
        rhs = f_I - B_I @ p
        u_I, info = cg(A_II, rhs, inner_tol, x0=u_I, return_info=True)
        inner_total += info.iterations
        u[mask] = u_I
        div = B_T @ u
        step = Mq_solve(div)
        res = float(np.sqrt(max(step @ div, 0.0))) / scale
        history.append(res)
        if res <= tol:
            break
        if len(history) > 10 and res > 10.0 * history[-11] and res > history[0]:
            raise UzawaDiverged(f"Uzawa residual grew to {res:.3e} (omega={omega})")
        p = project_zero_mean(system, p + omega * step)
        if time_budget is not None and time.perf_counter() - t0 > time_budget:
            timed_out = True
            break
    else:
        timed_out = True
    p = project_zero_mean(system, p)
    return SolveResult(u.copy(), p, outer, res, time.perf_counter() - t0, "uzawa",
                       inner_total, timed_out)


def energy_norm(system: SparseSystem, d) -> float:
    return float(np.sqrt(max(d @ (system.A @ d), 0.0)))


def divergence_norm(system: SparseSystem, u) -> float:
    """||B^T u||_inf / ||u||_inf."""
    un = np.abs(u).max()
    return float(np.abs(system.B.T @ u).max() / un) if un > 0 else 0.0
