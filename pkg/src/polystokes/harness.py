"""Manufactured solutions, error measures, convergence and timing tables."""

from __future__ import annotations

import csv
import math
import os
import time
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .assembly import assemble, dimensions, interpolate, project_pressure
from .divfree import build_basis, build_lifting
from .mesh import Mesh, generate_uniform_square_mesh, generate_voronoi_mesh
from .solver import (SolveResult, UzawaDiverged, SolverError, recover_pressure, solve_velocity,
                     uzawa)
from .vem_local import CellGeometry
from . import polybasis as pb

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class ManufacturedCase:
    name: str
    u: Callable  # (x, y) -> (ux, uy)
    p: Callable  # (x, y) -> p
    f: Callable  # (x, y) -> (fx, fy), -lap u + grad p
    g: Callable | None = None  # boundary data; defaults to u

    @property
    def boundary(self):
        return self.g or self.u


def _smooth_u(x, y):
    return ((1 - np.cos(TWO_PI * x)) * np.sin(TWO_PI * y),
            -(1 - np.cos(TWO_PI * y)) * np.sin(TWO_PI * x))


def _smooth_p(x, y):
    return np.exp(x) - np.exp(y)


def _smooth_f(x, y):
    c = 4 * math.pi ** 2
    fx = -c * np.sin(TWO_PI * y) * (2 * np.cos(TWO_PI * x) - 1) + np.exp(x)
    fy = c * np.sin(TWO_PI * x) * (2 * np.cos(TWO_PI * y) - 1) - np.exp(y)
    return fx, fy


SMOOTH_CASE = ManufacturedCase("paper", _smooth_u, _smooth_p, _smooth_f)


def _zeros(x):
    return np.zeros_like(np.asarray(x, float))


# Divergence-free polynomial solutions reproduced exactly at order k.
PATCH_CASES = {
    1: ManufacturedCase(
        "patch1",
        lambda x, y: (x - 2 * y, x - y),
        lambda x, y: _zeros(x),
        lambda x, y: (_zeros(x), _zeros(x)),
    ),
    2: ManufacturedCase(
        "patch2",
        lambda x, y: (x ** 2, -2 * x * y),
        lambda x, y: x + y - 1.0,
        lambda x, y: (-1.0 + _zeros(x), 1.0 + _zeros(x)),
    ),
    3: ManufacturedCase(
        "patch3",
        lambda x, y: (x ** 3, -3 * x ** 2 * y),
        lambda x, y: x ** 2 - y ** 2,
        lambda x, y: (-4 * x, 4 * y),
    ),
}


def get_case(name: str, k: int) -> ManufacturedCase:
    if name == "paper":
        return SMOOTH_CASE
    if name == "patch":
        return PATCH_CASES[k]
    raise ValueError(f"unknown case {name!r}")


# --------------------------------------------------------------------------
# Errors
# --------------------------------------------------------------------------

def pressure_error(mesh: Mesh, k: int, p_coeffs, p_exact) -> float:
    """||p_h - Pi_h p||_0 from the per-cell monomial Gram matrices."""
    ref = project_pressure(mesh, k, p_exact)
    d = (np.asarray(p_coeffs) - ref).reshape(mesh.n_cells, -1)
    total = 0.0
    for c in range(mesh.n_cells):
        geo = CellGeometry.from_mesh(mesh, c)
        M = pb.monomial_mass(geo.xy, geo.basis(k - 1), k - 1)
        total += d[c] @ M @ d[c]
    return math.sqrt(max(total, 0.0))


def compute_errors(system, result: SolveResult, case: ManufacturedCase):
    """(E_v, E_p): discrete energy error against I_h u, L2 error against Pi_h p."""
    mesh, k = system.mesh, system.k
    d = result.u_dofs - interpolate(mesh, k, case.u, system.dofmap)
    e_v = math.sqrt(max(float(d @ (system.A @ d)), 0.0))
    e_p = pressure_error(mesh, k, result.p_coeffs, case.p)
    return e_v, e_p


# --------------------------------------------------------------------------
# Mesh families
# --------------------------------------------------------------------------

def family_mesh(family: str, level: int, rng_seed: int = 42, lloyd_iters: int = 100) -> Mesh:
    """Level L: 2^(L+1) x 2^(L+1) squares, or the same number of Voronoi cells."""
    n = 2 ** (level + 1)
    if family == "uniform":
        return generate_uniform_square_mesh(n)
    if family == "voronoi":
        return generate_voronoi_mesh(n * n, lloyd_iters=lloyd_iters, rng_seed=rng_seed)
    raise ValueError(f"unknown mesh family {family!r}")


# --------------------------------------------------------------------------
# Drivers
# --------------------------------------------------------------------------

@dataclass
class Row:
    h: float
    N_P: int
    dimV0: int
    dimQ: int
    dimZ: int
    E_v: float
    E_p: float
    rate_v: float = float("nan")
    rate_p: float = float("nan")
    cg_iters: int = 0
    t_cg: float = float("nan")
    t_uzawa: float | str = ""


@dataclass
class ConvergenceReport:
    case: str
    family: str
    k: int
    rows: list = field(default_factory=list)
    error: str = ""

    def rates(self):
        return [(r.rate_v, r.rate_p) for r in self.rows]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            names = list(Row.__dataclass_fields__)
            w.writerow(names)
            for r in self.rows:
                w.writerow([_fmt(getattr(r, n)) for n in names])

    def write_dat(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("# h E_v E_p\n")
            for r in self.rows:
                fh.write(f"{r.h!r} {r.E_v!r} {r.E_p!r}\n")


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def solve_case(mesh: Mesh, k: int, case: ManufacturedCase, tol: float = 1e-10,
               p_tol: float = 1e-9, with_uzawa: bool = False, uzawa_budget: float | None = None,
               dump_dir=None, precond: bool = False):
    """Assemble, solve by the reduced path (and optionally Uzawa); return everything."""
    system = assemble(mesh, k, case.f, dump_dir=dump_dir)
    t0 = time.perf_counter()
    basis = build_basis(system)
    lifting = build_lifting(system, case.boundary)
    u, info = solve_velocity(system, basis, lifting, tol, precond=precond)
    p, pinfo = recover_pressure(system, u, p_tol, return_info=True)
    t_cg = time.perf_counter() - t0
    result = SolveResult(u, p, info.iterations, info.residual, t_cg, "reduced", pinfo.iterations)
    if dump_dir is not None:
        from .divfree import dump_basis

        dump_basis(basis, os.path.join(dump_dir, "N.coo"))
    uz = None
    if with_uzawa:
        uz = uzawa(system, case.boundary, tol=tol, time_budget=uzawa_budget)
    return system, basis, lifting, result, uz


def _rate(e_coarse, e_fine, h_coarse, h_fine):
    if e_coarse <= 0 or e_fine <= 0:
        return float("nan")
    return math.log(e_coarse / e_fine) / math.log(h_coarse / h_fine)


def run_convergence(case: ManufacturedCase, family: str, k: int, levels, rng_seed: int = 42,
                    tol: float = 1e-10, out_dir=None, with_uzawa: bool = False,
                    uzawa_budget: float | None = None, log=None) -> ConvergenceReport:
    """One row per level; errors abort with the partial report."""
    report = ConvergenceReport(case.name, family, k)
    for level in levels:
        try:
            mesh = family_mesh(family, level, rng_seed)
            system, basis, lifting, res, uz = solve_case(
                mesh, k, case, tol, with_uzawa=with_uzawa, uzawa_budget=uzawa_budget)
        except (SolverError, ValueError) as exc:
            report.error = f"level {level}: {exc}"
            break
        dims = dimensions(mesh, k)
        e_v, e_p = compute_errors(system, res, case)
        h = 1.0 / math.sqrt(mesh.n_cells)
        row = Row(h, mesh.n_cells, dims["dimV0"], dims["dimQ"], dims["dimZ"], e_v, e_p,
                  cg_iters=res.iterations, t_cg=res.wall_time)
        if uz is not None:
            row.t_uzawa = "*" if uz.timed_out else uz.wall_time
        if report.rows:
            prev = report.rows[-1]
            row.rate_v = _rate(prev.E_v, e_v, prev.h, h)
            row.rate_p = _rate(prev.E_p, e_p, prev.h, h)
        report.rows.append(row)
        if log:
            log(row)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        report.write_csv(os.path.join(out_dir, "report.csv"))
        report.write_dat(os.path.join(out_dir, "errors.dat"))
        write_svg(report, os.path.join(out_dir, "errors.svg"))
    return report


@dataclass
class TimingRow:
    k: int
    h: float
    dimZ: int
    cg_iters: int
    t_cg: float
    uzawa_outer: int
    t_uzawa: float | str
    velocity_gap: float  # ||u_cg - u_uzawa||_A


def run_timing(case: ManufacturedCase, k: int, levels, tol: float = 1e-10,
               uzawa_budget: float | None = 300.0, max_outer: int = 5000,
               out_path=None) -> list:
    """Wall clock of the reduced path vs Uzawa on uniform meshes, same tolerance."""
    rows = []
    for level in levels:
        mesh = family_mesh("uniform", level)
        system, basis, lifting, res, _ = solve_case(mesh, k, case, tol)
        try:
            uz = uzawa(system, case.boundary, tol=tol, time_budget=uzawa_budget,
                       max_outer=max_outer)
        except UzawaDiverged:
            uz = None
        if uz is None or uz.timed_out:
            t_uz, outer, gap = "*", (uz.iterations if uz else 0), float("nan")
        else:
            d = res.u_dofs - uz.u_dofs
            t_uz, outer = uz.wall_time, uz.iterations
            gap = math.sqrt(max(float(d @ (system.A @ d)), 0.0))
        rows.append(TimingRow(k, 1.0 / math.sqrt(mesh.n_cells), basis.dim_Z, res.iterations,
                              res.wall_time, outer, t_uz, gap))
    if out_path is not None:
        with open(out_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(list(TimingRow.__dataclass_fields__))
            for r in rows:
                w.writerow([_fmt(v) for v in asdict(r).values()])
    return rows


# --------------------------------------------------------------------------
# SVG plot (log-log, no plotting dependency)
# --------------------------------------------------------------------------

def write_svg(report: ConvergenceReport, path, width: int = 480, height: int = 360) -> None:
    rows = [r for r in report.rows if r.E_v > 0 and r.E_p > 0]
    pad = 50
    if not rows:
        with open(path, "w") as fh:
            fh.write(f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}"/>\n')
        return
    lh = np.log10([r.h for r in rows])
    le = np.log10([[r.E_v, r.E_p] for r in rows])
    x0, x1 = lh.min() - 0.1, lh.max() + 0.1
    y0, y1 = le.min() - 0.3, le.max() + 0.3

    def X(v):
        return pad + (v - x0) / (x1 - x0) * (width - 2 * pad)

    def Y(v):
        return height - pad - (v - y0) / (y1 - y0) * (height - 2 * pad)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        'font-family="sans-serif" font-size="11">',
        f'<rect x="{pad}" y="{pad}" width="{width - 2 * pad}" height="{height - 2 * pad}" '
        'fill="none" stroke="black"/>',
        f'<text x="{width / 2}" y="{height - 12}" text-anchor="middle">log10 h</text>',
        f'<text x="14" y="{height / 2}" transform="rotate(-90 14 {height / 2})" '
        'text-anchor="middle">log10 error</text>',
        f'<text x="{width / 2}" y="{pad - 12}" text-anchor="middle">'
        f'{report.case}, {report.family}, k={report.k}</text>',
    ]
    for t in np.arange(math.ceil(x0 * 2) / 2, x1, 0.5):
        parts.append(f'<text x="{X(t):.1f}" y="{height - pad + 14}" text-anchor="middle">{t:g}</text>')
    for t in range(math.ceil(y0), math.floor(y1) + 1):
        parts.append(f'<text x="{pad - 6}" y="{Y(t) + 4:.1f}" text-anchor="end">{t}</text>')
    for col, (name, colour) in enumerate([("E_v", "#1f77b4"), ("E_p", "#d62728")]):
        pts = " ".join(f"{X(a):.1f},{Y(b):.1f}" for a, b in zip(lh, le[:, col]))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{colour}" stroke-width="2"/>')
        for a, b in zip(lh, le[:, col]):
            parts.append(f'<circle cx="{X(a):.1f}" cy="{Y(b):.1f}" r="3" fill="{colour}"/>')
        parts.append(f'<text x="{width - pad - 40}" y="{pad + 16 + 14 * col}" fill="{colour}">{name}</text>')
    # slope-k reference triangle anchored at the finest E_v point
    if len(rows) >= 2:
        ax, ay = lh[-1], le[-1, 0] - 0.3
        bx = ax + 0.5 * (lh[-2] - lh[-1]) + 0.3
        by = ay + report.k * (bx - ax)
        tri = f"{X(ax):.1f},{Y(ay):.1f} {X(bx):.1f},{Y(ay):.1f} {X(bx):.1f},{Y(by):.1f}"
        parts.append(f'<polygon points="{tri}" fill="none" stroke="gray"/>')
        parts.append(f'<text x="{X(bx) + 4:.1f}" y="{Y((ay + by) / 2):.1f}" fill="gray">{report.k}</text>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")
