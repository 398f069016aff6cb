import csv

import numpy as np
import pytest

from polystokes.assembly import assemble, dimensions, interpolate, project_pressure
from polystokes.harness import (SMOOTH_CASE, PATCH_CASES, ConvergenceReport, compute_errors,
                                family_mesh, get_case, run_convergence, run_timing)
from polystokes.solver import SolveResult

CASES = [SMOOTH_CASE, *PATCH_CASES.values()]


def _fd_residual(case, x, y, eps=1e-4):
    """-lap u + grad p - f at (x, y) by central differences."""
    def U(a, b):
        return np.array(case.u(a, b), float)

    lap = (U(x + eps, y) + U(x - eps, y) + U(x, y + eps) + U(x, y - eps) - 4 * U(x, y)) / eps**2
    gp = np.array([case.p(x + eps, y) - case.p(x - eps, y),
                   case.p(x, y + eps) - case.p(x, y - eps)]) / (2 * eps)
    f = np.array(case.f(x, y), float)
    div = ((U(x + eps, y) - U(x - eps, y))[0] + (U(x, y + eps) - U(x, y - eps))[1]) / (2 * eps)
    return -lap + gp - f, div, max(1.0, np.abs(f).max())


@pytest.mark.parametrize("case", CASES, ids=lambda c: c.name)
def test_forcing_matches_finite_differences(case, rng):
    # Richardson-extrapolated central differences, relative tolerance 1e-6
    for x, y in rng.random((20, 2)):
        r1, d1, s = _fd_residual(case, x, y, 2e-3)
        r2, d2, _ = _fd_residual(case, x, y, 1e-3)
        assert np.abs((4 * r2 - r1) / 3).max() <= 1e-6 * s
        assert abs((4 * d2 - d1) / 3) <= 1e-6 * s


def test_smooth_boundary_data():
    t = np.linspace(0, 1, 11)
    for x, y in [(t, 0 * t), (t, 1 + 0 * t), (0 * t, t), (1 + 0 * t, t)]:
        ux, uy = SMOOTH_CASE.u(x, y)
        assert np.abs(ux).max() < 1e-14 and np.abs(uy).max() < 1e-14


def test_get_case():
    assert get_case("paper", 2) is SMOOTH_CASE
    assert get_case("patch", 3) is PATCH_CASES[3]
    with pytest.raises(ValueError):
        get_case("nope", 1)


def test_errors_vanish_on_exact_discrete_data():
    case = PATCH_CASES[2]
    s = assemble(family_mesh("uniform", 1), 2, case.f)
    u = interpolate(s.mesh, 2, case.u, s.dofmap)
    p = project_pressure(s.mesh, 2, case.p)
    e_v, e_p = compute_errors(s, SolveResult(u, p, 0, 0.0, 0.0), case)
    assert e_v == 0.0 and e_p < 1e-15


def test_pressure_error_oracle():
    # p_h = 0 against p = x on one square: ||Pi_0 x||^2 = (1/2)^2
    from polystokes.harness import pressure_error
    from polystokes.mesh import generate_uniform_square_mesh

    m = generate_uniform_square_mesh(1)
    assert pressure_error(m, 1, np.zeros(1), lambda x, y: x) == pytest.approx(0.5)


def test_family_levels():
    assert family_mesh("uniform", 3).n_cells == 256
    assert family_mesh("voronoi", 1, lloyd_iters=5).n_cells == 16
    with pytest.raises(ValueError):
        family_mesh("hex", 1)


def test_table_dimensions_k3():
    d = dimensions(family_mesh("uniform", 2), 3)
    assert (d["dimV0"], d["dimQ"], d["dimZ"]) == (1056, 383, 673)


def test_convergence_k1_and_outputs(tmp_path):
    rep = run_convergence(SMOOTH_CASE, "uniform", 1, [1, 2], out_dir=tmp_path)
    assert isinstance(rep, ConvergenceReport) and len(rep.rows) == 2
    r = rep.rows[-1]
    assert 0.7 <= r.rate_v <= 1.5
    assert r.dimV0 - r.dimQ == r.dimZ
    with open(tmp_path / "report.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 2 and float(rows[0]["h"]) == 0.25
    assert "t_uzawa" in rows[0]
    svg = (tmp_path / "errors.svg").read_text()
    assert svg.startswith("<svg") and "polyline" in svg
    dat = (tmp_path / "errors.dat").read_text().splitlines()
    assert dat[0].startswith("#") and len(dat) == 3


def test_convergence_csv_reproducible(tmp_path):
    a = run_convergence(PATCH_CASES[1], "voronoi", 1, [1], out_dir=tmp_path / "a")
    b = run_convergence(PATCH_CASES[1], "voronoi", 1, [1], out_dir=tmp_path / "b")
    ra, rb = a.rows[0], b.rows[0]
    assert (ra.E_v, ra.E_p, ra.dimZ) == (rb.E_v, rb.E_p, rb.dimZ)


def test_timing_small(tmp_path):
    rows = run_timing(SMOOTH_CASE, 1, [1], out_path=tmp_path / "t.csv")
    r = rows[0]
    assert r.t_cg < 5 and r.t_uzawa != "*" and r.t_uzawa < 5
    assert r.velocity_gap < 1e-6
    rows = run_timing(SMOOTH_CASE, 2, [1], max_outer=2)
    assert rows[0].t_uzawa == "*"
    assert (tmp_path / "t.csv").read_text().startswith("k,h,dimZ")
