"""Command line driver: ``polystokes solve|converge|timing|meshgen``.

Exit status: 0 success, 2 solver failure, 3 invalid input.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys

from .assembly import dimensions
from .divfree import CompatibilityError, DivergenceCheckError
from .harness import (ConvergenceReport, Row, compute_errors, get_case, run_convergence,
                      run_timing, solve_case, write_svg)
from .mesh import (MeshError, generate_uniform_square_mesh, generate_voronoi_mesh, read_mesh,
                   write_mesh)
from .solver import SolverError, energy_norm

log = logging.getLogger("polystokes")

EXIT_OK, EXIT_SOLVER, EXIT_INPUT = 0, 2, 3


class InputError(ValueError):
    pass


def parse_mesh(spec: str, lloyd_iters: int = 100):
    """``uniform:N``, ``voronoi:N[,seed]`` or a mesh file path."""
    if spec.startswith("uniform:"):
        try:
            n = int(spec.split(":", 1)[1])
        except ValueError:
            raise InputError(f"bad mesh spec {spec!r}") from None
        if n < 1:
            raise InputError("uniform:N needs N >= 1")
        return generate_uniform_square_mesh(n)
    if spec.startswith("voronoi:"):
        parts = spec.split(":", 1)[1].split(",")
        try:
            n = int(parts[0])
            seed = int(parts[1]) if len(parts) > 1 else 0
        except ValueError:
            raise InputError(f"bad mesh spec {spec!r}") from None
        if n < 1 or len(parts) > 2:
            raise InputError(f"bad mesh spec {spec!r}")
        return generate_voronoi_mesh(n, lloyd_iters=lloyd_iters, rng_seed=seed)
    if not os.path.exists(spec):
        raise InputError(f"no such mesh file: {spec}")
    return read_mesh(spec)


def _cmd_solve(args) -> int:
    mesh = parse_mesh(args.mesh, args.lloyd)
    case = get_case(args.case, args.k)
    os.makedirs(args.out, exist_ok=True)
    write_mesh(mesh, os.path.join(args.out, "mesh.txt"))
    dump_dir = args.out if args.dump_matrices else None
    system, basis, lifting, res, uz = solve_case(
        mesh, args.k, case, args.tol, with_uzawa=args.uzawa, dump_dir=dump_dir)
    e_v, e_p = compute_errors(system, res, case)
    dims = dimensions(mesh, args.k)
    row = Row(1.0 / math.sqrt(mesh.n_cells), mesh.n_cells, dims["dimV0"], dims["dimQ"],
              dims["dimZ"], e_v, e_p, cg_iters=res.iterations, t_cg=res.wall_time)
    if uz is not None:
        row.t_uzawa = "*" if uz.timed_out else uz.wall_time
        log.info("uzawa: %d outer iterations, |u_cg - u_uzawa|_A = %.3e",
                 uz.iterations, energy_norm(system, res.u_dofs - uz.u_dofs))
    report = ConvergenceReport(case.name, args.mesh, args.k, [row])
    report.write_csv(os.path.join(args.out, "report.csv"))
    write_svg(report, os.path.join(args.out, "errors.svg"))
    print(f"k={args.k} cells={mesh.n_cells} dimZ={basis.dim_Z} cg_iters={res.iterations} "
          f"E_v={e_v:.6e} E_p={e_p:.6e}")
    return EXIT_OK


def _cmd_converge(args) -> int:
    case = get_case(args.case, args.k)
    levels = range(args.first, args.levels + 1)

    def show(r):
        print(f"h={r.h:.5f} N_P={r.N_P} dimZ={r.dimZ} E_v={r.E_v:.4e} E_p={r.E_p:.4e} "
              f"rate_v={r.rate_v:.2f} rate_p={r.rate_p:.2f} cg={r.cg_iters}")

    report = run_convergence(case, args.family, args.k, levels, rng_seed=args.seed, tol=args.tol,
                             out_dir=args.out, with_uzawa=args.uzawa, log=show)
    if report.error:
        print(f"aborted: {report.error}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def _cmd_timing(args) -> int:
    case = get_case(args.case, args.k)
    os.makedirs(args.out, exist_ok=True)
    rows = run_timing(case, args.k, range(args.first, args.levels + 1), tol=args.tol,
                      uzawa_budget=args.budget, out_path=os.path.join(args.out, "timing.csv"))
    for r in rows:
        t_uz = r.t_uzawa if isinstance(r.t_uzawa, str) else f"{r.t_uzawa:.3f}"
        print(f"k={r.k} h={r.h:.5f} t_cg={r.t_cg:.3f} t_uzawa={t_uz}")
    return EXIT_OK


def _cmd_meshgen(args) -> int:
    mesh = parse_mesh(args.mesh, args.lloyd)
    write_mesh(mesh, args.out)
    nc, nei, nvi = mesh.n_cells, mesh.n_interior_edges, mesh.n_interior_vertices
    print(f"N_P={nc} N_Ei={nei} N_Vi={nvi} h={mesh.h:.6f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    p = argparse.ArgumentParser(prog="polystokes", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", parents=[common], help="solve one manufactured problem")
    s.add_argument("--mesh", required=True, help="file, uniform:N or voronoi:N,seed")
    s.add_argument("--k", type=int, choices=(1, 2, 3), default=1)
    s.add_argument("--case", choices=("paper", "patch"), default="paper")
    s.add_argument("--tol", type=float, default=1e-10)
    s.add_argument("--out", default="out")
    s.add_argument("--uzawa", action="store_true")
    s.add_argument("--dump-matrices", action="store_true")
    s.add_argument("--lloyd", type=int, default=100)
    s.set_defaults(func=_cmd_solve)

    c = sub.add_parser("converge", parents=[common], help="error table over a mesh family")
    c.add_argument("--family", choices=("uniform", "voronoi"), default="uniform")
    c.add_argument("--k", type=int, choices=(1, 2, 3), default=1)
    c.add_argument("--levels", type=int, default=4, help="finest level L: h = 2^-(L+1)")
    c.add_argument("--first", type=int, default=1)
    c.add_argument("--case", choices=("paper", "patch"), default="paper")
    c.add_argument("--seed", type=int, default=42)
    c.add_argument("--tol", type=float, default=1e-10)
    c.add_argument("--uzawa", action="store_true")
    c.add_argument("--out", default="out")
    c.set_defaults(func=_cmd_converge)

    t = sub.add_parser("timing", parents=[common], help="reduced CG vs Uzawa wall clock")
    t.add_argument("--k", type=int, choices=(1, 2, 3), default=1)
    t.add_argument("--levels", type=int, default=3)
    t.add_argument("--first", type=int, default=1)
    t.add_argument("--case", choices=("paper", "patch"), default="paper")
    t.add_argument("--tol", type=float, default=1e-10)
    t.add_argument("--budget", type=float, default=300.0, help="Uzawa seconds before '*'")
    t.add_argument("--out", default="out")
    t.set_defaults(func=_cmd_timing)

    m = sub.add_parser("meshgen", parents=[common], help="write a generated mesh to a file")
    m.add_argument("mesh", help="uniform:N or voronoi:N,seed")
    m.add_argument("--lloyd", type=int, default=100)
    m.add_argument("--out", required=True)
    m.set_defaults(func=_cmd_meshgen)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if getattr(args, "levels", 1) < getattr(args, "first", 1):
        print("error: --levels must be >= --first", file=sys.stderr)
        return EXIT_INPUT
    if getattr(args, "tol", 1.0) <= 0:
        print("error: --tol must be positive", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except (InputError, MeshError, CompatibilityError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (SolverError, DivergenceCheckError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
