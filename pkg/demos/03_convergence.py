"""
Convergence on a smooth manufactured solution
=============================================

u = ((1 - cos 2 pi x) sin 2 pi y, -(1 - cos 2 pi y) sin 2 pi x), p = e^x - e^y.
Energy error of the velocity and L2 error of the pressure should both
decay like h^k.  Writes report.csv, errors.dat and errors.svg per run.
"""

import sys
from polystokes import SMOOTH_CASE, run_convergence

out = sys.argv[1] if len(sys.argv) > 1 else "convergence_out"

for family in ("uniform", "voronoi"):
    for k in (1, 2, 3):
        rep = run_convergence(SMOOTH_CASE, family, k, range(1, 4), out_dir=f"{out}/{family}_k{k}")
        print(f"\n{family}, k={k}")
        print("     h      E_v        E_p     rate_v rate_p  cg")
        for r in rep.rows:
            print(f"  {r.h:.4f}  {r.E_v:.3e}  {r.E_p:.3e}  {r.rate_v:5.2f}  {r.rate_p:5.2f}  {r.cg_iters}")

# finer levels (h = 1/32, 1/64) take longer; use `polystokes converge --levels 5`
