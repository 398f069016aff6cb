"""
Meshes of the unit square
=========================

Two families: uniform squares and centroidal Voronoi tessellations.
Both are convex polygonal meshes, which is all the discretization needs.
"""

import numpy as np
from polystokes import generate_uniform_square_mesh, generate_voronoi_mesh, validate_regularity

# uniform n x n squares; interior edge and vertex counts follow from n
for n in (4, 8, 16, 32):
    m = generate_uniform_square_mesh(n)
    print(f"uniform 1/{n:<3d} N_P={m.n_cells:5d} N_Ei={m.n_interior_edges:5d} N_Vi={m.n_interior_vertices:5d}")

# Voronoi: random seeds, then Lloyd sweeps move each seed to its cell centroid
m = generate_voronoi_mesh(64, lloyd_iters=100, rng_seed=42)
print("\nvoronoi 64 cells:", m.n_interior_edges, "interior edges,", m.n_interior_vertices, "interior vertices")

# Euler: N_P - N_Ei + N_Vi = 1 on any tiling of the square
print("Euler characteristic:", m.euler_characteristic())

sides = np.array([len(c) for c in m.cells])
vals, counts = np.unique(sides, return_counts=True)
print("polygon sizes:", {int(v): int(c) for v, c in zip(vals, counts)})

# Lloyd relaxation makes the cells rounder; compare shape regularity
raw = generate_voronoi_mesh(64, lloyd_iters=0, rng_seed=42)
for name, mesh in (("no Lloyd", raw), ("100 Lloyd", m)):
    r = validate_regularity(mesh, 0.05)
    print(f"{name:>9s}: min edge/diameter {r.min_edge_ratio:.3f}, cells below 0.05: {len(r.failing_cells)}")
