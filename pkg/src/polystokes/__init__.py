"""Divergence-free nonconforming virtual elements for 2D Stokes on convex polygons."""

from .mesh import (Mesh, MeshError, build_topology, generate_uniform_square_mesh,
                   generate_voronoi_mesh, read_mesh, validate_regularity, write_mesh)
from .assembly import SparseSystem, assemble, build_dofmap, dimensions, interpolate
from .divfree import (CompatibilityError, DivergenceCheckError, DivFreeBasis, build_basis,
                      build_lifting, dim_Z)
from .solver import SolveResult, SolverError, cg, recover_pressure, solve_reduced, uzawa
from .harness import (SMOOTH_CASE, PATCH_CASES, ManufacturedCase, compute_errors, run_convergence,
                      run_timing)

__version__ = "0.1.0"

__all__ = [
    "Mesh", "MeshError", "build_topology", "generate_uniform_square_mesh",
    "generate_voronoi_mesh", "read_mesh", "validate_regularity", "write_mesh",
    "SparseSystem", "assemble", "build_dofmap", "dimensions", "interpolate",
    "CompatibilityError", "DivergenceCheckError", "DivFreeBasis", "build_basis",
    "build_lifting", "dim_Z",
    "SolveResult", "SolverError", "cg", "recover_pressure", "solve_reduced", "uzawa",
    "SMOOTH_CASE", "PATCH_CASES", "ManufacturedCase", "compute_errors", "run_convergence",
    "run_timing",
]
