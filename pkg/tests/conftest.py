import functools

import numpy as np
import pytest

from polystokes.assembly import assemble
from polystokes.mesh import generate_uniform_square_mesh, generate_voronoi_mesh

# Lines collected by test_acceptance.py, printed once at the end of the run.
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@functools.lru_cache(maxsize=None)
def uniform(n):
    return generate_uniform_square_mesh(n)


@functools.lru_cache(maxsize=None)
def voronoi(n, seed=42, lloyd=100):
    return generate_voronoi_mesh(n, lloyd_iters=lloyd, rng_seed=seed)


@functools.lru_cache(maxsize=None)
def system(kind, n, k):
    mesh = uniform(n) if kind == "uniform" else voronoi(n)
    return assemble(mesh, k)


def random_convex_polygon(rng, n, perturb=0.25, scale=None):
    """Regular n-gon with jittered angles and radii, rejected until convex."""
    while True:
        theta = 2 * np.pi * (np.arange(n) + perturb * (rng.random(n) - 0.5)) / n
        r = 1.0 + 0.3 * perturb * (rng.random(n) - 0.5)
        xy = np.column_stack([r * np.cos(theta), r * np.sin(theta)])
        d = np.roll(xy, -1, axis=0) - xy
        dn = np.roll(d, -1, axis=0)
        cross = d[:, 0] * dn[:, 1] - d[:, 1] * dn[:, 0]
        if np.all(cross > 1e-3):
            s = rng.uniform(0.05, 2.0) if scale is None else scale
            return s * xy + rng.uniform(-1, 1, 2)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
