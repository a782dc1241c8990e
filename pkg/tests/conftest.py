"""Shared fixtures: grids, kernels, potentials, and assembled systems.

Session-scoped where construction is expensive (dense kernel matrices,
factorizations); everything here is immutable after construction.
"""

import numpy as np
import pytest

from nlch import (
    KernelSpec,
    StripGrid,
    System,
    build_kernel_ops,
    logarithmic,
)


@pytest.fixture(scope="session")
def grid():
    """Standard 32x17 unit strip used by the rate and conservation studies."""
    return StripGrid(32, 17)


@pytest.fixture(scope="session")
def small_grid():
    return StripGrid(8, 5)


@pytest.fixture(scope="session")
def kernel_ops(grid):
    return build_kernel_ops(
        grid,
        KernelSpec("gaussian", 0.15, 2.0),
        KernelSpec("gaussian", 0.15, 1.5),
    )


@pytest.fixture(scope="session")
def log_potential():
    return logarithmic(0.5, 0.75)


@pytest.fixture(scope="session")
def system(grid, kernel_ops, log_potential):
    return System(grid, kernel_ops, log_potential, log_potential)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_bulk(grid, rng, scale=1.0):
    from nlch import BulkField

    return BulkField(grid, scale * rng.standard_normal((grid.nx, grid.ny)))


def random_surf(grid, rng, scale=1.0):
    from nlch import SurfField

    return SurfField(grid, scale * rng.standard_normal((2, grid.nx)))


def random_pair(grid, rng, scale=1.0):
    from nlch import FieldPair

    return FieldPair(random_bulk(grid, rng, scale), random_surf(grid, rng, scale))
