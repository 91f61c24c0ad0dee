import numpy as np
import pytest

from desing.costs import QuadraticCost, generate_problem
from desing.manifold import ManifoldDims, random_point


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_point(rng, m=8, n=7, r=2, sigma_range=(0.5, 2.0)):
    return random_point(ManifoldDims(m, n, r), rng, sigma_range=sigma_range)


def completion_cost(m, n, r, seed, oversampling=3.0):
    over = min(oversampling, 0.9 * m * n / ((m + n - r) * r))
    return generate_problem(m, n, max(1, r - 1), r=r, oversampling=over, seed=seed).cost()


def quadratic_cost(m, n, seed):
    A = np.random.default_rng(seed).standard_normal((m, n))
    return QuadraticCost(A / np.linalg.norm(A))


def low_rank(rng, m, n, r, scale=1.0):
    return scale * rng.standard_normal((m, r)) @ rng.standard_normal((r, n))
