import numpy as np
import pytest

from vflcopula.types import ClientPartition, MixedDataset, binary, categorical, continuous, count


def gaussian_dataset(n, p, k_clients, rho=0.4, seed=0, beta=None, noise=1.0):
    """Complete dataset with AR(rho) covariates and a linear response."""
    rng = np.random.default_rng(seed)
    dist = np.abs(np.subtract.outer(np.arange(p), np.arange(p)))
    x = rng.standard_normal((n, p)) @ np.linalg.cholesky(rho**dist).T
    if beta is None:
        beta = np.zeros(p)
    y = x @ beta + noise * rng.standard_normal(n)
    edges = np.linspace(0, p, k_clients + 1).astype(int)
    part = ClientPartition(blocks=tuple((int(edges[i]), int(edges[i + 1])) for i in range(k_clients)))
    cols = [y] + [x[:, j] for j in range(p)]
    return MixedDataset(cols, [continuous()] * (p + 1), part, np.zeros((n, k_clients), dtype=bool))


def tiny_mixed_dataset(seed=0, n=40):
    rng = np.random.default_rng(seed)
    part = ClientPartition(blocks=((0, 2), (2, 4)))
    cols = [
        rng.standard_normal(n),
        rng.standard_normal(n),
        rng.integers(0, 3, n).astype(float),
        rng.poisson(2.0, n).astype(float),
        (rng.random(n) < 0.5).astype(float),
    ]
    kinds = [continuous(), continuous(), categorical(3), count(), binary()]
    return MixedDataset(cols, kinds, part, np.zeros((n, 2), dtype=bool))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
