"""Synthetic data generation for the simulation studies.

Latent rows come from a three-component multivariate normal mixture with
weights (0.4, 0.3, 0.3) and means 0, -1, +1; the three covariance patterns
are a client-block structure (within 0.3, across 0.1), a Toeplitz decay
0.5^|j1-j2| and a two-band structure (0.5 at lag 1, 0.25 at lag 2).  Latent
columns are pushed through mixed-type transforms, shuffled, and partitioned
contiguously into client blocks.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit, softmax

from ..types import (
    ClientPartition,
    MixedDataset,
    VariableKind,
    binary,
    categorical,
    continuous,
    count,
)

MIX_WEIGHTS = (0.4, 0.3, 0.3)


def _sigma_block(p: int, k_clients: int) -> np.ndarray:
    sizes = [len(b) for b in np.array_split(np.arange(p), k_clients)]
    s = np.full((p, p), 0.1)
    at = 0
    for sz in sizes:
        s[at : at + sz, at : at + sz] = 0.3
        at += sz
    np.fill_diagonal(s, 1.0)
    return s


def _sigma_toeplitz(p: int) -> np.ndarray:
    d = np.abs(np.subtract.outer(np.arange(p), np.arange(p)))
    return 0.5**d


def _sigma_twoband(p: int) -> np.ndarray:
    d = np.abs(np.subtract.outer(np.arange(p), np.arange(p)))
    s = np.where(d == 1, 0.5, np.where(d == 2, 0.25, 0.0))
    np.fill_diagonal(s, 1.0)
    return s


def generate_mixture(
    n: int,
    p: int,
    k_clients: int,
    q: tuple[int, int, int, int],
    rng: np.random.Generator,
    cat_levels: int = 3,
    response_owner: int = 0,
    perm_rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, list[VariableKind], ClientPartition]:
    """Mixed-type covariate matrix, its kinds, and the client partition.

    `perm_rng` drives the type-shuffling permutation separately so train and
    held-out draws can share a column layout.
    """
    q1, q2, q3, q4 = q
    if q1 + q2 + q3 + q4 != p:
        raise ValueError("type counts must sum to p")
    mus = (np.zeros(p), -np.ones(p), np.ones(p))
    sigmas = (_sigma_block(p, k_clients), _sigma_toeplitz(p), _sigma_twoband(p))
    chols = []
    for s in sigmas:
        try:
            chols.append(np.linalg.cholesky(s))
        except np.linalg.LinAlgError as exc:
            raise ValueError("mixture covariance not positive definite") from exc

    comp = rng.choice(3, size=n, p=MIX_WEIGHTS)
    u = rng.standard_normal((n, p))
    lat = np.empty((n, p))
    for c in range(3):
        rows = comp == c
        lat[rows] = u[rows] @ chols[c].T + mus[c]

    x = np.empty((n, p))
    kinds: list[VariableKind] = []
    at = 0
    x[:, at : at + q1] = lat[:, at : at + q1]
    kinds += [continuous()] * q1
    at += q1
    if q2:
        w = np.arange(1, cat_levels + 1) / cat_levels
        logits = lat[:, at : at + q2, None] * w[None, None, :]
        probs = softmax(logits, axis=2)
        cum = probs.cumsum(axis=2)
        draws = rng.random((n, q2, 1))
        x[:, at : at + q2] = (draws > cum).sum(axis=2)
        kinds += [categorical(cat_levels)] * q2
        at += q2
    if q3:
        lam = np.maximum(2.0 + 0.3 * lat[:, at : at + q3], 1e-9)
        x[:, at : at + q3] = rng.poisson(lam)
        kinds += [count()] * q3
        at += q3
    if q4:
        x[:, at : at + q4] = (rng.random((n, q4)) < expit(0.5 * lat[:, at : at + q4])).astype(float)
        kinds += [binary()] * q4

    perm = (perm_rng or rng).permutation(p)
    x = x[:, perm]
    kinds = [kinds[i] for i in perm]

    edges = np.cumsum([0] + [len(b) for b in np.array_split(np.arange(p), k_clients)])
    partition = ClientPartition(
        blocks=tuple((int(edges[i]), int(edges[i + 1])) for i in range(k_clients)),
        response_owner=response_owner,
    )
    return x, kinds, partition


def make_beta(partition: ClientPartition, sparsity: float) -> np.ndarray:
    """True coefficients: per client, (-1)^j / 3 for the first ceil(s*p_k)
    within-client positions, zero elsewhere."""
    if not 0 < sparsity <= 1:
        raise ValueError("sparsity must lie in (0, 1]")
    beta = np.zeros(partition.p)
    for k in range(partition.n_clients):
        a, b = partition.blocks[k]
        target = sparsity * (b - a)
        if abs(target - round(target)) < 1e-9:  # guard float ceil of exact ints
            target = round(target)
        nz = int(np.ceil(target))
        for j in range(1, nz + 1):
            beta[a + j - 1] = ((-1) ** j) / 3.0
    return beta


def gen_response(x: np.ndarray, beta: np.ndarray, link: str, rng: np.random.Generator) -> np.ndarray:
    lin = x @ beta
    if link == "gaussian":
        return lin + rng.standard_normal(len(lin))
    if link == "logistic":
        return (rng.random(len(lin)) < expit(lin)).astype(float)
    raise ValueError(f"unknown link {link!r}")


def assemble_dataset(x, y, kinds, partition, link: str = "gaussian") -> MixedDataset:
    n = len(y)
    cols = [np.asarray(y, dtype=np.float64)] + [x[:, j] for j in range(x.shape[1])]
    y_kind = continuous() if link == "gaussian" else binary()
    return MixedDataset(
        columns=cols,
        kinds=[y_kind] + list(kinds),
        partition=partition,
        mask=np.zeros((n, partition.n_clients), dtype=bool),
    )
