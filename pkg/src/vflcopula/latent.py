"""Latent Gaussian machinery: joint sampling, rank-constrained sequential
adjustment, truncated conditional draws and conditional imputation of
missing blocks.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .rankpriv import PerturbedRanks

SIGMA2_FLOOR = 1e-10


@dataclass
class LatentMatrix:
    """N x d latent draws; `adjusted` means per-column orderings match the
    perturbed-rank orderings on the ranked rows."""

    z: np.ndarray
    adjusted: bool = False
    source_omega: np.ndarray | None = None

    @property
    def n_rows(self) -> int:
        return self.z.shape[0]

    @property
    def dim(self) -> int:
        return self.z.shape[1]


def mvn_sample(omega: np.ndarray, n: int, rng: np.random.Generator) -> LatentMatrix:
    """I.i.d. rows from N(0, omega) via the Cholesky factor."""
    omega = np.asarray(omega, dtype=np.float64)
    try:
        chol = np.linalg.cholesky(omega)
    except np.linalg.LinAlgError as exc:
        raise ValueError("correlation matrix is not positive definite") from exc
    z = rng.standard_normal((n, omega.shape[0])) @ chol.T
    return LatentMatrix(z=z, adjusted=False, source_omega=omega)


def truncated_normal(mu, sigma, lo, hi, rng: np.random.Generator):
    """One draw from N(mu, sigma^2) conditioned on (lo, hi).

    Returns ``(value, degenerate)``; a numerically empty interval falls back
    to the (finite-clamped) midpoint and is flagged.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if lo > hi:
        raise ValueError("lo must not exceed hi")
    return _kernels.truncated_normal_draw(float(mu), float(sigma), float(lo), float(hi), rng.random())


def _conditional_weights(omega: np.ndarray, j: int) -> tuple[np.ndarray, float]:
    w = np.linalg.solve(omega[:j, :j], omega[:j, j])
    sigma2 = omega[j, j] - omega[j, :j] @ w
    return w, float(np.sqrt(max(sigma2, SIGMA2_FLOOR)))


def rank_adjust(
    z: LatentMatrix | np.ndarray,
    ranks: list[PerturbedRanks | None],
    omega: np.ndarray,
    rng: np.random.Generator,
    resample_unranked: bool = True,
) -> tuple[LatentMatrix, int]:
    """Sequential rank-constrained adjustment.

    Column 0 is sorted to match its perturbed-rank order.  Every further
    column j is sorted likewise, then resampled row by row from
    N(mu_ij, sigma_j^2) truncated to the open interval between the current
    rank neighbours, with mu/sigma the normal conditionals given columns
    0..j-1.  Rows without a rank get an unconstrained conditional draw when
    `resample_unranked`, else keep their value.  Returns the adjusted matrix
    and the degenerate-interval count.
    """
    zz = (z.z if isinstance(z, LatentMatrix) else np.asarray(z, dtype=np.float64)).copy()
    n, d = zz.shape
    omega = np.asarray(omega, dtype=np.float64)
    if len(ranks) != d or omega.shape != (d, d):
        raise ValueError("ranks/omega dimension mismatch")
    degenerate = 0
    for j in range(d):
        r = ranks[j]
        if r is not None and r.n:
            rows = r.rows
            if rows.max(initial=-1) >= n:
                raise ValueError(f"rank rows exceed latent row count in column {j}")
            order_rows = rows[np.argsort(r.values, kind="stable")].astype(np.int64)
            zz[order_rows, j] = np.sort(zz[rows, j])
        else:
            order_rows = np.empty(0, dtype=np.int64)
        if j == 0:
            continue
        w, sigma = _conditional_weights(omega, j)
        mu = zz[:, :j] @ w
        pos = np.full(n, -1 if resample_unranked else -2, dtype=np.int64)
        pos[order_rows] = np.arange(len(order_rows))
        u = rng.random(n)
        col = np.ascontiguousarray(zz[:, j])
        degenerate += int(_kernels.adjust_column(col, np.ascontiguousarray(mu), sigma, order_rows, pos, u))
        zz[:, j] = col
    return LatentMatrix(z=zz, adjusted=True, source_omega=omega), degenerate


def conditional_impute(
    z: LatentMatrix | np.ndarray,
    row_missing_cols: np.ndarray,
    omega: np.ndarray,
    rng: np.random.Generator,
) -> LatentMatrix:
    """Fill missing latent cells from N(mu_mis|obs, Omega_mis|obs) per row.

    `row_missing_cols` is an N x d boolean matrix marking missing latent
    cells; rows are grouped by pattern and handled with the usual Schur
    complement formulas.  Observed cells are untouched.
    """
    zz = (z.z if isinstance(z, LatentMatrix) else np.asarray(z, dtype=np.float64)).copy()
    n, d = zz.shape
    omega = np.asarray(omega, dtype=np.float64)
    miss = np.asarray(row_missing_cols, dtype=bool)
    if miss.shape != (n, d):
        raise ValueError("missing-cell matrix must match the latent shape")
    patterns, inverse = np.unique(miss, axis=0, return_inverse=True)
    for pid in range(len(patterns)):
        pat = patterns[pid]
        if not pat.any():
            continue
        rows = np.flatnonzero(inverse == pid)
        mis = np.flatnonzero(pat)
        obs = np.flatnonzero(~pat)
        if len(obs) == 0:
            chol = np.linalg.cholesky(omega[np.ix_(mis, mis)])
            zz[np.ix_(rows, mis)] = rng.standard_normal((len(rows), len(mis))) @ chol.T
            continue
        a = np.linalg.solve(omega[np.ix_(obs, obs)], omega[np.ix_(obs, mis)])
        cond = omega[np.ix_(mis, mis)] - omega[np.ix_(mis, obs)] @ a
        cond = (cond + cond.T) / 2.0
        w, v = np.linalg.eigh(cond)
        chol_like = v * np.sqrt(np.maximum(w, SIGMA2_FLOOR))
        mu = zz[np.ix_(rows, obs)] @ a
        zz[np.ix_(rows, mis)] = mu + rng.standard_normal((len(rows), len(mis))) @ chol_like.T
    src = z.source_omega if isinstance(z, LatentMatrix) else omega
    return LatentMatrix(z=zz, adjusted=isinstance(z, LatentMatrix) and z.adjusted, source_omega=src)
