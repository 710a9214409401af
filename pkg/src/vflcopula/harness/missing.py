"""Client-block missingness injection (MCAR and two MAR variants)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from ..types import MixedDataset

# §-default observation probabilities reinterpreted as missing rates; the
# published table annotation conflicts with both readings, so these are
# plain config values.
DEFAULT_MCAR_RATES = (0.05, 0.10, 0.15, 0.20, 0.25)


@dataclass(frozen=True)
class Mcar:
    rates: tuple[float, ...]

    def __post_init__(self):
        if any(not 0.0 <= r <= 1.0 for r in self.rates):
            raise ValueError("MCAR rates must lie in [0, 1]")


@dataclass(frozen=True)
class Mar:
    """Logistic missingness driven by always-observed clients' covariates.

    Eligible clients are drawn Bernoulli(0.5); for an eligible client k the
    missingness log-odds are
    ``intercept + sum_{j observed} (-1)^j zeta_j' x_i^j`` with
    zeta_{ja} = 1/(j*a) over 1-based client/coordinate indices.  The complex
    variant subtracts the response and adds the alternating sum of earlier
    eligible clients' masks.
    """

    complex_deps: bool = False
    intercept: float = 1.0


def inject_missing(ds: MixedDataset, mechanism, rng: np.random.Generator) -> MixedDataset:
    """Return a copy of `ds` with a freshly drawn client-block mask."""
    if mechanism is None:
        return ds
    n, k_clients = ds.n_rows, ds.partition.n_clients
    mask = np.zeros((n, k_clients), dtype=bool)
    if isinstance(mechanism, Mcar):
        if len(mechanism.rates) != k_clients:
            raise ValueError("need one MCAR rate per client")
        for k, rate in enumerate(mechanism.rates):
            mask[:, k] = rng.random(n) < rate
    elif isinstance(mechanism, Mar):
        eligible = rng.random(k_clients) < 0.5
        obs_clients = np.flatnonzero(~eligible)
        base = np.full(n, mechanism.intercept)
        for k in obs_clients:
            j = k + 1  # 1-based client index
            cols = ds.partition.columns_of(k)
            zeta = 1.0 / (j * np.arange(1, len(cols) + 1))
            xb = np.column_stack([ds.columns[c] for c in cols])
            base = base + ((-1) ** j) * (xb @ zeta)
        if mechanism.complex_deps:
            base = base - ds.columns[0]
        for k in np.flatnonzero(eligible):
            logit = base.copy()
            if mechanism.complex_deps:
                for kp in np.flatnonzero(eligible):
                    if kp >= k:
                        break
                    logit += ((-1) ** (kp + 1)) * mask[:, kp]
            mask[:, k] = rng.random(n) < expit(logit)
    else:
        raise ValueError(f"unknown missingness mechanism {mechanism!r}")
    return MixedDataset(
        columns=[c.copy() for c in ds.columns],
        kinds=list(ds.kinds),
        partition=ds.partition,
        mask=mask,
    )
