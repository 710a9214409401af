"""Shared domain types: variable kinds, client partitions, datasets, masks,
copula parameters and the privacy ledger.

Everything here is immutable after construction and safe to share across
concurrent client workers.  Column 0 of a dataset is always the response Y;
covariate j lives in dataset column j + 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

CONTINUOUS = "cont"
BINARY = "bin"
CATEGORICAL = "cat"
COUNT = "count"


@dataclass(frozen=True)
class VariableKind:
    """Type tag of one variable; `levels` only applies to categoricals."""

    tag: str
    levels: int | None = None

    def __post_init__(self):
        if self.tag not in (CONTINUOUS, BINARY, CATEGORICAL, COUNT):
            raise ValueError(f"unknown variable kind {self.tag!r}")
        if self.tag == CATEGORICAL:
            if self.levels is None or self.levels < 2:
                raise ValueError("categorical kind needs levels >= 2")
        elif self.levels is not None:
            raise ValueError("levels only valid for categorical kind")

    @property
    def is_discrete(self) -> bool:
        return self.tag != CONTINUOUS

    def __str__(self):
        return f"cat{self.levels}" if self.tag == CATEGORICAL else self.tag


def continuous() -> VariableKind:
    return VariableKind(CONTINUOUS)


def binary() -> VariableKind:
    return VariableKind(BINARY)


def categorical(levels: int) -> VariableKind:
    return VariableKind(CATEGORICAL, levels)


def count() -> VariableKind:
    return VariableKind(COUNT)


@dataclass(frozen=True)
class ClientPartition:
    """Disjoint covariate blocks, one per client, plus the response owner.

    `blocks[k]` is a half-open (start, stop) range over covariate indices
    0..p-1 (dataset columns start+1..stop).  Blocks must tile 0..p exactly.
    """

    blocks: tuple[tuple[int, int], ...]
    response_owner: int = 0

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple((int(a), int(b)) for a, b in self.blocks))
        cover = []
        for a, b in self.blocks:
            if not 0 <= a < b:
                raise ValueError(f"bad block ({a}, {b})")
            cover.extend(range(a, b))
        if sorted(cover) != list(range(len(cover))):
            raise ValueError("blocks must tile covariates 0..p-1 disjointly")
        if not 0 <= self.response_owner < len(self.blocks):
            raise ValueError("response_owner out of range")

    @property
    def n_clients(self) -> int:
        return len(self.blocks)

    @property
    def p(self) -> int:
        return max(b for _, b in self.blocks) if self.blocks else 0

    def block_size(self, k: int) -> int:
        a, b = self.blocks[k]
        return b - a

    def covariates_of(self, k: int) -> np.ndarray:
        a, b = self.blocks[k]
        return np.arange(a, b)

    def columns_of(self, k: int) -> np.ndarray:
        """Dataset column indices of client k's block (Y excluded)."""
        return self.covariates_of(k) + 1

    def client_of_column(self, col: int) -> int:
        """Owning client of dataset column `col` (col 0 -> response owner)."""
        if col == 0:
            return self.response_owner
        cov = col - 1
        for k, (a, b) in enumerate(self.blocks):
            if a <= cov < b:
                return k
        raise ValueError(f"column {col} outside the partition")


@dataclass
class MixedDataset:
    """Columnar N x (p+1) mixed-type table with a client-block missing mask.

    `mask[i, k]` true means client k's whole covariate block is hidden for
    row i.  Y (column 0) is never masked.
    """

    columns: list[np.ndarray]
    kinds: list[VariableKind]
    partition: ClientPartition
    mask: np.ndarray

    def __post_init__(self):
        self.columns = [np.asarray(c, dtype=np.float64) for c in self.columns]
        self.mask = np.asarray(self.mask, dtype=bool)

    @property
    def n_rows(self) -> int:
        return len(self.columns[0]) if self.columns else 0

    @property
    def p(self) -> int:
        return len(self.columns) - 1

    def observed_rows(self, col: int) -> np.ndarray:
        """Ascending row indices where dataset column `col` is observed."""
        if col == 0:
            return np.arange(self.n_rows)
        k = self.partition.client_of_column(col)
        return np.flatnonzero(~self.mask[:, k])

    def covariate_matrix(self) -> np.ndarray:
        """N x p matrix of covariates (missing entries still carry values)."""
        return np.column_stack(self.columns[1:]) if self.p else np.empty((self.n_rows, 0))

    def complete_rows(self) -> np.ndarray:
        return np.flatnonzero(~self.mask.any(axis=1))


@dataclass
class ClientView:
    """One client's slice of a dataset: its columns plus observed flags."""

    client: int
    columns: list[np.ndarray]
    kinds: list[VariableKind]
    observed: np.ndarray
    column_indices: np.ndarray


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_dataset(ds: MixedDataset) -> ValidationReport:
    """Collect every invariant violation; an empty report means valid."""
    rep = ValidationReport()
    n = ds.n_rows
    if len(ds.columns) != len(ds.kinds):
        rep.violations.append("columns/kinds length mismatch")
        return rep
    for j, col in enumerate(ds.columns):
        if len(col) != n:
            rep.violations.append(f"column {j} ragged: {len(col)} != {n}")
    if ds.mask.shape != (n, ds.partition.n_clients):
        rep.violations.append(f"mask shape {ds.mask.shape} != ({n}, {ds.partition.n_clients})")
        return rep
    if ds.partition.p != ds.p:
        rep.violations.append(f"partition covers {ds.partition.p} covariates, dataset has {ds.p}")
    if np.isnan(ds.columns[0]).any():
        rep.violations.append("response masked")
    for j, (col, kind) in enumerate(zip(ds.columns, ds.kinds)):
        if len(col) != n:
            continue  # already reported as ragged
        if j == 0:
            obs = np.arange(n)
        else:
            obs = ds.observed_rows(j) if ds.partition.p == ds.p else np.arange(n)
        vals = col[obs]
        if j > 0 and np.isnan(vals).any():
            rep.violations.append(f"column {j}: NaN at observed row")
        vals = vals[~np.isnan(vals)]
        if kind.tag == CATEGORICAL and vals.size:
            if vals.min() < 0 or vals.max() >= kind.levels:
                rep.violations.append(f"column {j}: categorical out of range")
            elif not np.all(vals == np.rint(vals)):
                rep.violations.append(f"column {j}: categorical not integral")
        elif kind.tag == BINARY and vals.size:
            if not np.isin(vals, (0.0, 1.0)).all():
                rep.violations.append(f"column {j}: binary outside {{0,1}}")
        elif kind.tag == COUNT and vals.size:
            if vals.min() < 0 or not np.all(vals == np.rint(vals)):
                rep.violations.append(f"column {j}: count not a non-negative integer")
    return rep


def split_by_client(ds: MixedDataset) -> list[ClientView]:
    """Per-client views; concatenating them reproduces the covariate block."""
    views = []
    for k in range(ds.partition.n_clients):
        cols = ds.partition.columns_of(k)
        views.append(
            ClientView(
                client=k,
                columns=[ds.columns[c] for c in cols],
                kinds=[ds.kinds[c] for c in cols],
                observed=~ds.mask[:, k],
                column_indices=cols,
            )
        )
    return views


@dataclass
class PrivacyLedger:
    """Per-client (eps1, eps2) budgets with the iteration count T.

    Budgets are stored exactly as supplied; the accountant only adds.
    """

    per_client: list[tuple[float, float]]
    iterations: int = 1

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        for e1, e2 in self.per_client:
            if e1 < 0 or e2 < 0:
                raise ValueError("budgets must be non-negative")

    def vdadp(self, k: int) -> float:
        e1, e2 = self.per_client[k]
        return self.iterations * e1 + e2

    @property
    def total_dp(self) -> float:
        return sum(self.vdadp(k) for k in range(len(self.per_client)))


@dataclass
class CopulaModel:
    """Correlation matrix plus one marginal CDF per variable."""

    omega: np.ndarray
    marginals: list

    def __post_init__(self):
        m = np.asarray(self.omega, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("omega must be square")
        if np.abs(m - m.T).max(initial=0.0) > 1e-12:
            raise ValueError("omega not symmetric to 1e-12")
        if np.abs(np.diag(m) - 1.0).max(initial=0.0) > 1e-12:
            raise ValueError("omega diagonal must be 1")
        self.omega = m

    @property
    def dim(self) -> int:
        return self.omega.shape[0]
