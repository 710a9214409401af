"""CSV ingestion and serialization.

Format: header cells are ``name:kind`` with kind one of ``cont``, ``bin``,
``cat<levels>`` (e.g. ``cat3``) or ``count``; column 0 is the response.
An empty cell marks a missing value; missingness must be client-block-wise.
The client partition travels in a JSON sidecar::

    {"blocks": [[0, 2], [2, 4]], "response_owner": 0}

with blocks as half-open ranges over covariate indices 0..p-1.
"""

from __future__ import annotations

import csv
import json
import re

import numpy as np

from .types import (
    BINARY,
    CATEGORICAL,
    CONTINUOUS,
    COUNT,
    ClientPartition,
    MixedDataset,
    VariableKind,
)

_KIND_RE = re.compile(r"^(cont|bin|count|cat(\d+))$")


def parse_kind(token: str) -> VariableKind:
    m = _KIND_RE.match(token.strip())
    if not m:
        raise ValueError(f"unknown kind token {token!r}")
    if m.group(2) is not None:
        return VariableKind(CATEGORICAL, int(m.group(2)))
    return VariableKind(m.group(1))


def kind_token(kind: VariableKind) -> str:
    return str(kind)


def read_partition(path) -> ClientPartition:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return ClientPartition(
        blocks=tuple((int(a), int(b)) for a, b in doc["blocks"]),
        response_owner=int(doc.get("response_owner", 0)),
    )


def write_partition(partition: ClientPartition, path) -> None:
    doc = {
        "blocks": [[a, b] for a, b in partition.blocks],
        "response_owner": partition.response_owner,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def read_dataset(csv_path, partition_path) -> MixedDataset:
    """Load a dataset; empty covariate cells become the client-block mask."""
    partition = read_partition(partition_path)
    with open(csv_path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ValueError("empty CSV")
    header, body = rows[0], rows[1:]
    names, kinds = [], []
    for cell in header:
        name, _, tok = cell.rpartition(":")
        if not name:
            raise ValueError(f"header cell {cell!r} is not name:kind")
        names.append(name)
        kinds.append(parse_kind(tok))
    ncol = len(header)
    n = len(body)
    data = np.full((n, ncol), np.nan)
    for i, row in enumerate(body):
        if len(row) != ncol:
            raise ValueError(f"row {i}: {len(row)} cells, expected {ncol}")
        for j, cell in enumerate(row):
            if cell.strip() != "":
                data[i, j] = float(cell)

    if np.isnan(data[:, 0]).any():
        raise ValueError("response column contains missing cells")

    k_clients = partition.n_clients
    mask = np.zeros((n, k_clients), dtype=bool)
    for k in range(k_clients):
        cols = partition.columns_of(k)
        block = np.isnan(data[:, cols])
        any_m = block.any(axis=1)
        all_m = block.all(axis=1)
        if np.any(any_m & ~all_m):
            bad = int(np.flatnonzero(any_m & ~all_m)[0])
            raise ValueError(f"row {bad}: client {k} block partially missing")
        mask[:, k] = all_m

    ds = MixedDataset(
        columns=[data[:, j] for j in range(ncol)],
        kinds=kinds,
        partition=partition,
        mask=mask,
    )
    ds.names = names
    return ds


def write_dataset(ds: MixedDataset, csv_path, partition_path=None) -> None:
    names = getattr(ds, "names", None) or (
        ["y"] + [f"x{j}" for j in range(1, len(ds.columns))]
    )
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(f"{nm}:{kind_token(kd)}" for nm, kd in zip(names, ds.kinds))
        n = ds.n_rows
        masked = np.zeros((n, len(ds.columns)), dtype=bool)
        for k in range(ds.partition.n_clients):
            for c in ds.partition.columns_of(k):
                masked[:, c] = ds.mask[:, k]
        for i in range(n):
            row = []
            for j, col in enumerate(ds.columns):
                if j > 0 and masked[i, j]:
                    row.append("")
                else:
                    v = col[i]
                    row.append(_fmt(v, ds.kinds[j]))
            w.writerow(row)
    if partition_path is not None:
        write_partition(ds.partition, partition_path)


def _fmt(v: float, kind: VariableKind) -> str:
    if kind.is_discrete and v == np.rint(v):
        return str(int(v))
    return format(float(v), ".17g")
