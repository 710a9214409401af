"""Locally differentially private rank release and copula correlation
estimation from perturbed pairwise comparisons.

Each variable's ranks are encoded as the binary vector of pairwise
comparisons, every bit is flipped independently with probability
theta = 1/(1 + exp(eps)), and ranks are recovered from the (optionally
debiased) comparisons.  Correlations are estimated from comparison-bit
products: for a pair of variables the concordance statistic is
``mean((2a-1)(2b-1))`` over jointly observed row pairs, which the debiasing
rescales by ``1/((1-2*theta_a)(1-2*theta_b))`` so its expectation equals the
clean Kendall tau.  The sine transform then maps tau estimates to latent
correlations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels

_CHUNK = 1 << 20  # pairs per RR chunk; multiple of 8 keeps bytes aligned
_PAIR_CAP = 2**31


def n_pairs_of(n: int) -> int:
    return n * (n - 1) // 2


def _check_pair_cap(n: int) -> None:
    if n_pairs_of(n) > _PAIR_CAP:
        raise ValueError(
            f"n={n} needs {n_pairs_of(n)} pairwise bits (> 2^31); refusing"
        )


def _rows_from_len(length: int) -> int:
    n = int((1 + np.sqrt(1 + 8 * length)) / 2)
    if n_pairs_of(n) != length:
        raise ValueError(f"length {length} is not n*(n-1)/2 for any n")
    return n


def theta_for_epsilon(eps: float) -> float:
    """Flip probability of the randomized response at privacy budget eps."""
    if eps < 0:
        raise ValueError("eps must be >= 0")
    return float(1.0 / (1.0 + np.exp(eps)))


@dataclass
class PairwiseComparisons:
    """Binary comparison vector: bit (i, i') for i < i' is 1 iff x_i > x_{i'}.

    Ties store 0 (strict comparison); pairs are enumerated lexicographically.
    """

    n: int
    bits: np.ndarray

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=np.uint8)
        if len(self.bits) != n_pairs_of(self.n):
            raise ValueError("bits length != n*(n-1)/2")


@dataclass
class PerturbedRanks:
    """Debiased (real-valued) rank release for one variable.

    `values` aligns with `rows` (ascending row indices of the observed
    subset).  `packed_bits` carries the perturbed comparison bits over row
    pairs, MSB-first; the correlation estimator consumes those directly.
    """

    values: np.ndarray
    theta: float
    debiased: bool = True
    rows: np.ndarray | None = None
    packed_bits: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.rows is None:
            self.rows = np.arange(len(self.values))
        self.rows = np.asarray(self.rows, dtype=np.int64)

    @property
    def n(self) -> int:
        return len(self.values)


def encode_pairwise(x) -> PairwiseComparisons:
    """Encode values into strict pairwise-comparison bits."""
    x = np.asarray(x, dtype=np.float64)
    if not np.isfinite(x).all():
        raise ValueError("non-finite value in comparison input")
    n = len(x)
    _check_pair_cap(n)
    ii, jj = np.triu_indices(n, 1)
    return PairwiseComparisons(n=n, bits=(x[ii] > x[jj]).astype(np.uint8))


def rr_perturb(v: PairwiseComparisons, theta: float, rng: np.random.Generator) -> PairwiseComparisons:
    """Flip every comparison bit independently with probability theta."""
    if not 0.0 <= theta < 0.5:
        raise ValueError("theta must lie in [0, 1/2)")
    if theta == 0.0:
        return PairwiseComparisons(v.n, v.bits.copy())
    flips = rng.random(len(v.bits)) < theta
    return PairwiseComparisons(v.n, v.bits ^ flips)


def debias(v_tilde, theta: float) -> np.ndarray:
    """Unbiasing correction (v - theta) / (1 - 2*theta), elementwise."""
    if theta >= 0.5:
        raise ValueError("theta must be < 1/2 (division by 1 - 2*theta)")
    bits = v_tilde.bits if isinstance(v_tilde, PairwiseComparisons) else np.asarray(v_tilde)
    return (bits.astype(np.float64) - theta) / (1.0 - 2.0 * theta)


def recover_ranks(c) -> np.ndarray:
    """Ranks from a (possibly real-valued) comparison vector.

    R_i = 1 + sum_{i' != i} c_{ii'} with c_{ii'} = v_{ii'} for i < i' and
    1 - v_{i'i} for i > i'.  Exact integer ranks come back when the bits are
    unperturbed.
    """
    if isinstance(c, PairwiseComparisons):
        n, vals = c.n, c.bits.astype(np.float64)
    else:
        vals = np.asarray(c, dtype=np.float64)
        n = _rows_from_len(len(vals))
    ii, jj = np.triu_indices(n, 1)
    ranks = np.ones(n)
    np.add.at(ranks, ii, vals)
    np.add.at(ranks, jj, 1.0 - vals)
    return ranks


def competition_ranks(x) -> np.ndarray:
    """Strict-order ranks 1..n with ties broken by row index."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x), dtype=np.int64)
    ranks[order] = np.arange(1, len(x) + 1)
    return ranks


def jitter_for_ranking(x, rng: np.random.Generator, scale: float = 1e-6) -> np.ndarray:
    """Seeded uniform jitter in (0, scale) so discrete ranks are a.s. unique."""
    x = np.asarray(x, dtype=np.float64)
    return x + rng.random(len(x)) * scale


def perturb_ranks(
    x,
    theta: float,
    rng: np.random.Generator | None = None,
    rows: np.ndarray | None = None,
    debias_output: bool = True,
) -> PerturbedRanks:
    """Full per-variable release: encode, flip, recover, debias.

    Chunked kernel equivalent of
    ``recover_ranks(debias(rr_perturb(encode_pairwise(x), theta)))`` without
    materializing O(n^2) float vectors; the perturbed bits are returned packed
    for the correlation estimator.
    """
    x = np.asarray(x, dtype=np.float64)
    if not np.isfinite(x).all():
        raise ValueError("non-finite value in rank input")
    if not 0.0 <= theta < 0.5:
        raise ValueError("theta must lie in [0, 1/2)")
    n = len(x)
    _check_pair_cap(n)
    ranks = competition_ranks(x)
    npair = n_pairs_of(n)
    row_starts = _row_starts(n)
    delta = np.zeros(n, dtype=np.int64)
    packed = np.zeros((npair + 7) // 8, dtype=np.uint8)
    if theta == 0.0 or n < 2:
        for k0, i_idx, j_idx in _iter_pairs(n):
            bits = ranks[i_idx] > ranks[j_idx]
            pk = np.packbits(bits)
            packed[k0 // 8 : k0 // 8 + len(pk)] = pk
        values = ranks.astype(np.float64)
    else:
        if rng is None:
            raise ValueError("rng required when theta > 0")
        for k0 in range(0, npair, _CHUNK):
            m = min(_CHUNK, npair - k0)
            u = rng.random(m)
            _kernels.rr_chunk(
                ranks, row_starts, k0, u, theta, delta,
                packed[k0 // 8 : (k0 + m + 7) // 8],
            )
        perturbed = ranks + delta
        if debias_output:
            values = 1.0 + (perturbed - 1.0 - (n - 1) * theta) / (1.0 - 2.0 * theta)
        else:
            values = perturbed.astype(np.float64)
    return PerturbedRanks(
        values=values,
        theta=theta,
        debiased=(theta == 0.0) or debias_output,
        rows=rows if rows is not None else np.arange(n),
        packed_bits=packed,
    )


def _row_starts(n: int) -> np.ndarray:
    i = np.arange(n, dtype=np.int64)
    return i * (2 * n - i - 1) // 2


def _iter_pairs(n: int):
    npair = n_pairs_of(n)
    row_starts = _row_starts(n)
    for k0 in range(0, npair, _CHUNK):
        m = min(_CHUNK, npair - k0)
        ks = k0 + np.arange(m, dtype=np.int64)
        i_idx = np.searchsorted(row_starts, ks, side="right") - 1
        j_idx = ks - row_starts[i_idx] + i_idx + 1
        yield k0, i_idx, j_idx


def kendall_tau(r1, r2, rows=None) -> float:
    """Kendall tau over a row subset: (concordant - discordant) / (m(m-1)/2).

    Real-valued ranks compare by <; exact zero differences count as neither
    concordant nor discordant.
    """
    a = np.asarray(r1, dtype=np.float64)
    b = np.asarray(r2, dtype=np.float64)
    if rows is not None:
        rows = np.asarray(rows)
        a, b = a[rows], b[rows]
    m = len(a)
    if m < 2 or len(b) != m:
        raise ValueError("need >= 2 jointly defined rows of equal length")
    lex = np.lexsort((b, a))
    a_s, b_s = a[lex], b[lex]
    n0 = n_pairs_of(m)
    n1 = _tie_pairs(a_s)
    n2 = _tie_pairs(np.sort(b))
    n3 = _joint_tie_pairs(a_s, b_s)
    d = _kernels.count_inversions(np.ascontiguousarray(b_s))
    s = n0 - n1 - n2 + n3 - 2 * int(d)
    return s / n0


def _tie_pairs(sorted_vals) -> int:
    _, counts = np.unique(sorted_vals, return_counts=True)
    return int((counts * (counts - 1) // 2).sum())


def _joint_tie_pairs(a_s, b_s) -> int:
    pairs = np.column_stack([a_s, b_s])
    _, counts = np.unique(pairs, axis=0, return_counts=True)
    return int((counts * (counts - 1) // 2).sum())


def tau_to_corr(tau: float) -> float:
    """Latent Gaussian correlation from Kendall tau: sin(pi*tau/2)."""
    if abs(tau) > 1:
        raise ValueError("|tau| must be <= 1")
    return float(np.clip(np.sin(np.pi * tau / 2.0), -1.0, 1.0))


def spearman_to_corr(rho: float) -> float:
    """Latent Gaussian correlation from Spearman rho: 2*sin(pi*rho/6)."""
    if abs(rho) > 1:
        raise ValueError("|rho| must be <= 1")
    return float(np.clip(2.0 * np.sin(np.pi * rho / 6.0), -1.0, 1.0))


if hasattr(np, "bitwise_count"):

    def _popcount(arr: np.ndarray) -> int:
        return int(np.bitwise_count(arr).sum(dtype=np.int64))

else:  # pragma: no cover - older numpy

    def _popcount(arr: np.ndarray) -> int:
        return int(np.unpackbits(arr).sum(dtype=np.int64))


def tau_from_bits(packed_a: np.ndarray, packed_b: np.ndarray, npairs: int) -> float:
    """Concordance statistic mean((2a-1)(2b-1)) over packed comparison bits."""
    if npairs == 0:
        return 0.0
    x = _popcount(np.bitwise_xor(packed_a, packed_b))
    return (npairs - 2 * x) / npairs


def _extract_indices(rows_var: np.ndarray, joint: np.ndarray) -> np.ndarray | None:
    """Pair-index array mapping joint-row pairs into a variable's bit space.

    Returns None when the joint set is the variable's full observed set
    (identity extraction).
    """
    m = len(rows_var)
    if len(joint) == m:
        return None
    pos = np.searchsorted(rows_var, joint).astype(np.int64)
    mj = len(joint)
    out = np.empty(n_pairs_of(mj), dtype=np.int64)
    at = 0
    for a in range(mj - 1):
        i = pos[a]
        js = pos[a + 1 :]
        out[at : at + mj - 1 - a] = i * (2 * m - i - 1) // 2 + (js - i - 1)
        at += mj - 1 - a
    return out


def _extract_bits(packed: np.ndarray, m: int, ks: np.ndarray | None) -> np.ndarray:
    if ks is None:
        return packed
    unpacked = np.unpackbits(packed, count=n_pairs_of(m))
    return np.packbits(unpacked[ks])


def estimate_omega(
    ranks: list[PerturbedRanks],
    project: bool = True,
    floor: float = 1e-4,
    debias_scale: bool | None = None,
) -> np.ndarray:
    """Copula correlation matrix from perturbed comparison bits.

    Entry (j1, j2) is the sine transform of the pairwise concordance
    statistic over jointly observed rows, rescaled by the debiasing factor
    when the releases are debiased.  The result is eigenvalue-floored into a
    positive definite correlation matrix unless ``project=False``.
    """
    d = len(ranks)
    omega = np.eye(d)
    if d == 1:
        return omega
    for r in ranks:
        if r.packed_bits is None:
            raise ValueError("PerturbedRanks must carry packed comparison bits")

    # group variables sharing the same observed-row set
    groups: dict[bytes, list[int]] = {}
    for j, r in enumerate(ranks):
        groups.setdefault(r.rows.tobytes(), []).append(j)
    rows_of = {key: ranks[vs[0]].rows for key, vs in groups.items()}

    gkeys = list(groups)
    for ga in range(len(gkeys)):
        for gb in range(ga, len(gkeys)):
            ka, kb = gkeys[ga], gkeys[gb]
            rows_a, rows_b = rows_of[ka], rows_of[kb]
            joint = rows_a if ka == kb else np.intersect1d(rows_a, rows_b, assume_unique=True)
            vs_a, vs_b = groups[ka], groups[kb]
            if len(joint) < 2:
                ja = vs_a[0]
                jb = vs_b[0] if ka != kb else vs_b[-1]
                raise ValueError(
                    f"variables ({ja}, {jb}) share {len(joint)} observed rows; "
                    "need at least 2 (missingness too severe)"
                )
            npairs = n_pairs_of(len(joint))
            ks_a = _extract_indices(rows_a, joint)
            ks_b = _extract_indices(rows_b, joint)
            sub_a = {
                v: _extract_bits(ranks[v].packed_bits, len(rows_a), ks_a) for v in vs_a
            }
            sub_b = (
                sub_a
                if ka == kb
                else {v: _extract_bits(ranks[v].packed_bits, len(rows_b), ks_b) for v in vs_b}
            )
            for va in vs_a:
                for vb in vs_b:
                    if vb <= va:
                        continue
                    tau = tau_from_bits(sub_a[va], sub_b[vb], npairs)
                    ra, rb = ranks[va], ranks[vb]
                    scale_a = _debias_factor(ra, debias_scale)
                    scale_b = _debias_factor(rb, debias_scale)
                    tau = tau / (scale_a * scale_b)
                    tau = min(1.0, max(-1.0, tau))
                    r = tau_to_corr(tau)
                    omega[va, vb] = omega[vb, va] = r
    if project:
        omega = psd_project(omega, floor)
    return omega


def _debias_factor(r: PerturbedRanks, override: bool | None) -> float:
    use = r.debiased if override is None else override
    if not use or r.theta == 0.0:
        return 1.0
    return 1.0 - 2.0 * r.theta


def sample_tau_matrix(columns: list[np.ndarray], rows: list[np.ndarray]) -> np.ndarray:
    """Plain sample Kendall-tau sine-transform matrix (no perturbation)."""
    d = len(columns)
    omega = np.eye(d)
    for a in range(d):
        for b in range(a + 1, d):
            joint = np.intersect1d(rows[a], rows[b], assume_unique=True)
            if len(joint) < 2:
                raise ValueError(f"variables ({a}, {b}) share fewer than 2 rows")
            tau = kendall_tau(columns[a][joint], columns[b][joint])
            omega[a, b] = omega[b, a] = tau_to_corr(tau)
    return omega


def psd_project(m: np.ndarray, floor: float = 1e-4) -> np.ndarray:
    """Eigenvalue-floored nearest correlation matrix (clip + rescale).

    Returns the input unchanged when it already meets the floor; otherwise
    clips eigenvalues from below and rescales to unit diagonal, repeating the
    cheap clip step in the rare case rescaling re-violates the floor.
    """
    m = np.asarray(m, dtype=np.float64)
    if np.abs(m - m.T).max(initial=0.0) > 1e-9:
        raise ValueError("matrix not symmetric")
    if np.linalg.eigvalsh(m).min() >= floor * (1.0 - 1e-9):
        return m
    out = m
    for _ in range(100):
        w, v = np.linalg.eigh(out)
        w = np.maximum(w, floor)
        out = (v * w) @ v.T
        d = 1.0 / np.sqrt(np.diag(out))
        out = out * d[:, None] * d[None, :]
        out = (out + out.T) / 2.0
        np.fill_diagonal(out, 1.0)
        if np.linalg.eigvalsh(out).min() >= floor * (1.0 - 1e-9):
            break
    return out
