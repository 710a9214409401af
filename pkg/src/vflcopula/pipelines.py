"""The three privatization pipelines (VCDS, EVCDS, IEVCDS) orchestrated as
federation rounds, plus the privacy accountant.

Common round structure: clients release perturbed ranks of their observed
columns, the server estimates the copula correlation from the perturbed
comparison bits and drives the latent machinery, clients build and privatize
marginal CDFs locally and invert them at the Gaussian scores they receive.
Raw columns never leave a client.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from . import latent as lt
from . import marginals as mg
from . import rankpriv as rp
from .federation import Federation, latent_block, omega_notice, rank_share
from .types import MixedDataset, PrivacyLedger

VCDS = "vcds"
EVCDS = "evcds"
IEVCDS = "ievcds"

PER_VARIABLE = "per_variable"
SPLIT = "split"

# substream purposes
_JITTER, _RR, _MVN, _ADJUST, _IMPUTE, _LAPLACE, _SYNTH_MVN, _SYNTH_ADJUST = range(8)


@dataclass
class PrivatizationConfig:
    method: str
    eps1: np.ndarray
    eps2: np.ndarray
    t_iterations: int = 1
    n_synth: int | None = None
    bernstein_h: int = 2
    bernstein_delta: float = 0.05
    bernstein_degree: int | None = None
    allocation: str = PER_VARIABLE
    total_budget_mode: bool = False
    psd_floor: float = 1e-4
    jitter_scale: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.method not in (VCDS, EVCDS, IEVCDS):
            raise ValueError(f"unknown method {self.method!r}")
        self.eps1 = np.asarray(self.eps1, dtype=np.float64)
        self.eps2 = np.asarray(self.eps2, dtype=np.float64)
        if self.method != IEVCDS and self.t_iterations != 1:
            raise ValueError("t_iterations must be 1 unless method is ievcds")
        if self.t_iterations < 1:
            raise ValueError("t_iterations must be >= 1")
        if self.n_synth is not None and self.n_synth < 1:
            raise ValueError("n_synth must be >= 1")
        if self.allocation not in (PER_VARIABLE, SPLIT):
            raise ValueError(f"unknown allocation {self.allocation!r}")
        if np.any(self.eps1 <= 0) or np.any(self.eps2 <= 0):
            raise ValueError("per-client budgets must be positive")

    def eps1_per_iteration(self) -> np.ndarray:
        if self.method == IEVCDS and self.total_budget_mode:
            return self.eps1 / self.t_iterations
        return self.eps1


@dataclass
class SynthesisReport:
    ledger: PrivacyLedger
    omega_used: np.ndarray
    diagnostics: dict = field(default_factory=dict)


def make_ledger(cfg: PrivatizationConfig) -> PrivacyLedger:
    """Composition accounting on the supplied budgets (addition only)."""
    eps1_iter = cfg.eps1_per_iteration()
    return PrivacyLedger(
        per_client=[(float(e1), float(e2)) for e1, e2 in zip(eps1_iter, cfg.eps2)],
        iterations=cfg.t_iterations,
    )


def _rng(seed: int, *path: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(path)))


class _ClientState:
    """One simulated client: raw block, working pseudo-complete values,
    margins.  Raw values live only here."""

    def __init__(self, k, columns, kinds, obs_rows, eps1_iter, eps2, n_vars_for_split, cfg):
        self.k = k
        self.columns = columns  # dict: global column index -> raw values
        self.kinds = kinds
        self.obs_rows = obs_rows
        self.work = {j: v.copy() for j, v in columns.items()}
        self.cfg = cfg
        if cfg.allocation == SPLIT:
            self.eps1_var = eps1_iter / n_vars_for_split
            self.eps2_var = eps2 / n_vars_for_split
        else:
            self.eps1_var = eps1_iter
            self.eps2_var = eps2
        self.margins: dict[int, mg.MarginalCdf] = {}
        self.priv_margins: dict[int, mg.MarginalCdf] = {}
        self.latents: dict[int, np.ndarray] = {}
        self.ranks: dict[int, rp.PerturbedRanks] = {}
        self.jittered: dict[int, np.ndarray] = {}

    def rank_rows(self, j: int, iteration: int) -> np.ndarray:
        if iteration >= 2 or j == 0:
            return np.arange(len(self.work[j]))
        return self.obs_rows

    def perturb_all(self, iteration: int) -> list:
        """Jitter (discrete kinds), encode, flip, debias for every column."""
        out = []
        for j in sorted(self.columns):
            rows = self.rank_rows(j, iteration)
            vals = self.work[j][rows]
            if self.kinds[j].is_discrete:
                vals = rp.jitter_for_ranking(
                    vals, _rng(self.cfg.seed, _JITTER, self.k, j, iteration),
                    self.cfg.jitter_scale,
                )
            self.jittered[j] = vals
            theta = rp.theta_for_epsilon(self.eps1_var)
            pr = rp.perturb_ranks(
                vals, theta, _rng(self.cfg.seed, _RR, self.k, j, iteration), rows=rows
            )
            self.ranks[j] = pr
            out.append(pr)
        return out

    def build_margins(self, iteration: int, adjusted: bool) -> None:
        """Estimate each column's (unprivatized) marginal CDF."""
        for j in sorted(self.columns):
            rows = self.rank_rows(j, iteration)
            vals = self.jittered[j]
            if adjusted:
                z_obs = self.latents[j][rows]
                self.margins[j] = mg.margin_adjust(z_obs, self.ranks[j], vals, self.kinds[j])
            else:
                self.margins[j] = mg.ecdf_smooth(vals, self.kinds[j])

    def privatize_margins(self) -> None:
        for j, f in sorted(self.margins.items()):
            m = len(self.jittered[j])
            h = self.cfg.bernstein_h
            l = self.cfg.bernstein_degree or mg.bernstein_degree(
                self.eps2_var, m, h, self.cfg.bernstein_delta
            )
            self.priv_margins[j] = mg.bernstein_privatize(
                f, l, h, self.eps2_var, 1.0 / m,
                _rng(self.cfg.seed, _LAPLACE, self.k, j, 0),
            )

    def impute_missing(self, mask_rows: np.ndarray) -> None:
        """Refresh working values at masked rows from the latest margins."""
        if len(mask_rows) == 0:
            return
        for j in sorted(self.columns):
            u = np.clip(ndtr(self.latents[j][mask_rows]), 1e-300, 1.0 - 1e-16)
            self.work[j][mask_rows] = self.margins[j].inverse(u)

    def synthesize(self, z_new: dict[int, np.ndarray]) -> dict[int, np.ndarray]:
        out = {}
        for j in sorted(self.columns):
            u = np.clip(ndtr(z_new[j]), 1e-300, 1.0 - 1e-16)
            out[j] = self.priv_margins[j].inverse(u)
        return out


def _client_columns(ds: MixedDataset, k: int) -> dict[int, np.ndarray]:
    cols = {int(c): ds.columns[c] for c in ds.partition.columns_of(k)}
    if k == ds.partition.response_owner:
        cols[0] = ds.columns[0]
    return cols


class _Pipeline:
    def __init__(self, ds: MixedDataset, cfg: PrivatizationConfig, federation: Federation | None):
        if len(cfg.eps1) != ds.partition.n_clients or len(cfg.eps2) != ds.partition.n_clients:
            raise ValueError("need one (eps1, eps2) pair per client")
        self.ds = ds
        self.cfg = cfg
        self.fed = federation or Federation(ds.partition.n_clients)
        self.n = ds.n_rows
        self.d = ds.p + 1
        eps1_iter = cfg.eps1_per_iteration()
        self.clients = []
        for k in range(ds.partition.n_clients):
            cols = _client_columns(ds, k)
            self.clients.append(
                _ClientState(
                    k,
                    cols,
                    {j: ds.kinds[j] for j in cols},
                    np.flatnonzero(~ds.mask[:, k]),
                    float(eps1_iter[k]),
                    float(cfg.eps2[k]),
                    len(cols),
                    cfg,
                )
            )
        self.owner_of = {0: ds.partition.response_owner}
        for k in range(ds.partition.n_clients):
            for c in ds.partition.columns_of(k):
                self.owner_of[int(c)] = k
        self.diag = {
            "degenerate_draws": 0,
            "psd_projected": False,
            "omega_deltas": [],
            "thetas": {},
        }
        self.omega = None
        self.server_ranks: list[rp.PerturbedRanks | None] = [None] * self.d

    # ------------------------------------------------------------- rounds
    def rank_round(self, iteration: int) -> None:
        """Clients release perturbed ranks; server re-estimates the copula
        correlation matrix."""

        def client_step(k):
            c = self.clients[k]
            prs = c.perturb_all(iteration)
            ids = sorted(c.columns)
            return [
                rank_share(
                    k, ids,
                    [pr.values for pr in prs],
                    [pr.theta for pr in prs],
                    [pr.rows for pr in prs],
                    [pr.packed_bits for pr in prs],
                    [pr.debiased for pr in prs],
                )
            ]

        def server_step(inbox):
            ranks: list[rp.PerturbedRanks | None] = [None] * self.d
            for msgs in inbox.values():
                for m in msgs:
                    p = m.payload
                    for i, j in enumerate(p["variable_ids"]):
                        ranks[j] = rp.PerturbedRanks(
                            values=p["values"][i],
                            theta=p["thetas"][i],
                            debiased=p["debiased"][i],
                            rows=p["rows"][i],
                            packed_bits=p["bits"][i],
                        )
            if any(r is None for r in ranks):
                missing = [j for j, r in enumerate(ranks) if r is None]
                raise ValueError(f"no rank share received for columns {missing}")
            raw = rp.estimate_omega(ranks, project=False)
            floor = self.cfg.psd_floor
            omega = rp.psd_project(raw, floor)
            if omega is not raw:
                self.diag["psd_projected"] = True
            if self.omega is not None:
                self.diag["omega_deltas"].append(float(np.linalg.norm(omega - self.omega)))
            self.omega = omega
            self.server_ranks = ranks
            for j, r in enumerate(ranks):
                self.diag["thetas"][j] = r.theta
            return {k: [omega_notice(self.d)] for k in range(len(self.clients))}

        self.fed.run_round(client_step, server_step)

    def distribute_latents(self, z: np.ndarray, attr: str) -> None:
        """Server partitions a latent matrix and sends each client its block."""

        def client_step(k):
            return []

        def server_step(inbox):
            out = {}
            for k, c in enumerate(self.clients):
                ids = sorted(c.columns)
                out[k] = [latent_block(k, ids, z[:, ids])]
            return out

        delivered = self.fed.run_round(client_step, server_step)
        for k, msgs in delivered.items():
            c = self.clients[k]
            block = msgs[0].payload
            store = getattr(c, attr)
            for i, j in enumerate(block["variable_ids"]):
                store[j] = block["block"][:, i]

    # ------------------------------------------------------------- helpers
    def adjust(self, z: lt.LatentMatrix, rng, resample_unranked=True) -> lt.LatentMatrix:
        adj, deg = lt.rank_adjust(z, self.server_ranks, self.omega, rng,
                                  resample_unranked=resample_unranked)
        self.diag["degenerate_draws"] += deg
        return adj

    def missing_cell_matrix(self) -> np.ndarray:
        miss = np.zeros((self.n, self.d), dtype=bool)
        for j in range(1, self.d):
            k = self.owner_of[j]
            miss[:, j] = self.ds.mask[:, k]
        return miss

    def synth_draw(self, adjust_ranks: bool) -> np.ndarray:
        """Draw the synthesis latents, optionally rank-adjusted blockwise."""
        n_synth = self.cfg.n_synth or self.n
        zm = lt.mvn_sample(self.omega, n_synth, _rng(self.cfg.seed, _SYNTH_MVN, 0))
        if not adjust_ranks:
            return zm.z
        z = zm.z
        out = np.empty_like(z)
        for b, start in enumerate(range(0, n_synth, self.n)):
            stop = min(start + self.n, n_synth)
            block = z[start:stop]
            ranks = self.server_ranks
            if stop - start < self.n:
                ranks = [_restrict_ranks(r, stop - start) for r in ranks]
            adj, deg = lt.rank_adjust(block, ranks, self.omega,
                                      _rng(self.cfg.seed, _SYNTH_ADJUST, b))
            self.diag["degenerate_draws"] += deg
            out[start:stop] = adj.z
        return out

    def collect_synthetic(self, z_new: np.ndarray) -> MixedDataset:
        n_synth = z_new.shape[0]
        cols: list[np.ndarray | None] = [None] * self.d
        for k, c in enumerate(self.clients):
            ids = sorted(c.columns)
            vals = c.synthesize({j: z_new[:, j] for j in ids})
            for j in ids:
                cols[j] = vals[j]
        return MixedDataset(
            columns=cols,
            kinds=list(self.ds.kinds),
            partition=self.ds.partition,
            mask=np.zeros((n_synth, self.ds.partition.n_clients), dtype=bool),
        )

    def report(self) -> SynthesisReport:
        return SynthesisReport(
            ledger=make_ledger(self.cfg),
            omega_used=self.omega,
            diagnostics=dict(self.diag),
        )

    # ------------------------------------------------------------- methods
    def run_vcds(self):
        self.rank_round(iteration=1)
        for c in self.clients:
            c.build_margins(iteration=1, adjusted=False)
            c.privatize_margins()
        z_new = self.synth_draw(adjust_ranks=False)
        self.distribute_latents(z_new, "latents")
        synth = self.collect_synthetic(z_new)
        return synth, self.report()

    def run_evcds(self):
        self.rank_round(iteration=1)
        z = lt.mvn_sample(self.omega, self.n, _rng(self.cfg.seed, _MVN, 1))
        z_adj = self.adjust(z, _rng(self.cfg.seed, _ADJUST, 1))
        self.distribute_latents(z_adj.z, "latents")
        for c in self.clients:
            c.build_margins(iteration=1, adjusted=True)
            c.privatize_margins()
        z_new = self.synth_draw(adjust_ranks=True)
        synth = self.collect_synthetic(z_new)
        return synth, self.report()

    def run_ievcds(self):
        t_total = self.cfg.t_iterations
        miss = self.missing_cell_matrix()
        mask_rows_of = {
            k: np.flatnonzero(self.ds.mask[:, k]) for k in range(len(self.clients))
        }
        for t in range(1, t_total + 1):
            self.rank_round(iteration=t)
            z = lt.mvn_sample(self.omega, self.n, _rng(self.cfg.seed, _MVN, t))
            if t == 1:
                z_adj = self.adjust(z, _rng(self.cfg.seed, _ADJUST, t),
                                    resample_unranked=False)
                z_adj = lt.conditional_impute(
                    z_adj, miss, self.omega, _rng(self.cfg.seed, _IMPUTE, t)
                )
            else:
                z_adj = self.adjust(z, _rng(self.cfg.seed, _ADJUST, t))
            self.distribute_latents(z_adj.z, "latents")
            for k, c in enumerate(self.clients):
                c.build_margins(iteration=t, adjusted=True)
                c.impute_missing(mask_rows_of[k])
        for c in self.clients:
            c.privatize_margins()
        z_new = self.synth_draw(adjust_ranks=True)
        synth = self.collect_synthetic(z_new)
        return synth, self.report()


def _restrict_ranks(r: rp.PerturbedRanks | None, limit: int):
    if r is None:
        return None
    keep = r.rows < limit
    return rp.PerturbedRanks(
        values=r.values[keep], theta=r.theta, debiased=r.debiased,
        rows=r.rows[keep], packed_bits=None,
    )


def run_vcds(ds, cfg: PrivatizationConfig, federation: Federation | None = None):
    """Sanitization for MCAR data: ECDF margins, unadjusted Gaussian scores."""
    if cfg.method != VCDS:
        raise ValueError("config method must be 'vcds'")
    return _Pipeline(ds, cfg, federation).run_vcds()


def run_evcds(ds, cfg: PrivatizationConfig, federation: Federation | None = None):
    """Extended sanitization for MAR data: margin-adjusted CDFs and
    rank-adjusted latents both for estimation and synthesis."""
    if cfg.method != EVCDS:
        raise ValueError("config method must be 'evcds'")
    return _Pipeline(ds, cfg, federation).run_evcds()


def run_ievcds(ds, cfg: PrivatizationConfig, federation: Federation | None = None):
    """Iterated pipeline: pseudo-complete re-ranking and re-estimation for T
    rounds, margins privatized once at the end."""
    if cfg.method != IEVCDS:
        raise ValueError("config method must be 'ievcds'")
    return _Pipeline(ds, cfg, federation).run_ievcds()


def run_pipeline(ds, cfg: PrivatizationConfig, federation: Federation | None = None):
    return {VCDS: run_vcds, EVCDS: run_evcds, IEVCDS: run_ievcds}[cfg.method](ds, cfg, federation)
