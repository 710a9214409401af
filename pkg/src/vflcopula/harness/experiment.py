"""Experiment runner: generate, mask, privatize (or baseline), fit, score.

Each replication derives its own seed sub-streams, so replications can run
in parallel without changing results.  Failures in a single replication are
recorded as error rows and the run continues.
"""

from __future__ import annotations

import csv
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .. import glm
from ..pipelines import PrivatizationConfig, run_pipeline
from ..types import MixedDataset
from . import metrics as mx
from .generate import assemble_dataset, gen_response, generate_mixture, make_beta
from .missing import DEFAULT_MCAR_RATES, Mar, Mcar, inject_missing

METHODS = ("none", "cc", "impute", "vcds", "evcds", "ievcds")
MECHANISMS = ("none", "mcar", "mar_simple", "mar_complex")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    n: int = 1000
    p: int = 100
    k_clients: int = 5
    q: tuple[int, int, int, int] | None = None
    cat_levels: int = 3
    sparsity: float = 0.6
    link: str = "gaussian"
    mechanism: str = "none"
    mcar_rates: tuple[float, ...] | None = None
    method: str = "none"
    eps1: float | list[float] = 0.5
    eps2: float | list[float] = 0.5
    t_iterations: int = 1
    n_synth: int | None = None
    allocation: str = "per_variable"
    penalty: str = "scad"
    lambda_grid_size: int = 50
    lla_rounds: int = 3
    replications: int = 1
    seed: int = 0
    classification_split: float | None = None

    def __post_init__(self):
        if self.q is None:
            base = self.p // 4
            rem = self.p - 3 * base
            self.q = (rem, base, base, base)
        self.q = tuple(int(v) for v in self.q)
        if sum(self.q) != self.p:
            raise ConfigError("type counts q must sum to p")
        if self.link not in ("gaussian", "logistic"):
            raise ConfigError(f"unknown link {self.link!r}")
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}")
        if self.mechanism not in MECHANISMS:
            raise ConfigError(f"unknown mechanism {self.mechanism!r}")
        if self.method == "none" and self.mechanism != "none":
            raise ConfigError("method 'none' requires complete data (mechanism 'none')")
        if self.replications < 1:
            raise ConfigError("replications must be >= 1")
        if self.mcar_rates is not None:
            self.mcar_rates = tuple(float(r) for r in self.mcar_rates)
            if len(self.mcar_rates) != self.k_clients:
                raise ConfigError("need one MCAR rate per client")

    @staticmethod
    def from_json(path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        try:
            return ExperimentConfig(**doc)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(asdict(self), fh, indent=2)
            fh.write("\n")

    def eps_vector(self, which) -> np.ndarray:
        v = self.eps1 if which == 1 else self.eps2
        if np.isscalar(v):
            return np.full(self.k_clients, float(v))
        v = np.asarray(v, dtype=np.float64)
        if len(v) != self.k_clients:
            raise ConfigError("per-client budget length mismatch")
        return v

    def mechanism_obj(self):
        if self.mechanism == "none":
            return None
        if self.mechanism == "mcar":
            rates = self.mcar_rates or DEFAULT_MCAR_RATES[: self.k_clients]
            if len(rates) != self.k_clients:
                raise ConfigError("no default MCAR rates for this client count")
            return Mcar(tuple(rates))
        return Mar(complex_deps=(self.mechanism == "mar_complex"))


RESULT_FIELDS = [
    "replication", "method", "mechanism", "link", "n", "p", "k_clients",
    "rmse", "sen", "spe", "gmeans", "fdr", "n_selected", "bic", "lambda",
    "iterations", "recall", "auc", "kl", "error",
]


def _rng(seed, *path):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=tuple(path)))


def prepare_replication(cfg: ExperimentConfig, rep: int):
    """Generate one replication's dataset and true coefficients."""
    gen_rng = _rng(cfg.seed, 1, rep)
    x, kinds, partition = generate_mixture(
        cfg.n, cfg.p, cfg.k_clients, cfg.q, gen_rng, cat_levels=cfg.cat_levels,
        perm_rng=_rng(cfg.seed, 7, rep),
    )
    beta_star = make_beta(partition, cfg.sparsity)
    y = gen_response(x, beta_star, cfg.link, _rng(cfg.seed, 2, rep))
    ds = assemble_dataset(x, y, kinds, partition, link=cfg.link)
    ds = inject_missing(ds, cfg.mechanism_obj(), _rng(cfg.seed, 3, rep))
    return ds, beta_star


def _complete_case(ds: MixedDataset) -> MixedDataset:
    rows = ds.complete_rows()
    if len(rows) < 2:
        raise ValueError(f"only {len(rows)} complete rows; complete-case fit impossible")
    return MixedDataset(
        columns=[c[rows] for c in ds.columns],
        kinds=list(ds.kinds),
        partition=ds.partition,
        mask=np.zeros((len(rows), ds.partition.n_clients), dtype=bool),
    )


def _mean_impute(ds: MixedDataset) -> MixedDataset:
    cols = [ds.columns[0].copy()]
    for j in range(1, ds.p + 1):
        v = ds.columns[j].copy()
        obs = ds.observed_rows(j)
        if len(obs) == 0:
            raise ValueError(f"column {j} entirely missing; cannot mean-impute")
        mean = float(v[obs].mean())
        missing = np.setdiff1d(np.arange(ds.n_rows), obs, assume_unique=True)
        v[missing] = mean
        cols.append(v)
    return MixedDataset(
        columns=cols,
        kinds=list(ds.kinds),
        partition=ds.partition,
        mask=np.zeros((ds.n_rows, ds.partition.n_clients), dtype=bool),
    )


def fit_dataset_for_method(cfg: ExperimentConfig, ds: MixedDataset, rep: int):
    """Apply the configured treatment; returns (fit-ready dataset, report)."""
    if cfg.method == "none":
        return ds, None
    if cfg.method == "cc":
        return _complete_case(ds), None
    if cfg.method == "impute":
        return _mean_impute(ds), None
    pcfg = PrivatizationConfig(
        method=cfg.method,
        eps1=cfg.eps_vector(1),
        eps2=cfg.eps_vector(2),
        t_iterations=cfg.t_iterations if cfg.method == "ievcds" else 1,
        n_synth=cfg.n_synth,
        allocation=cfg.allocation,
        seed=int(_rng(cfg.seed, 4, rep).integers(0, 2**31 - 1)),
    )
    synth, report = run_pipeline(ds, pcfg)
    return synth, report


def run_replication(cfg: ExperimentConfig, rep: int, compute_kl: bool = False) -> dict:
    row = {
        "replication": rep, "method": cfg.method, "mechanism": cfg.mechanism,
        "link": cfg.link, "n": cfg.n, "p": cfg.p, "k_clients": cfg.k_clients,
        "error": "",
    }
    try:
        ds, beta_star = prepare_replication(cfg, rep)
        fit_ds, _report = fit_dataset_for_method(cfg, ds, rep)
        grid = glm.default_lambda_grid(fit_ds, n_values=cfg.lambda_grid_size)
        best, _path = glm.bic_select(
            fit_ds, cfg.link, cfg.penalty, lambda_grid=grid,
            lla_rounds=cfg.lla_rounds,
        )
        row.update(mx.metrics(best.beta, beta_star))
        row["bic"] = best.bic
        row["lambda"] = best.lam
        row["iterations"] = best.iterations
        if cfg.classification_split and cfg.link == "logistic":
            row.update(_holdout_classification(cfg, rep, best))
        if compute_kl:
            base = mx.fit_copula(_strip_mask(ds))
            synth_model = mx.fit_copula(fit_ds)
            row["kl"] = mx.copula_kl(base, synth_model)["kl"]
    except Exception as exc:  # recorded, run continues
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def _strip_mask(ds: MixedDataset) -> MixedDataset:
    return MixedDataset(
        columns=list(ds.columns), kinds=list(ds.kinds), partition=ds.partition,
        mask=np.zeros_like(ds.mask),
    )


def _holdout_classification(cfg: ExperimentConfig, rep: int, fit) -> dict:
    """Score the fit on a fresh draw from the same population."""
    n_test = max(2, int(round(cfg.classification_split * cfg.n)))
    rng = _rng(cfg.seed, 5, rep)
    x, kinds, partition = generate_mixture(
        n_test, cfg.p, cfg.k_clients, cfg.q, rng, cat_levels=cfg.cat_levels,
        perm_rng=_rng(cfg.seed, 7, rep),
    )
    beta_star = make_beta(partition, cfg.sparsity)
    y = gen_response(x, beta_star, cfg.link, _rng(cfg.seed, 6, rep))
    scores = 1.0 / (1.0 + np.exp(-(fit.intercept + x @ fit.beta)))
    return {k: v for k, v in mx.classification_metrics(scores, y).items() if k in ("recall", "auc")}


def run_experiment(cfg: ExperimentConfig, out_csv=None, jobs: int = 1, compute_kl: bool = False):
    """All replications plus mean/sd aggregate rows; optionally written as CSV."""
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_rep_worker, [(cfg, r, compute_kl) for r in range(cfg.replications)]))
    else:
        rows = [run_replication(cfg, r, compute_kl) for r in range(cfg.replications)]
    rows.extend(aggregate_rows(rows))
    if out_csv is not None:
        write_rows(rows, out_csv)
    return rows


def _rep_worker(args):
    cfg, rep, compute_kl = args
    return run_replication(cfg, rep, compute_kl)


_NUMERIC = ("rmse", "sen", "spe", "gmeans", "fdr", "n_selected", "bic",
            "lambda", "iterations", "recall", "auc", "kl")


def aggregate_rows(rows) -> list[dict]:
    good = [r for r in rows if not r.get("error")]
    out = []
    for stat in ("mean", "sd"):
        agg = {
            "replication": stat, "method": rows[0]["method"] if rows else "",
            "mechanism": rows[0]["mechanism"] if rows else "", "error": "",
        }
        for key in _NUMERIC:
            vals = [r[key] for r in good if key in r and r[key] == r[key]]
            if vals:
                if stat == "mean":
                    agg[key] = float(np.mean(vals))
                else:
                    agg[key] = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
        out.append(agg)
    return out


def write_rows(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=RESULT_FIELDS, extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow(r)


def summarize_directory(paths) -> list[dict]:
    """Mean (sd) summary per result file, shaped like the study tables."""
    out = []
    for path in paths:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        mean = next((r for r in rows if r["replication"] == "mean"), None)
        sd = next((r for r in rows if r["replication"] == "sd"), None)
        if mean is None:
            continue
        entry = {"file": str(path), "method": mean.get("method", ""),
                 "mechanism": mean.get("mechanism", "")}
        for key in ("rmse", "gmeans", "fdr", "recall", "auc"):
            if mean.get(key):
                sd_v = sd.get(key, "") if sd else ""
                entry[key] = f"{float(mean[key]):.4f} ({float(sd_v):.4f})" if sd_v else f"{float(mean[key]):.4f}"
        out.append(entry)
    return out
