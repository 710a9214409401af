"""Estimation, selection and distribution-fidelity metrics."""

from __future__ import annotations

import numpy as np

from .. import marginals as mg
from .. import rankpriv as rp
from ..types import CopulaModel, MixedDataset


def metrics(beta_hat, beta_star) -> dict:
    """RMSE plus support-recovery scores (SEN/SPE/G-Means/FDR)."""
    bh = np.asarray(beta_hat, dtype=np.float64)
    bs = np.asarray(beta_star, dtype=np.float64)
    if bh.shape != bs.shape:
        raise ValueError("coefficient vectors must have equal length")
    p = len(bh)
    sel = bh != 0.0
    true = bs != 0.0
    rmse = float(np.sqrt(((bh - bs) ** 2).sum() / p))
    n_true = int(true.sum())
    n_null = p - n_true
    sen = float((sel & true).sum() / n_true) if n_true else 1.0
    spe = float((~sel & ~true).sum() / n_null) if n_null else 1.0
    fdr = float((sel & ~true).sum() / max(int(sel.sum()), 1))
    return {
        "rmse": rmse,
        "sen": sen,
        "spe": spe,
        "gmeans": float(np.sqrt(sen * spe)),
        "fdr": fdr,
        "n_selected": int(sel.sum()),
    }


def classification_metrics(scores, labels, threshold: float = 0.5) -> dict:
    """Recall at the threshold and the tie-aware AUC (midrank formula, equal
    to exhaustive pair comparison with half-credit on ties)."""
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if not np.isin(np.unique(y), (0.0, 1.0)).all():
        raise ValueError("labels must be binary")
    n_pos = int((y == 1).sum())
    n_neg = int((y == 0).sum())
    pred = s >= threshold
    recall = float((pred & (y == 1)).sum() / n_pos) if n_pos else float("nan")
    if n_pos and n_neg:
        order = np.argsort(s, kind="stable")
        ranks = np.empty(len(s))
        sorted_s = s[order]
        # midranks over tie groups
        i = 0
        while i < len(s):
            j = i
            while j + 1 < len(s) and sorted_s[j + 1] == sorted_s[i]:
                j += 1
            ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
            i = j + 1
        auc = float((ranks[y == 1].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))
    else:
        auc = float("nan")
    return {"recall": recall, "auc": auc, "n_pos": n_pos, "n_neg": n_neg}


def copula_kl(model_a: CopulaModel, model_b: CopulaModel, grid_size: int = 512) -> dict:
    """Gaussian-copula KL on the correlation component,
    0.5 (tr(Ob^-1 Oa) - d + logdet Ob - logdet Oa); the marginal discrepancy
    (mean sup-distance over a grid) is reported separately rather than
    summed, since the corresponding decomposition is only an upper bound.
    """
    oa, ob = model_a.omega, model_b.omega
    d = oa.shape[0]
    if ob.shape != oa.shape:
        raise ValueError("dimension mismatch")
    sign_b, logdet_b = np.linalg.slogdet(ob)
    sign_a, logdet_a = np.linalg.slogdet(oa)
    if sign_b <= 0:
        raise ValueError("second correlation matrix is singular")
    tr = float(np.trace(np.linalg.solve(ob, oa)))
    kl = 0.5 * (tr - d + logdet_b - logdet_a)
    sup = None
    if model_a.marginals and model_b.marginals:
        sups = []
        for fa, fb in zip(model_a.marginals, model_b.marginals):
            lo = min(fa.shift, fb.shift)
            hi = max(fa.shift + fa.scale, fb.shift + fb.scale)
            grid = np.linspace(lo, hi, grid_size)
            sups.append(float(np.abs(fa.evaluate(grid) - fb.evaluate(grid)).max()))
        sup = float(np.mean(sups))
    return {"kl": float(kl), "marginal_sup_mean": sup}


def fit_copula(ds: MixedDataset, floor: float = 1e-4, jitter_seed: int = 0) -> CopulaModel:
    """Non-private copula fit (sample Kendall tau + ECDF margins) used as the
    reference model in utility comparisons."""
    d = ds.p + 1
    full_cols, full_rows, margins = [], [], []
    rng = np.random.default_rng(jitter_seed)
    for j in range(d):
        obs = ds.observed_rows(j)
        v = ds.columns[j].copy()
        if ds.kinds[j].is_discrete:
            v[obs] = rp.jitter_for_ranking(v[obs], rng)
        full_cols.append(v)
        full_rows.append(obs)
        margins.append(mg.ecdf_smooth(v[obs], ds.kinds[j]))
    omega = rp.sample_tau_matrix(full_cols, full_rows)
    omega = rp.psd_project(omega, floor)
    return CopulaModel(omega=omega, marginals=margins)
