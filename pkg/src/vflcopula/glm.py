"""Sparse GLM fitting over vertically partitioned data.

ADMM splits the penalized likelihood across clients: each client solves a
weighted-L1 quadratic for its own coefficient block (Jacobi style, against
the other blocks' stale embeddings), the server updates the linearized
response eta and the dual variable, and only embeddings zeta_k = X_k beta_k,
the broadcast state h = sum(zeta) - eta and the dual ever cross the wire.
Folded-concave penalties (SCAD / MCP) enter through local linear
approximation: per-coefficient L1 weights are refreshed from the penalty
derivative between ADMM solves.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from . import _kernels
from .federation import SERVER, Federation, broadcast_state, embedding_share
from .types import ClientPartition, MixedDataset

GAUSSIAN = "gaussian"
LOGISTIC = "logistic"

SCAD = "scad"
MCP = "mcp"
LASSO = "lasso"


@dataclass(frozen=True)
class PenaltySpec:
    family: str
    lam: float
    a: float | None = None

    def __post_init__(self):
        if self.family not in (SCAD, MCP, LASSO):
            raise ValueError(f"unknown penalty family {self.family!r}")
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")
        a = self.a
        if self.family == SCAD:
            a = 3.7 if a is None else a
            if a <= 2:
                raise ValueError("SCAD needs a > 2")
        elif self.family == MCP:
            a = 3.0 if a is None else a
            if a <= 1:
                raise ValueError("MCP needs a > 1")
        object.__setattr__(self, "a", a)

    def with_lambda(self, lam: float) -> "PenaltySpec":
        return PenaltySpec(self.family, lam, self.a)


def penalty_deriv(spec: PenaltySpec, beta_abs) -> np.ndarray:
    """First derivative of the penalty at |beta| (vectorized, >= 0)."""
    b = np.asarray(beta_abs, dtype=np.float64)
    if np.any(b < 0):
        raise ValueError("beta_abs must be non-negative")
    lam, a = spec.lam, spec.a
    if spec.family == LASSO:
        return np.full_like(b, lam)
    if spec.family == SCAD:
        return np.where(b <= lam, lam, np.maximum(a * lam - b, 0.0) / (a - 1.0))
    return np.maximum(a * lam - b, 0.0) / a


@dataclass
class FitResult:
    beta: np.ndarray
    intercept: float
    support: np.ndarray
    primal_trace: list[float]
    dual_trace: list[float]
    iterations: int
    bic: float
    lam: float
    nll: float
    converged: bool

    def to_json(self) -> str:
        return json.dumps(
            {
                "beta": list(map(float, self.beta)),
                "intercept": self.intercept,
                "support": list(map(int, self.support)),
                "primal_trace": list(map(float, self.primal_trace)),
                "dual_trace": list(map(float, self.dual_trace)),
                "iterations": self.iterations,
                "bic": self.bic,
                "lambda": self.lam,
                "nll": self.nll,
                "converged": self.converged,
            }
        )

    @staticmethod
    def from_json(text: str) -> "FitResult":
        d = json.loads(text)
        return FitResult(
            beta=np.asarray(d["beta"]),
            intercept=d["intercept"],
            support=np.asarray(d["support"], dtype=np.int64),
            primal_trace=d["primal_trace"],
            dual_trace=d["dual_trace"],
            iterations=d["iterations"],
            bic=d["bic"],
            lam=d["lambda"],
            nll=d["nll"],
            converged=d["converged"],
        )


class AdmmError(RuntimeError):
    def __init__(self, message, primal_trace=None, dual_trace=None):
        super().__init__(message)
        self.primal_trace = primal_trace or []
        self.dual_trace = dual_trace or []


def beta_update(x_block, h, gamma, alpha, phi, lam, beta0=None, kkt_tol=1e-8, max_sweeps=10_000):
    """Client-side block update: minimize
    lam * ||alpha o b||_1 + <gamma, X b> + (phi/2) ||(h - X b_old) + X b||^2
    by cyclic coordinate descent with soft-thresholding.
    """
    x = np.asarray(x_block, dtype=np.float64)
    beta = np.zeros(x.shape[1]) if beta0 is None else np.asarray(beta0, dtype=np.float64).copy()
    c = h - x @ beta
    g = x.T @ x
    q = x.T @ (gamma + phi * c)
    w = np.ascontiguousarray(lam * np.asarray(alpha, dtype=np.float64))
    kkt, sweeps = _kernels.cd_quadratic_l1(np.ascontiguousarray(g), np.ascontiguousarray(q), w, phi, beta, kkt_tol, max_sweeps)
    if kkt > kkt_tol:
        raise AdmmError(f"coordinate descent stalled: KKT residual {kkt:.3e}")
    return beta


def eta_update(y, a, gamma, phi, link, newton_tol=1e-10):
    """Server-side coordinatewise minimizer of
    -y*eta/N + psi(eta)/N - gamma*eta + (phi/2)(a - eta)^2.
    """
    y = np.asarray(y, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    gamma = np.asarray(gamma, dtype=np.float64)
    n = len(y)
    if link == GAUSSIAN:
        return (y / n + gamma + phi * a) / (1.0 / n + phi)
    if link != LOGISTIC:
        raise ValueError(f"unknown link {link!r}")
    # the stationarity condition -y/N + sigmoid(eta)/N - gamma - phi(a-eta) = 0
    # is strictly increasing in eta and brackets inside sigmoid in (0,1)
    lo = a + (gamma + (y - 1.0) / n) / phi
    hi = a + (gamma + y / n) / phi
    eta = 0.5 * (lo + hi)

    def _done(g):
        if np.abs(g).max(initial=0.0) <= newton_tol:
            return True
        width = np.abs(hi - lo)
        return bool(np.all(width <= 4.0 * np.finfo(float).eps * (1.0 + np.abs(eta))))

    for _ in range(100):
        g = -y / n + expit(eta) / n - gamma - phi * (a - eta)
        if _done(g):
            return eta
        pos = g > 0
        hi = np.where(pos, eta, hi)
        lo = np.where(pos, lo, eta)
        sig = expit(eta)
        step = eta - g / (sig * (1.0 - sig) / n + phi)
        inside = (step > lo) & (step < hi)
        eta = np.where(inside, step, 0.5 * (lo + hi))
    for _ in range(200):
        g = -y / n + expit(eta) / n - gamma - phi * (a - eta)
        if _done(g):
            return eta
        pos = g > 0
        hi = np.where(pos, eta, hi)
        lo = np.where(pos, lo, eta)
        eta = 0.5 * (lo + hi)
    raise AdmmError("eta update failed to converge")


def _extract_xy(ds):
    if isinstance(ds, MixedDataset):
        if ds.mask.any():
            raise ValueError("solver requires a complete (no-missing) dataset")
        return ds.covariate_matrix(), ds.columns[0].copy(), ds.partition
    raise TypeError("expected a MixedDataset; use admm_fit_arrays for raw arrays")


@dataclass
class _Block:
    x: np.ndarray
    g: np.ndarray
    cols: np.ndarray
    penalized: np.ndarray
    beta: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.beta is None:
            self.beta = np.zeros(self.x.shape[1])


class _Solver:
    """Standardized design plus warm-startable ADMM state."""

    def __init__(self, x, y, partition: ClientPartition, link, phi, fit_intercept=True):
        self.link = link
        self.phi = phi
        n, p = x.shape
        self.n, self.p = n, p
        self.means = x.mean(axis=0)
        sds = x.std(axis=0)
        sds[sds < 1e-12] = 1.0
        self.sds = sds
        x_std = (x - self.means) / sds
        self.ybar = float(np.mean(y))
        self.y = y - self.ybar if link == GAUSSIAN else y.astype(np.float64)
        self.fit_intercept = fit_intercept and link == LOGISTIC
        self.blocks: list[_Block] = []
        for k in range(partition.n_clients):
            cov = partition.covariates_of(k)
            xb = x_std[:, cov]
            pen = np.ones(len(cov), dtype=bool)
            if self.fit_intercept and k == partition.response_owner:
                xb = np.column_stack([xb, np.ones(n)])
                pen = np.append(pen, False)
            g = xb.T @ xb
            self.blocks.append(_Block(x=np.ascontiguousarray(xb), g=np.ascontiguousarray(g), cols=cov, penalized=pen))
        self.eta = np.zeros(n)
        self.gamma = np.zeros(n)
        self.zeta = [np.zeros(n) for _ in self.blocks]

    def reset(self):
        for b in self.blocks:
            b.beta[:] = 0.0
        self.eta[:] = 0.0
        self.gamma[:] = 0.0
        self.zeta = [np.zeros(self.n) for _ in self.blocks]

    @property
    def p_total(self) -> int:
        return sum(len(b.beta) for b in self.blocks)

    def beta_std(self) -> np.ndarray:
        """Penalized (covariate) coefficients on the standardized scale."""
        out = np.zeros(self.p)
        for b in self.blocks:
            out[b.cols] = b.beta[b.penalized]
        return out

    def nll(self) -> float:
        """Average negative log-likelihood at the current coefficients."""
        a = sum(b.x @ b.beta for b in self.blocks)
        if self.link == GAUSSIAN:
            return float((-self.y @ a + 0.5 * (a @ a)) / self.n)
        return float((-self.y @ a + np.logaddexp(0.0, a).sum()) / self.n)

    def admm(self, weights, eps_abs, eps_rel, max_iter, kkt_tol, max_sweeps,
             federation: Federation | None = None, dp_sigma: float = 0.0,
             dp_rng: np.random.Generator | None = None):
        """Run ADMM to the stopping rule; returns residual traces."""
        phi, n = self.phi, self.n
        primal_trace, dual_trace = [], []
        sqrt_n = math.sqrt(n)
        sqrt_p = math.sqrt(self.p_total)
        fed = federation or Federation(len(self.blocks))
        h = sum(self.zeta) - self.eta
        state = {"h": h, "gamma": self.gamma.copy()}

        for it in range(max_iter):
            def client_step(k, _state=state):
                b = self.blocks[k]
                c = _state["h"] - self.zeta[k]
                q = b.x.T @ (_state["gamma"] + phi * c)
                kkt, _ = _kernels.cd_quadratic_l1(
                    b.g, np.ascontiguousarray(q), np.ascontiguousarray(weights[k]),
                    phi, b.beta, kkt_tol, max_sweeps,
                )
                if kkt > kkt_tol:
                    raise AdmmError(f"client {k} coordinate descent stalled (KKT {kkt:.3e})")
                zeta = b.x @ b.beta
                if dp_sigma > 0.0:
                    zeta = zeta + dp_rng.normal(0.0, dp_sigma, n)
                self.zeta[k] = zeta
                return [embedding_share(k, zeta)]

            done = {}

            def server_step(inbox):
                a = np.zeros(n)
                for msgs in inbox.values():
                    for m in msgs:
                        a += m.payload["zeta"]
                eta_new = eta_update(self.y, a, self.gamma, phi, self.link)
                r = a - eta_new
                s = phi * (eta_new - self.eta)
                self.gamma += phi * r
                self.eta = eta_new
                r_norm = float(np.linalg.norm(r))
                s_norm = float(np.linalg.norm(s))
                eps_pri = sqrt_n * eps_abs + eps_rel * max(np.linalg.norm(a), np.linalg.norm(eta_new))
                eps_dual = sqrt_p * eps_abs + eps_rel * float(np.linalg.norm(self.gamma))
                done["converged"] = r_norm <= eps_pri and s_norm <= eps_dual
                primal_trace.append(r_norm)
                dual_trace.append(s_norm)
                out = broadcast_state(a - eta_new, self.gamma)
                return {k: [out] for k in range(len(self.blocks))}

            delivered = fed.run_round(client_step, server_step, round_no=it)
            first = delivered[0][0].payload
            state = {"h": first["h"], "gamma": first["gamma"]}
            if done["converged"]:
                return primal_trace, dual_trace, it + 1, True
        if dp_sigma > 0.0:
            # persistent embedding noise keeps residuals above any fixed
            # tolerance; the noisy baseline stops at the iteration budget
            return primal_trace, dual_trace, max_iter, False
        raise AdmmError(
            f"ADMM exceeded {max_iter} iterations", primal_trace, dual_trace
        )


def _lla_weights(solver: _Solver, spec: PenaltySpec, first_round: bool):
    weights = []
    for b in solver.blocks:
        if first_round:
            alpha = np.ones(len(b.beta))
        else:
            alpha = penalty_deriv(spec, np.abs(b.beta)) / spec.lam if spec.lam > 0 else np.zeros(len(b.beta))
        alpha[~b.penalized] = 0.0
        weights.append(spec.lam * alpha)
    return weights


def _finish(solver: _Solver, spec, traces, iters, converged) -> FitResult:
    beta_std = solver.beta_std()
    beta = beta_std / solver.sds
    if solver.link == GAUSSIAN:
        intercept = solver.ybar - float(beta @ solver.means)
    elif solver.fit_intercept:
        owner = [b for b in solver.blocks if not b.penalized.all()]
        b0 = float(owner[0].beta[~owner[0].penalized][0]) if owner else 0.0
        intercept = b0 - float(beta @ solver.means)
    else:
        intercept = 0.0
    support = np.flatnonzero(beta_std != 0.0)
    nll = solver.nll()
    bic = solver.n * nll + len(support) * math.log(solver.n)
    return FitResult(
        beta=beta,
        intercept=intercept,
        support=support,
        primal_trace=traces[0],
        dual_trace=traces[1],
        iterations=iters,
        bic=bic,
        lam=spec.lam,
        nll=nll,
        converged=converged,
    )


def admm_fit(
    ds,
    link: str,
    spec: PenaltySpec,
    phi: float = 1.0,
    federation: Federation | None = None,
    lla_rounds: int = 3,
    dp_noise: float | None = None,
    eps_abs: float = 1e-3,
    eps_rel: float = 1e-3,
    max_iter: int = 5000,
    kkt_tol: float = 1e-8,
    max_sweeps: int = 10_000,
    fit_intercept: bool = True,
    seed: int = 0,
) -> FitResult:
    """Full solve: outer LLA reweighting around inner ADMM."""
    x, y, partition = _extract_xy(ds)
    solver = _Solver(x, y, partition, link, phi, fit_intercept=fit_intercept)
    return _fit_on_solver(
        solver, spec, federation, lla_rounds, dp_noise, eps_abs, eps_rel,
        max_iter, kkt_tol, max_sweeps, seed,
    )


def _fit_on_solver(solver, spec, federation, lla_rounds, dp_noise, eps_abs,
                   eps_rel, max_iter, kkt_tol, max_sweeps, seed) -> FitResult:
    dp_sigma = float(dp_noise or 0.0)
    dp_rng = np.random.default_rng(seed) if dp_sigma > 0 else None
    total_iters = 0
    traces = ([], [])
    converged = False
    prev_support = None
    rounds = 1 if spec.family == LASSO else max(1, lla_rounds)
    for rd in range(rounds):
        weights = _lla_weights(solver, spec, first_round=(rd == 0))
        pt, dt, iters, converged = solver.admm(
            weights, eps_abs, eps_rel, max_iter, kkt_tol, max_sweeps,
            federation=federation, dp_sigma=dp_sigma, dp_rng=dp_rng,
        )
        traces[0].extend(pt)
        traces[1].extend(dt)
        total_iters += iters
        support = tuple(np.flatnonzero(solver.beta_std() != 0.0))
        if prev_support is not None and support == prev_support:
            break
        prev_support = support
    return _finish(solver, spec, traces, total_iters, converged)


def default_lambda_grid(ds, n_values: int = 50, ratio: float = 1e-3) -> np.ndarray:
    """Log-spaced grid from lambda_max = ||X_std' (y - ybar)||_inf / N down."""
    x, y, _ = _extract_xy(ds)
    means = x.mean(axis=0)
    sds = x.std(axis=0)
    sds[sds < 1e-12] = 1.0
    x_std = (x - means) / sds
    r0 = y - y.mean()
    lam_max = float(np.abs(x_std.T @ r0).max() / len(y))
    if lam_max <= 0:
        lam_max = 1.0
    return np.geomspace(lam_max, lam_max * ratio, n_values)


def bic_select(
    ds,
    link: str,
    family: str = SCAD,
    lambda_grid=None,
    federation: Federation | None = None,
    a: float | None = None,
    **fit_kw,
) -> tuple[FitResult, list[tuple[float, float]]]:
    """Warm-started fits along a descending lambda grid; returns the
    BIC-minimizing fit and the (lambda, bic) path."""
    if lambda_grid is None:
        lambda_grid = default_lambda_grid(ds)
    lambda_grid = np.asarray(lambda_grid, dtype=np.float64)
    if lambda_grid.size == 0:
        raise ValueError("empty lambda grid")
    if np.any(np.diff(lambda_grid) > 0):
        raise ValueError("lambda grid must be sorted descending")
    x, y, partition = _extract_xy(ds)
    phi = fit_kw.pop("phi", 1.0)
    fit_intercept = fit_kw.pop("fit_intercept", True)
    solver = _Solver(x, y, partition, link, phi, fit_intercept=fit_intercept)
    kw = dict(lla_rounds=3, dp_noise=None, eps_abs=1e-3, eps_rel=1e-3,
              max_iter=5000, kkt_tol=1e-8, max_sweeps=10_000, seed=0)
    kw.update(fit_kw)
    best = None
    path = []
    last_error = None
    for lam in lambda_grid:
        spec = PenaltySpec(family, float(lam), a)
        try:
            fit = _fit_on_solver(
                solver, spec, federation, kw["lla_rounds"], kw["dp_noise"],
                kw["eps_abs"], kw["eps_rel"], kw["max_iter"], kw["kkt_tol"],
                kw["max_sweeps"], kw["seed"],
            )
        except AdmmError as exc:
            last_error = exc
            solver.reset()
            continue
        path.append((float(lam), fit.bic))
        if best is None or fit.bic < best.bic:
            best = fit
    if best is None:
        raise AdmmError(f"all fits along the grid failed: {last_error}")
    return best, path
