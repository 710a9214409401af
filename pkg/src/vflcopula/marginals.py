"""Marginal CDF estimation and privatization.

Three estimator families share one representation: a monotone cubic
interpolant through knots on a rescaled [0, 1] domain, pinned to F(0)=0 and
F(1)=1 so the inverse is defined on all of (0, 1).

* ``ecdf_smooth``: empirical CDF knots (x_(i), i/m) with monotone smoothing.
* ``margin_adjust``: nonparametric estimate F(x) = Phi(Zmax(x)) built from
  latent Gaussians and perturbed ranks; evaluated at the perturbed-reordered
  sample so the knot map is non-decreasing by construction.
* ``bernstein_privatize``: iterated Bernstein operator with Laplace-noised
  coefficients, followed by monotone repair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.special import gammaln, ndtr

from .rankpriv import PerturbedRanks
from .types import VariableKind

ECDF_SMOOTHED = "ecdf_smoothed"
MARGIN_ADJUSTED = "margin_adjusted"
BERNSTEIN_PRIVATIZED = "bernstein_privatized"


@dataclass
class MarginalCdf:
    """Monotone CDF on an affinely rescaled domain.

    ``shift``/``scale`` map raw values x to t = (x - shift)/scale in [0, 1];
    knots live on the t-scale and always include (0, 0) and (1, 1).
    """

    kind: str
    knots_x: np.ndarray
    knots_f: np.ndarray
    shift: float
    scale: float
    value_kind: VariableKind | None = None
    degree: int | None = None
    order: int | None = None
    coefficients: np.ndarray | None = None
    _interp: PchipInterpolator | None = field(default=None, repr=False, compare=False)

    def _interpolator(self) -> PchipInterpolator:
        if self._interp is None:
            self._interp = PchipInterpolator(self.knots_x, self.knots_f, extrapolate=False)
        return self._interp

    def to_unit(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.shift) / self.scale

    def from_unit(self, t) -> np.ndarray:
        return self.shift + self.scale * np.asarray(t, dtype=np.float64)

    def evaluate_unit(self, t) -> np.ndarray:
        t = np.clip(np.asarray(t, dtype=np.float64), 0.0, 1.0)
        return np.clip(self._interpolator()(t), 0.0, 1.0)

    def evaluate(self, x) -> np.ndarray:
        """F(x) for raw-domain x (clamped to the rescaled support)."""
        return self.evaluate_unit(self.to_unit(x))

    def inverse(self, u) -> np.ndarray:
        return inverse_cdf(self, u)


def _affine_from_values(values: np.ndarray) -> tuple[float, float]:
    lo, hi = float(np.min(values)), float(np.max(values))
    span = hi - lo
    if span <= 0.0:
        span = 1.0
    pad = 0.01 * span
    return lo - pad, span + 2.0 * pad


def _build_cdf(kind, x_raw, f_vals, value_kind=None, shift=None, scale=None, **extra):
    """Assemble a MarginalCdf from raw-domain knot positions."""
    x_raw = np.asarray(x_raw, dtype=np.float64)
    f_vals = np.asarray(f_vals, dtype=np.float64)
    if shift is None:
        shift, scale = _affine_from_values(x_raw)
    t = (x_raw - shift) / scale
    # collapse duplicate positions, keeping the largest CDF value
    keep = np.flatnonzero(np.diff(t, append=np.inf) > 0.0)
    t, f_vals = t[keep], f_vals[keep]
    f_vals = np.maximum.accumulate(np.clip(f_vals, 0.0, 1.0))
    t = np.concatenate([[0.0], t, [1.0]])
    f_vals = np.concatenate([[0.0], f_vals, [1.0]])
    keep = np.flatnonzero(np.diff(t, append=np.inf) > 0.0)
    t, f_vals = t[keep], f_vals[keep]
    return MarginalCdf(
        kind=kind,
        knots_x=t,
        knots_f=f_vals,
        shift=shift,
        scale=scale,
        value_kind=value_kind,
        **extra,
    )


def ecdf_smooth(x_obs, value_kind: VariableKind | None = None) -> MarginalCdf:
    """Monotone-interpolated empirical CDF on the observed values."""
    x = np.asarray(x_obs, dtype=np.float64)
    m = len(x)
    if m < 2:
        raise ValueError("need at least 2 observed values")
    xs = np.sort(x)
    f = np.arange(1, m + 1) / m
    return _build_cdf(ECDF_SMOOTHED, xs, f, value_kind=value_kind)


def perturbed_reorder(x, r_tilde: PerturbedRanks) -> np.ndarray:
    """Reorder the sorted sample by the perturbed-rank ordering (Eq.-style
    perturbed sequence): row with the k-th smallest perturbed rank receives
    the k-th order statistic.  The value multiset is preserved exactly.
    """
    x = np.asarray(x, dtype=np.float64)
    if len(x) != r_tilde.n:
        raise ValueError("length mismatch between values and ranks")
    out = np.empty_like(x)
    out[np.argsort(r_tilde.values, kind="stable")] = np.sort(x)
    return out


def adjusted_cdf_values(z_obs, rank_obs: PerturbedRanks, query_ranks=None) -> np.ndarray:
    """F(x) = Phi(Zmax(x)) where Zmax(x) is the largest latent among rows with
    perturbed rank <= the query rank (the minimal-rank latent is always
    included).  Queries default to the sample's own ranks.
    """
    z = np.asarray(z_obs, dtype=np.float64)
    rv = rank_obs.values
    if len(z) != len(rv):
        raise ValueError("latents and ranks must align")
    if len(z) == 0:
        raise ValueError("empty observed set")
    order = np.argsort(rv, kind="stable")
    rv_sorted = rv[order]
    runmax = np.maximum.accumulate(z[order])
    # rows tied at the same rank share the tie group's maximum
    grp_last = np.flatnonzero(np.diff(rv_sorted, append=np.inf) > 0.0)
    runmax = runmax[np.repeat(grp_last, np.diff(np.concatenate([[-1], grp_last])))]
    if query_ranks is None:
        zq = np.empty_like(runmax)
        zq[order] = runmax
    else:
        idx = np.searchsorted(rv_sorted, np.asarray(query_ranks, dtype=np.float64), side="right") - 1
        zq = runmax[np.maximum(idx, 0)]
    return ndtr(zq)


def margin_adjust(
    z_obs,
    rank_obs: PerturbedRanks,
    x_obs,
    value_kind: VariableKind | None = None,
) -> MarginalCdf:
    """Margin-adjusted CDF: knots pair the perturbed-reordered sample with
    Phi of the running latent maximum in rank order, then get monotone
    smoothing.  Non-decreasing by construction for every seed.
    """
    z = np.asarray(z_obs, dtype=np.float64)
    x = np.asarray(x_obs, dtype=np.float64)
    if not (len(z) == rank_obs.n == len(x)):
        raise ValueError("latents, ranks and values must align")
    if len(z) == 0:
        raise ValueError("empty observed set")
    f_on_sample = adjusted_cdf_values(z, rank_obs)
    order = np.argsort(rank_obs.values, kind="stable")
    knot_x = np.sort(x)
    knot_f = f_on_sample[order]
    return _build_cdf(MARGIN_ADJUSTED, knot_x, knot_f, value_kind=value_kind)


def _isotonic(y: np.ndarray) -> np.ndarray:
    """Pool-adjacent-violators projection onto non-decreasing sequences."""
    vals = []
    counts = []
    for v in y:
        vals.append(float(v))
        counts.append(1)
        while len(vals) > 1 and vals[-2] > vals[-1]:
            c2, v2 = counts.pop(), vals.pop()
            c1, v1 = counts.pop(), vals.pop()
            counts.append(c1 + c2)
            vals.append((c1 * v1 + c2 * v2) / (c1 + c2))
    return np.repeat(vals, counts)


def bernstein_degree(eps2: float, m: int, h: int, delta: float = 0.05, cap: int = 128) -> int:
    """Default degree rule l = max(1, (eps2*m / log(1/delta))^(1/(h+1)))."""
    if not math.isfinite(eps2):
        return cap
    val = (eps2 * m / math.log(1.0 / delta)) ** (1.0 / (h + 1))
    return int(min(cap, max(1, math.floor(val))))


def _binom_pmf_matrix(xs: np.ndarray, l: int) -> np.ndarray:
    """Rows: evaluation points; columns: Bernstein basis b_{v,l}(x)."""
    v = np.arange(l + 1)
    logc = gammaln(l + 1) - gammaln(v + 1) - gammaln(l - v + 1)
    x = np.clip(xs[:, None], 1e-300, 1.0 - 1e-16)
    with np.errstate(divide="ignore"):
        logp = logc + v * np.log(x) + (l - v) * np.log1p(-x)
    out = np.exp(logp)
    # exact endpoints
    out[xs <= 0.0] = 0.0
    out[xs <= 0.0, 0] = 1.0
    out[xs >= 1.0] = 0.0
    out[xs >= 1.0, l] = 1.0
    return out


_EVAL_GRID = 1025


def bernstein_privatize(
    f: MarginalCdf,
    l: int,
    h: int,
    eps2: float,
    sensitivity: float,
    rng: np.random.Generator,
) -> MarginalCdf:
    """Iterated-Bernstein approximation of `f` with Laplace-noised
    coefficients at scale sensitivity*(l+1)/eps2, then monotone repair
    (isotonic coefficient path; running-max on the evaluated curve; endpoint
    pinning).
    """
    if l < 1 or h < 1:
        raise ValueError("degree and order must be >= 1")
    if not eps2 > 0.0:
        raise ValueError("eps2 must be positive")
    grid = np.arange(l + 1) / l
    g = f.evaluate_unit(grid)
    scale = 0.0 if math.isinf(eps2) else sensitivity * (l + 1) / eps2
    g = g + rng.laplace(0.0, scale, l + 1) if scale > 0.0 else g + np.zeros(l + 1)
    g = np.clip(_isotonic(g), 0.0, 1.0)

    # effective coefficients of the iterated operator:
    # d = sum_{i=1..h} C(h,i) (-1)^(i-1) A^(i-1) g,  A[w,v] = b_{v,l}(w/l)
    a_mat = _binom_pmf_matrix(grid, l)
    acc = g.copy()
    d = math.comb(h, 1) * acc
    for i in range(2, h + 1):
        acc = a_mat @ acc
        d = d + math.comb(h, i) * ((-1) ** (i - 1)) * acc

    xs = np.linspace(0.0, 1.0, _EVAL_GRID)
    curve = _binom_pmf_matrix(xs, l) @ d
    curve = np.maximum.accumulate(np.clip(curve, 0.0, 1.0))
    curve[0], curve[-1] = 0.0, 1.0
    out = MarginalCdf(
        kind=BERNSTEIN_PRIVATIZED,
        knots_x=xs,
        knots_f=curve,
        shift=f.shift,
        scale=f.scale,
        value_kind=f.value_kind,
        degree=l,
        order=h,
        coefficients=g,
    )
    return out


def inverse_cdf(f: MarginalCdf, u) -> np.ndarray:
    """Quantiles by bisection on the monotone evaluated CDF.

    Discrete value kinds are rounded to the nearest valid level.
    """
    u = np.asarray(u, dtype=np.float64)
    scalar = u.ndim == 0
    u = np.atleast_1d(u)
    if np.any(u <= 0.0) or np.any(u >= 1.0):
        raise ValueError("u must lie strictly inside (0, 1)")
    lo = np.zeros_like(u)
    hi = np.ones_like(u)
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        below = f.evaluate_unit(mid) < u
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    t = 0.5 * (lo + hi)
    x = f.from_unit(t)
    kind = f.value_kind
    if kind is not None and kind.is_discrete:
        x = np.rint(x)
        if kind.tag == "cat":
            x = np.clip(x, 0, kind.levels - 1)
        elif kind.tag == "bin":
            x = np.clip(x, 0, 1)
        else:
            x = np.maximum(x, 0)
    return x[0] if scalar else x
