"""Pure Python/NumPy implementations of the hot kernels.

Mirrors ``_corex.pyx`` operation for operation.  Both backends must produce
bit-identical output for the same inputs: every floating-point expression here
is written in the same evaluation order as its compiled twin, and the compiled
extension is built with FP contraction disabled.
"""

from __future__ import annotations

import math

import numpy as np

BACKEND_NAME = "fallback"

_SQRT2 = math.sqrt(2.0)

# Wichura's PPND16 rational approximations (double precision inverse normal).
_PPND_A = (
    3.3871328727963666080e0,
    1.3314166789178437745e2,
    1.9715909503065514427e3,
    1.3731693765509461125e4,
    4.5921953931549871457e4,
    6.7265770927008700853e4,
    3.3430575583588128105e4,
    2.5090809287301226727e3,
)
_PPND_B = (
    1.0,
    4.2313330701600911252e1,
    6.8718700749205790830e2,
    5.3941960214247511077e3,
    2.1213794301586595867e4,
    3.9307895800092710610e4,
    2.8729085735721942674e4,
    5.2264952788528545610e3,
)
_PPND_C = (
    1.42343711074968357734e0,
    4.63033784615654529590e0,
    5.76949722146069140550e0,
    3.64784832476320460504e0,
    1.27045825245236838258e0,
    2.41780725177450611770e-1,
    2.27238449892691845833e-2,
    7.74545014278341407640e-4,
)
_PPND_D = (
    1.0,
    2.05319162663775882187e0,
    1.67638483018380384940e0,
    6.89767334985100004550e-1,
    1.48103976427480074590e-1,
    1.51986665636164571966e-2,
    5.47593808499534494600e-4,
    1.05075007164441684324e-9,
)
_PPND_E = (
    6.65790464350110377720e0,
    5.46378491116411436990e0,
    1.78482653991729133580e0,
    2.96560571828504891230e-1,
    2.65321895265761230930e-2,
    1.24266094738807843860e-3,
    2.71155556874348757815e-5,
    2.01033439929228813265e-7,
)
_PPND_F = (
    1.0,
    5.99832206555887937690e-1,
    1.36929880922735805310e-1,
    1.48753612908506148525e-2,
    7.86869131145613259100e-4,
    1.84631831751005468180e-5,
    1.42151175831644588870e-7,
    2.04426310338993978564e-15,
)


def _poly7(c, x):
    # Horner, identical order to the compiled kernel
    r = c[7]
    for i in range(6, -1, -1):
        r = r * x + c[i]
    return r


def norm_cdf(x: float) -> float:
    """Standard normal CDF via erfc (accurate in both tails)."""
    return 0.5 * math.erfc(-x / _SQRT2)


def norm_sf(x: float) -> float:
    """Standard normal upper-tail probability."""
    return 0.5 * math.erfc(x / _SQRT2)


def norm_ppf(p: float) -> float:
    """Inverse standard normal CDF (AS241, ~1e-15 absolute accuracy)."""
    if p <= 0.0:
        return -math.inf
    if p >= 1.0:
        return math.inf
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        return q * _poly7(_PPND_A, r) / _poly7(_PPND_B, r)
    r = p if q < 0.0 else 1.0 - p
    r = math.sqrt(-math.log(r))
    if r <= 5.0:
        r = r - 1.6
        x = _poly7(_PPND_C, r) / _poly7(_PPND_D, r)
    else:
        r = r - 5.0
        x = _poly7(_PPND_E, r) / _poly7(_PPND_F, r)
    return -x if q < 0.0 else x


def truncated_normal_draw(mu: float, sigma: float, lo: float, hi: float, u: float):
    """One inverse-CDF draw from N(mu, sigma^2) restricted to (lo, hi).

    `u` is a uniform(0,1) variate.  Returns ``(value, degenerate)`` where
    `degenerate` flags a numerically empty interval resolved by the midpoint
    rule.  The value is strictly inside (lo, hi) whenever lo < hi.
    """
    a_inf = lo == -math.inf
    b_inf = hi == math.inf
    if a_inf and b_inf:
        return mu + sigma * norm_ppf(u), False

    a = 0.0 if a_inf else (lo - mu) / sigma
    b = 0.0 if b_inf else (hi - mu) / sigma

    degenerate = False
    if not a_inf and a >= 0.0:
        # interval in the right tail: work with upper-tail probabilities
        qa = norm_sf(a)
        qb = 0.0 if b_inf else norm_sf(b)
        if qa == qb:
            degenerate = True
        else:
            up = qa + (qb - qa) * u
            x = -norm_ppf(up)
    elif not b_inf and b <= 0.0:
        # interval in the left tail
        pa = 0.0 if a_inf else norm_cdf(a)
        pb = norm_cdf(b)
        if pa == pb:
            degenerate = True
        else:
            pp = pa + (pb - pa) * u
            x = norm_ppf(pp)
    else:
        pa = 0.0 if a_inf else norm_cdf(a)
        pb = 1.0 if b_inf else norm_cdf(b)
        if pa == pb:
            degenerate = True
        else:
            pp = pa + (pb - pa) * u
            x = norm_ppf(pp)

    if not degenerate:
        val = mu + sigma * x
        if (not a_inf and val <= lo) or (not b_inf and val >= hi):
            degenerate = True

    if degenerate:
        lo_f = lo if not a_inf else hi - sigma
        hi_f = hi if not b_inf else lo + sigma
        val = 0.5 * (lo_f + hi_f)
    return val, degenerate


def adjust_column(values, mu, sigma, order, pos, u):
    """Sequential in-place truncated resampling of one latent column.

    `values` enters sorted so that ranked rows already follow the rank order
    given by `order` (row indices, ascending rank).  Rows are processed in row
    order; ranked rows are redrawn inside the open interval between their
    current rank neighbours, unranked rows get an unconstrained draw.  `pos[i]`
    is the rank position of row i or -1.  Returns the degenerate-draw count.
    """
    n = values.shape[0]
    m = order.shape[0]
    degenerate = 0
    for i in range(n):
        k = pos[i]
        if k <= -2:
            continue
        if k == -1:
            uu = u[i]
            if uu < 1e-300:
                uu = 1e-300
            elif uu > 1.0 - 1e-16:
                uu = 1.0 - 1e-16
            values[i] = mu[i] + sigma * norm_ppf(uu)
            continue
        lo = values[order[k - 1]] if k > 0 else -math.inf
        hi = values[order[k + 1]] if k + 1 < m else math.inf
        val, dg = truncated_normal_draw(mu[i], sigma, lo, hi, u[i])
        if dg:
            degenerate += 1
        values[i] = val
    return degenerate


def rr_chunk(ranks, row_starts, k0, u, theta, delta, bits_out):
    """Randomized-response pass over one chunk of pairwise comparisons.

    Pairs are enumerated in lexicographic order over i < j; `k0` is the global
    index of the first pair in this chunk.  For every pair the perturbed
    comparison bit ``(ranks[i] > ranks[j]) xor (u < theta)`` is packed MSB
    first into `bits_out`, and flipped pairs accumulate +-1 into `delta` so
    callers can recover perturbed ranks without a second pass.
    """
    nb = len(u)
    ks = k0 + np.arange(nb, dtype=np.int64)
    i_idx = np.searchsorted(row_starts, ks, side="right") - 1
    j_idx = ks - row_starts[i_idx] + i_idx + 1
    v = ranks[i_idx] > ranks[j_idx]
    flip = u < theta
    bits = v ^ flip
    packed = np.packbits(bits)
    bits_out[: len(packed)] = packed
    sel = np.flatnonzero(flip)
    if len(sel):
        s = 1 - 2 * v[sel].astype(np.int64)
        np.add.at(delta, i_idx[sel], s)
        np.add.at(delta, j_idx[sel], -s)


def count_inversions(a):
    """Number of strictly decreasing pairs (i<j with a[i] > a[j])."""
    buf = list(a)
    tmp = [0.0] * len(buf)
    return _merge_count(buf, tmp, 0, len(buf))


def _merge_count(a, tmp, lo, hi):
    if hi - lo <= 1:
        return 0
    mid = (lo + hi) // 2
    cnt = _merge_count(a, tmp, lo, mid) + _merge_count(a, tmp, mid, hi)
    i, j, k = lo, mid, lo
    while i < mid and j < hi:
        if a[i] <= a[j]:
            tmp[k] = a[i]
            i += 1
        else:
            tmp[k] = a[j]
            cnt += mid - i
            j += 1
        k += 1
    while i < mid:
        tmp[k] = a[i]
        i += 1
        k += 1
    while j < hi:
        tmp[k] = a[j]
        j += 1
        k += 1
    a[lo:hi] = tmp[lo:hi]
    return cnt


def cd_quadratic_l1(G, q, w, phi, beta, tol, max_sweeps):
    """Cyclic coordinate descent for (phi/2) b'Gb + q'b + sum_j w_j |b_j|.

    Soft-thresholding updates against the Gram matrix; `beta` is modified in
    place.  Returns ``(kkt_residual, sweeps)``.
    """
    p = len(beta)
    # sequential accumulation keeps parity with the compiled kernel
    grad = np.empty(p, dtype=np.float64)
    for j in range(p):
        t = 0.0
        for l in range(p):
            t += G[j, l] * beta[l]
        grad[j] = phi * t + q[j]
    sweeps = 0
    kkt = math.inf
    while sweeps < max_sweeps:
        sweeps += 1
        for j in range(p):
            gjj = G[j, j]
            if phi * gjj <= 1e-300:
                if beta[j] != 0.0:
                    d = -beta[j]
                    beta[j] = 0.0
                    grad += (phi * d) * G[:, j]
                continue
            r = grad[j] - phi * gjj * beta[j]
            z = -r
            az = abs(z) - w[j]
            newb = 0.0 if az <= 0.0 else math.copysign(az, z) / (phi * gjj)
            d = newb - beta[j]
            if d != 0.0:
                beta[j] = newb
                grad += (phi * d) * G[:, j]
        kkt = 0.0
        for j in range(p):
            if beta[j] != 0.0:
                v = abs(grad[j] + math.copysign(w[j], beta[j]))
            else:
                v = abs(grad[j]) - w[j]
                if v < 0.0:
                    v = 0.0
            if v > kkt:
                kkt = v
        if kkt <= tol:
            break
    return kkt, sweeps
