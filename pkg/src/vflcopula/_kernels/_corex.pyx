# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels; semantics mirror ``_fallback.py`` bit for bit."""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY, copysign, erfc, fabs, log, sqrt

BACKEND_NAME = "compiled"

cdef double _SQRT2 = sqrt(2.0)

cdef double[8] _A = [
    3.3871328727963666080e0, 1.3314166789178437745e2, 1.9715909503065514427e3,
    1.3731693765509461125e4, 4.5921953931549871457e4, 6.7265770927008700853e4,
    3.3430575583588128105e4, 2.5090809287301226727e3]
cdef double[8] _B = [
    1.0, 4.2313330701600911252e1, 6.8718700749205790830e2,
    5.3941960214247511077e3, 2.1213794301586595867e4, 3.9307895800092710610e4,
    2.8729085735721942674e4, 5.2264952788528545610e3]
cdef double[8] _C = [
    1.42343711074968357734e0, 4.63033784615654529590e0, 5.76949722146069140550e0,
    3.64784832476320460504e0, 1.27045825245236838258e0, 2.41780725177450611770e-1,
    2.27238449892691845833e-2, 7.74545014278341407640e-4]
cdef double[8] _D = [
    1.0, 2.05319162663775882187e0, 1.67638483018380384940e0,
    6.89767334985100004550e-1, 1.48103976427480074590e-1, 1.51986665636164571966e-2,
    5.47593808499534494600e-4, 1.05075007164441684324e-9]
cdef double[8] _E = [
    6.65790464350110377720e0, 5.46378491116411436990e0, 1.78482653991729133580e0,
    2.96560571828504891230e-1, 2.65321895265761230930e-2, 1.24266094738807843860e-3,
    2.71155556874348757815e-5, 2.01033439929228813265e-7]
cdef double[8] _F = [
    1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1,
    1.48753612908506148525e-2, 7.86869131145613259100e-4, 1.84631831751005468180e-5,
    1.42151175831644588870e-7, 2.04426310338993978564e-15]


cdef inline double _poly7(double* c, double x) nogil:
    cdef double r = c[7]
    cdef int i
    for i in range(6, -1, -1):
        r = r * x + c[i]
    return r


cdef inline double _norm_cdf(double x) nogil:
    return 0.5 * erfc(-x / _SQRT2)


cdef inline double _norm_sf(double x) nogil:
    return 0.5 * erfc(x / _SQRT2)


cdef double _norm_ppf(double p) nogil:
    cdef double q, r, x
    if p <= 0.0:
        return -INFINITY
    if p >= 1.0:
        return INFINITY
    q = p - 0.5
    if fabs(q) <= 0.425:
        r = 0.180625 - q * q
        return q * _poly7(_A, r) / _poly7(_B, r)
    r = p if q < 0.0 else 1.0 - p
    r = sqrt(-log(r))
    if r <= 5.0:
        r = r - 1.6
        x = _poly7(_C, r) / _poly7(_D, r)
    else:
        r = r - 5.0
        x = _poly7(_E, r) / _poly7(_F, r)
    return -x if q < 0.0 else x


def norm_cdf(double x):
    return _norm_cdf(x)


def norm_sf(double x):
    return _norm_sf(x)


def norm_ppf(double p):
    return _norm_ppf(p)


cdef double _trunc_draw(double mu, double sigma, double lo, double hi,
                        double u, int* degenerate) nogil:
    cdef bint a_inf = lo == -INFINITY
    cdef bint b_inf = hi == INFINITY
    cdef double a, b, qa, qb, pa, pb, up, pp, x, val, lo_f, hi_f
    cdef bint dg = False
    degenerate[0] = 0
    if a_inf and b_inf:
        return mu + sigma * _norm_ppf(u)

    a = 0.0 if a_inf else (lo - mu) / sigma
    b = 0.0 if b_inf else (hi - mu) / sigma

    if (not a_inf) and a >= 0.0:
        qa = _norm_sf(a)
        qb = 0.0 if b_inf else _norm_sf(b)
        if qa == qb:
            dg = True
        else:
            up = qa + (qb - qa) * u
            x = -_norm_ppf(up)
    elif (not b_inf) and b <= 0.0:
        pa = 0.0 if a_inf else _norm_cdf(a)
        pb = _norm_cdf(b)
        if pa == pb:
            dg = True
        else:
            pp = pa + (pb - pa) * u
            x = _norm_ppf(pp)
    else:
        pa = 0.0 if a_inf else _norm_cdf(a)
        pb = 1.0 if b_inf else _norm_cdf(b)
        if pa == pb:
            dg = True
        else:
            pp = pa + (pb - pa) * u
            x = _norm_ppf(pp)

    if not dg:
        val = mu + sigma * x
        if ((not a_inf) and val <= lo) or ((not b_inf) and val >= hi):
            dg = True

    if dg:
        lo_f = lo if not a_inf else hi - sigma
        hi_f = hi if not b_inf else lo + sigma
        val = 0.5 * (lo_f + hi_f)
        degenerate[0] = 1
    return val


def truncated_normal_draw(double mu, double sigma, double lo, double hi, double u):
    cdef int dg = 0
    cdef double val = _trunc_draw(mu, sigma, lo, hi, u, &dg)
    return val, dg != 0


def adjust_column(double[::1] values, double[::1] mu, double sigma,
                  long long[::1] order, long long[::1] pos, double[::1] u):
    cdef Py_ssize_t n = values.shape[0]
    cdef Py_ssize_t m = order.shape[0]
    cdef Py_ssize_t i
    cdef long long k
    cdef double lo, hi, uu, val
    cdef int dg
    cdef long long degenerate = 0
    with nogil:
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
                values[i] = mu[i] + sigma * _norm_ppf(uu)
                continue
            lo = values[order[k - 1]] if k > 0 else -INFINITY
            hi = values[order[k + 1]] if k + 1 < m else INFINITY
            val = _trunc_draw(mu[i], sigma, lo, hi, u[i], &dg)
            if dg:
                degenerate += 1
            values[i] = val
    return degenerate


def rr_chunk(long long[::1] ranks, long long[::1] row_starts, long long k0,
             double[::1] u, double theta, long long[::1] delta,
             unsigned char[::1] bits_out):
    cdef Py_ssize_t nb = u.shape[0]
    cdef Py_ssize_t n = ranks.shape[0]
    cdef Py_ssize_t lo = 0, hi = n, mid
    cdef Py_ssize_t i, j, kk
    cdef bint v, flip, bit
    cdef long long s
    # locate row of pair k0: largest i with row_starts[i] <= k0
    while hi - lo > 1:
        mid = (lo + hi) >> 1
        if row_starts[mid] <= k0:
            lo = mid
        else:
            hi = mid
    i = lo
    j = k0 - row_starts[i] + i + 1
    with nogil:
        for kk in range(nb):
            v = ranks[i] > ranks[j]
            flip = u[kk] < theta
            bit = v ^ flip
            if bit:
                bits_out[kk >> 3] |= <unsigned char> (1 << (7 - (kk & 7)))
            if flip:
                s = 1 - 2 * <long long> v
                delta[i] += s
                delta[j] -= s
            j += 1
            if j == n:
                i += 1
                j = i + 1


def count_inversions(double[::1] a):
    cdef Py_ssize_t n = a.shape[0]
    buf = np.array(a, dtype=np.float64, copy=True)
    tmp = np.empty(n, dtype=np.float64)
    cdef double[::1] bv = buf
    cdef double[::1] tv = tmp
    cdef long long cnt
    with nogil:
        cnt = _merge_count(bv, tv, 0, n)
    return cnt


cdef long long _merge_count(double[::1] a, double[::1] tmp,
                            Py_ssize_t lo, Py_ssize_t hi) nogil:
    cdef Py_ssize_t mid, i, j, k
    cdef long long cnt
    if hi - lo <= 1:
        return 0
    mid = (lo + hi) >> 1
    cnt = _merge_count(a, tmp, lo, mid) + _merge_count(a, tmp, mid, hi)
    i = lo
    j = mid
    k = lo
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
    for i in range(lo, hi):
        a[i] = tmp[i]
    return cnt


def cd_quadratic_l1(double[:, ::1] G, double[::1] q, double[::1] w, double phi,
                    double[::1] beta, double tol, long long max_sweeps):
    cdef Py_ssize_t p = beta.shape[0]
    cdef Py_ssize_t j, l
    grad_arr = np.empty(p, dtype=np.float64)
    cdef double[::1] grad = grad_arr
    cdef double gjj, r, z, az, newb, d, t, v, kkt
    cdef long long sweeps = 0
    with nogil:
        for j in range(p):
            t = 0.0
            for l in range(p):
                t += G[j, l] * beta[l]
            grad[j] = phi * t + q[j]
        kkt = INFINITY
        while sweeps < max_sweeps:
            sweeps += 1
            for j in range(p):
                gjj = G[j, j]
                if phi * gjj <= 1e-300:
                    if beta[j] != 0.0:
                        d = -beta[j]
                        beta[j] = 0.0
                        t = phi * d
                        for l in range(p):
                            grad[l] += t * G[l, j]
                    continue
                r = grad[j] - phi * gjj * beta[j]
                z = -r
                az = fabs(z) - w[j]
                newb = 0.0 if az <= 0.0 else copysign(az, z) / (phi * gjj)
                d = newb - beta[j]
                if d != 0.0:
                    beta[j] = newb
                    t = phi * d
                    for l in range(p):
                        grad[l] += t * G[l, j]
            kkt = 0.0
            for j in range(p):
                if beta[j] != 0.0:
                    v = fabs(grad[j] + copysign(w[j], beta[j]))
                else:
                    v = fabs(grad[j]) - w[j]
                    if v < 0.0:
                        v = 0.0
                if v > kkt:
                    kkt = v
            if kkt <= tol:
                break
    return kkt, sweeps
