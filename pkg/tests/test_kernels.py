"""Backend parity and numerical accuracy of the hot kernels."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from vflcopula import _kernels as K
from vflcopula._kernels import _fallback as F

backends = [F]
if K.BACKEND == "compiled":
    backends.append(K.get_backend("compiled"))


@pytest.mark.parametrize("mod", backends, ids=lambda m: m.BACKEND_NAME)
def test_norm_ppf_accuracy(mod):
    ps = np.concatenate([np.linspace(1e-12, 1 - 1e-12, 101), [1e-300, 1e-30, 0.5]])
    for p in ps:
        got = mod.norm_ppf(float(p))
        want = norm.ppf(p)
        assert abs(got - want) <= 1e-11 * max(1.0, abs(want))
    assert mod.norm_ppf(0.0) == -math.inf
    assert mod.norm_ppf(1.0) == math.inf


@pytest.mark.parametrize("mod", backends, ids=lambda m: m.BACKEND_NAME)
def test_norm_cdf_matches_scipy(mod):
    for x in np.linspace(-9, 9, 101):
        assert abs(mod.norm_cdf(float(x)) - norm.cdf(x)) < 1e-14


@pytest.mark.skipif(K.BACKEND != "compiled", reason="extension not built")
def test_backend_parity_scalar_kernels():
    C = K.get_backend("compiled")
    rng = np.random.default_rng(0)
    for p in rng.random(500):
        assert C.norm_ppf(float(p)) == F.norm_ppf(float(p))
    for _ in range(2000):
        mu, sig = rng.normal(), abs(rng.normal()) + 0.05
        lo, hi = sorted(rng.normal(size=2) * 4)
        for b in [(lo, hi), (-math.inf, hi), (lo, math.inf), (-math.inf, math.inf), (7.5, 8.0)]:
            u = rng.random()
            assert C.truncated_normal_draw(mu, sig, *b, u) == F.truncated_normal_draw(mu, sig, *b, u)


@given(
    mu=st.floats(-5, 5),
    sigma=st.floats(0.01, 4),
    width=st.floats(1e-6, 8),
    center=st.floats(-20, 20),
    u=st.floats(1e-9, 1 - 1e-9),
)
@settings(max_examples=300, deadline=None)
def test_truncated_draw_stays_inside(mu, sigma, width, center, u):
    lo, hi = center - width / 2, center + width / 2
    val, degenerate = K.truncated_normal_draw(mu, sigma, lo, hi, u)
    assert lo < val < hi or (degenerate and lo <= val <= hi)
    assert lo < val < hi  # midpoint rule is also strictly inside for lo < hi


def test_truncated_draw_unbounded_is_plain_normal():
    val, dg = K.truncated_normal_draw(1.5, 2.0, -math.inf, math.inf, 0.5)
    assert not dg and abs(val - 1.5) < 1e-12


@pytest.mark.skipif(K.BACKEND != "compiled", reason="extension not built")
def test_backend_parity_rr_and_cd():
    C = K.get_backend("compiled")
    rng = np.random.default_rng(1)
    n = 150
    ranks = rng.permutation(n).astype(np.int64) + 1
    i = np.arange(n, dtype=np.int64)
    row_starts = i * (2 * n - i - 1) // 2
    npair = n * (n - 1) // 2
    u = rng.random(npair)
    results = []
    for mod in (C, F):
        delta = np.zeros(n, dtype=np.int64)
        bits = np.zeros((npair + 7) // 8, dtype=np.uint8)
        for k0 in range(0, npair, 1 << 10):
            m = min(1 << 10, npair - k0)
            mod.rr_chunk(ranks, row_starts, k0, u[k0 : k0 + m], 0.27, delta, bits[k0 // 8 : (k0 + m + 7) // 8])
        results.append((delta, bits))
    assert np.array_equal(results[0][0], results[1][0])
    assert np.array_equal(results[0][1], results[1][1])

    g = rng.standard_normal((30, 9))
    G = np.ascontiguousarray(g.T @ g / 30)
    q = rng.standard_normal(9)
    w = np.full(9, 0.05)
    b1, b2 = np.zeros(9), np.zeros(9)
    r1 = C.cd_quadratic_l1(G, q, w, 1.0, b1, 1e-10, 500)
    r2 = F.cd_quadratic_l1(G, q, w, 1.0, b2, 1e-10, 500)
    assert np.array_equal(b1, b2) and r1 == r2


@pytest.mark.parametrize("mod", backends, ids=lambda m: m.BACKEND_NAME)
def test_count_inversions_vs_bruteforce(mod):
    rng = np.random.default_rng(2)
    for n in (0, 1, 2, 7, 40, 150):
        a = rng.standard_normal(n)
        a[rng.random(n) < 0.2] = 0.5  # inject ties
        brute = sum(a[i] > a[j] for i in range(n) for j in range(i + 1, n))
        assert mod.count_inversions(np.ascontiguousarray(a)) == brute


@pytest.mark.parametrize("mod", backends, ids=lambda m: m.BACKEND_NAME)
def test_cd_solves_weighted_lasso_kkt(mod):
    rng = np.random.default_rng(3)
    x = rng.standard_normal((60, 12))
    G = np.ascontiguousarray(x.T @ x / 60)
    q = rng.standard_normal(12)
    w = np.abs(rng.standard_normal(12)) * 0.1
    beta = np.zeros(12)
    kkt, sweeps = mod.cd_quadratic_l1(G, q, np.ascontiguousarray(w), 1.3, beta, 1e-10, 2000)
    assert kkt <= 1e-10
    grad = 1.3 * (G @ beta) + q
    for j in range(12):
        if beta[j] != 0:
            assert abs(grad[j] + math.copysign(w[j], beta[j])) < 1e-8
        else:
            assert abs(grad[j]) <= w[j] + 1e-8
