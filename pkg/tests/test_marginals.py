import numpy as np
import pytest
from scipy.special import ndtr

from vflcopula import marginals as mg
from vflcopula import rankpriv as rp
from vflcopula.types import categorical, count

THETA1 = 1.0 / (1.0 + np.e)


def unit_cdf(fvals_on_grid):
    grid = np.linspace(0.0, 1.0, len(fvals_on_grid))
    return mg.MarginalCdf("ecdf_smoothed", grid, np.asarray(fvals_on_grid), 0.0, 1.0)


def test_ecdf_knots_and_midpoint():
    f = mg.ecdf_smooth([1.0, 2.0, 3.0])
    assert f.evaluate(2.0) == pytest.approx(2 / 3, abs=1e-12)
    assert f.evaluate(1.0) == pytest.approx(1 / 3, abs=1e-12)
    assert f.evaluate(3.0) == pytest.approx(1.0, abs=1e-12)


def test_ecdf_reproduces_order_statistics(rng):
    x = rng.normal(size=25)
    f = mg.ecdf_smooth(x)
    xs = np.sort(x)
    for i, xi in enumerate(xs):
        assert f.evaluate(xi) == pytest.approx((i + 1) / 25, abs=1e-12)


def test_ecdf_needs_two_points():
    with pytest.raises(ValueError):
        mg.ecdf_smooth([1.0])


def test_ecdf_constant_data_after_jitter(rng):
    x = rp.jitter_for_ranking(np.zeros(20), rng)
    f = mg.ecdf_smooth(x)
    g = f.evaluate_unit(np.linspace(0, 1, 500))
    assert np.all(np.diff(g) >= 0)


def test_bernstein_reproduces_linear():
    lin = unit_cdf(np.linspace(0, 1, 2))
    out = mg.bernstein_privatize(lin, l=9, h=1, eps2=np.inf, sensitivity=0.1,
                                 rng=np.random.default_rng(0))
    xs = np.linspace(0.01, 0.99, 37)
    assert np.abs(out.evaluate_unit(xs) - xs).max() < 1e-9


def test_bernstein_square_oracle():
    # direct basis-sum oracle: B_2(x^2)(0.5) = 0.375
    sq = unit_cdf(np.linspace(0, 1, 4001) ** 2)
    out = mg.bernstein_privatize(sq, l=2, h=1, eps2=np.inf, sensitivity=0.1,
                                 rng=np.random.default_rng(0))
    assert out.evaluate_unit(0.5) == pytest.approx(0.375, abs=1e-6)


def test_iterated_operator_h1_is_plain():
    # with h=1 the effective coefficients equal the (noised) grid values
    sq = unit_cdf(np.linspace(0, 1, 4001) ** 2)
    l = 6
    out = mg.bernstein_privatize(sq, l=l, h=1, eps2=np.inf, sensitivity=0.1,
                                 rng=np.random.default_rng(0))
    grid = np.arange(l + 1) / l
    direct = mg._binom_pmf_matrix(np.linspace(0.05, 0.95, 11), l) @ (grid**2)
    assert np.abs(out.evaluate_unit(np.linspace(0.05, 0.95, 11)) - direct).max() < 1e-9


def test_iterated_operator_improves_smooth_fit():
    sq = unit_cdf(np.linspace(0, 1, 4001) ** 2)
    xs = np.linspace(0.05, 0.95, 101)
    e1 = np.abs(
        mg.bernstein_privatize(sq, 8, 1, np.inf, 0.1, np.random.default_rng(0)).evaluate_unit(xs) - xs**2
    ).max()
    e2 = np.abs(
        mg.bernstein_privatize(sq, 8, 2, np.inf, 0.1, np.random.default_rng(0)).evaluate_unit(xs) - xs**2
    ).max()
    assert e2 < e1


def test_bernstein_rejects_bad_budget():
    lin = unit_cdf(np.linspace(0, 1, 2))
    with pytest.raises(ValueError):
        mg.bernstein_privatize(lin, 3, 1, 0.0, 0.1, np.random.default_rng(0))
    with pytest.raises(ValueError):
        mg.bernstein_privatize(lin, 0, 1, 1.0, 0.1, np.random.default_rng(0))


def test_bernstein_noised_monotone_everywhere():
    base = mg.ecdf_smooth(np.random.default_rng(1).normal(size=200))
    for seed in range(5):
        out = mg.bernstein_privatize(base, l=12, h=2, eps2=0.5, sensitivity=1 / 200,
                                     rng=np.random.default_rng(seed))
        g = out.evaluate_unit(np.linspace(0, 1, 10_000))
        assert np.all(np.diff(g) >= 0)
        assert g[0] >= 0 and g[-1] <= 1


def test_degree_rule():
    # l = max(1, (eps2*m/log(1/delta))^(1/(h+1)))
    assert mg.bernstein_degree(0.5, 3000, h=2, delta=0.05) == int((0.5 * 3000 / np.log(20)) ** (1 / 3))
    assert mg.bernstein_degree(1e-9, 100, h=2) == 1
    assert mg.bernstein_degree(np.inf, 100, h=2) == 128


def test_perturbed_reorder_examples(rng):
    x = rng.normal(size=30)
    pr0 = rp.perturb_ranks(x, 0.0)
    assert np.array_equal(mg.perturbed_reorder(x, pr0), x)
    # reversed ranks reverse the ordering; the value multiset is preserved
    rev = rp.PerturbedRanks(values=-pr0.values, theta=0.0)
    out = mg.perturbed_reorder(x, rev)
    assert np.array_equal(np.sort(out), np.sort(x))
    assert np.array_equal(out, np.sort(x)[::-1][np.argsort(np.argsort(x, kind="stable"))])
    x3 = np.array([10.0, 20.0, 30.0])
    r3 = rp.PerturbedRanks(values=np.array([3.0, 2.0, 1.0]), theta=0.0)
    assert np.array_equal(mg.perturbed_reorder(x3, r3), [30.0, 20.0, 10.0])
    with pytest.raises(ValueError):
        mg.perturbed_reorder(x3, pr0)


def test_margin_adjust_theta0_matches_phi(rng):
    x = rng.normal(size=300)
    pr = rp.perturb_ranks(x, 0.0)
    f = mg.margin_adjust(x, pr, x)
    xs = np.sort(x)
    # F(x_(k)) = Phi(z_(k)) exactly at the knots when z = x and theta = 0
    assert np.abs(f.evaluate(xs) - ndtr(xs)).max() < 1e-9


def test_margin_adjust_single_point():
    pr = rp.perturb_ranks(np.array([0.7]), 0.0)
    f = mg.margin_adjust(np.array([0.7]), pr, np.array([0.7]))
    assert f.evaluate(0.7) == pytest.approx(ndtr(0.7), abs=1e-9)
    with pytest.raises(ValueError):
        mg.margin_adjust(np.array([]), rp.PerturbedRanks(values=np.array([]), theta=0.0), np.array([]))


def test_margin_adjust_glivenko_cantelli(rng):
    # standard normal data, z = x, theta = 0, N = 4000: sup error <= 0.05
    x = rng.normal(size=4000)
    pr = rp.perturb_ranks(x, 0.0)
    f = mg.margin_adjust(x, pr, x)
    grid = np.linspace(-3.5, 3.5, 1000)
    assert np.abs(f.evaluate(grid) - ndtr(grid)).max() <= 0.05


def test_margin_adjust_monotone_for_every_seed():
    x = np.random.default_rng(0).normal(size=500)
    for seed in range(8):
        pr = rp.perturb_ranks(x, THETA1, np.random.default_rng(seed))
        f = mg.margin_adjust(x, pr, x)
        knot_vals = f.evaluate_unit(f.knots_x)
        assert np.all(np.diff(knot_vals) >= 0)
        g = f.evaluate_unit(np.linspace(0, 1, 10_000))
        assert np.all(np.diff(g) >= 0)


def test_margin_adjust_rate_decreases():
    # sup error shrinks ~ 1/sqrt(N) at fixed eps
    errs = {}
    for n in (500, 2000):
        vals = []
        for seed in range(6):
            g = np.random.default_rng(seed)
            x = g.normal(size=n)
            pr = rp.perturb_ranks(x, THETA1, np.random.default_rng(100 + seed))
            f = mg.margin_adjust(x, pr, x)
            grid = np.linspace(-3, 3, 400)
            vals.append(np.abs(f.evaluate(grid) - ndtr(grid)).max())
        errs[n] = np.mean(vals)
    assert errs[2000] < errs[500]
    assert errs[2000] / errs[500] < 0.5 * 1.6  # ~ sqrt(1/4) with slack


def test_inverse_identity_and_round_trip(rng):
    lin = unit_cdf(np.linspace(0, 1, 2))
    assert mg.inverse_cdf(lin, 0.3) == pytest.approx(0.3, abs=1e-9)
    f = mg.ecdf_smooth(rng.normal(size=100))
    u = np.linspace(0.05, 0.95, 19)
    q = f.inverse(u)
    assert np.abs(f.evaluate(q) - u).max() < 1e-6
    with pytest.raises(ValueError):
        mg.inverse_cdf(f, 0.0)
    with pytest.raises(ValueError):
        mg.inverse_cdf(f, 1.0)


def test_inverse_rounds_discrete_kinds(rng):
    x = rp.jitter_for_ranking(rng.integers(0, 3, 200).astype(float), rng)
    f = mg.ecdf_smooth(x, value_kind=categorical(3))
    vals = f.inverse(np.linspace(0.01, 0.99, 50))
    assert set(np.unique(vals)) <= {0.0, 1.0, 2.0}
    xc = rp.jitter_for_ranking(rng.poisson(3, 200).astype(float), rng)
    fc = mg.ecdf_smooth(xc, value_kind=count())
    vc = fc.inverse(np.linspace(0.01, 0.99, 50))
    assert np.all(vc >= 0) and np.all(vc == np.rint(vc))


def test_privatized_sampling_ks(rng):
    # inverse-sampling a privatized uniform CDF stays close to uniform
    data = rng.random(2000)
    f = mg.ecdf_smooth(data)
    priv = mg.bernstein_privatize(f, l=mg.bernstein_degree(5.0, 2000, 2), h=2,
                                  eps2=5.0, sensitivity=1 / 2000,
                                  rng=np.random.default_rng(0))
    u = rng.random(10_000) * 0.998 + 0.001
    draws = priv.inverse(u)
    grid = np.linspace(0.02, 0.98, 200)
    emp = np.searchsorted(np.sort(draws), grid) / len(draws)
    assert np.abs(emp - grid).max() <= 0.08


def test_ecdf_sensitivity_convention():
    # the configured L1 sensitivity for an m-point ECDF is 1/m
    m = 250
    f = mg.ecdf_smooth(np.random.default_rng(0).normal(size=m))
    out = mg.bernstein_privatize(f, l=5, h=1, eps2=1.0, sensitivity=1.0 / m,
                                 rng=np.random.default_rng(1))
    assert out.degree == 5 and out.order == 1
    assert len(out.coefficients) == 6
