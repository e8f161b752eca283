import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import stats

from oracles import exact_loo_normal, gamma_logpdf_mv
from tvgarch.diagnostics import HIGH_K, compare, gpd_fit, loo, pointwise_loglik, ppd_stats, psis_smooth
from tvgarch.simulation import SimSpec, simulate


def normal_normal_loglik(n=30, draws=4000, sigma=1.0, prior_sd=2.0, seed=0):
    rng = np.random.default_rng(seed)
    y = rng.normal(0.7, sigma, n)
    prec = 1 / prior_sd ** 2 + n / sigma ** 2
    theta = rng.normal((y.sum() / sigma ** 2) / prec, prec ** -0.5, draws)
    ll = stats.norm.logpdf(y[None, :], theta[:, None], sigma)
    return y, ll, sigma, prior_sd


def heavy_log_ratios(rng, s=4000):
    # target N(0, 3^2) sampled through an N(0, 1) proposal
    x = rng.standard_normal(s)
    return stats.norm.logpdf(x, 0, 3) - stats.norm.logpdf(x)


def truth_draws(truth, copies=1):
    return {"mu": np.repeat(truth["mu"][None], copies, 0),
            "sigma2": np.repeat(truth["sigma2"][None], copies, 0)}


def test_loo_matches_exact_conjugate():
    for seed in range(3):
        y, ll, sigma, prior_sd = normal_normal_loglik(seed=seed)
        res = loo(ll)
        exact = exact_loo_normal(y, sigma, prior_sd).sum()
        assert abs(res.elpd_loo - exact) < 0.1
        assert res.n_high_k == 0


def test_looic_identity_and_finite_k():
    _, ll, _, _ = normal_normal_loglik()
    res = loo(ll)
    assert_allclose(res.looic, -2 * res.elpd_loo, rtol=0, atol=1e-10)
    assert np.all(np.isfinite(res.pareto_k))
    assert_allclose(res.pointwise.sum(), res.elpd_loo, rtol=1e-12)


def test_loo_constant_shift_is_additive():
    _, ll, _, _ = normal_normal_loglik()
    a, b = loo(ll), loo(ll + 0.37)
    assert_allclose(b.elpd_loo - a.elpd_loo, 30 * 0.37, atol=1e-8)


def test_loo_invariant_to_draw_permutation():
    _, ll, _, _ = normal_normal_loglik()
    perm = np.random.default_rng(5).permutation(ll.shape[0])
    assert_allclose(loo(ll[perm]).elpd_loo, loo(ll).elpd_loo, rtol=1e-10)


def test_loo_accepts_chain_axis():
    _, ll, _, _ = normal_normal_loglik()
    assert_allclose(loo(ll.reshape(4, 1000, -1)).elpd_loo, loo(ll).elpd_loo, rtol=1e-12)


def test_psis_weights_normalised():
    rng = np.random.default_rng(1)
    for lr in (rng.standard_normal(1000), heavy_log_ratios(rng)):
        w, _ = psis_smooth(lr)
        assert np.all(w >= 0)
        assert_allclose(w.sum(), 1.0, rtol=1e-12)


def test_psis_preserves_rank_order():
    rng = np.random.default_rng(2)
    lr = heavy_log_ratios(rng)
    w, _ = psis_smooth(lr)
    assert np.all(np.diff(w[np.argsort(lr, kind="stable")]) >= -1e-15)


def test_psis_light_tail_k_below_half():
    rng = np.random.default_rng(3)
    ks = np.array([psis_smooth(rng.standard_normal(4000))[1] for _ in range(100)])
    assert np.mean(ks < 0.5) >= 0.9


def test_psis_heavy_tail_k_above_threshold():
    rng = np.random.default_rng(4)
    ks = np.array([psis_smooth(heavy_log_ratios(rng))[1] for _ in range(100)])
    # asymptotic shape is 8/9; finite tails of exp(a x^2) weights read low, so
    # about three in four runs clear the threshold
    assert np.median(ks) > HIGH_K
    assert np.mean(ks > HIGH_K) >= 0.65


def test_psis_k_on_exact_pareto_ratios():
    rng = np.random.default_rng(8)
    ks = [psis_smooth(np.log(stats.genpareto.rvs(0.9, size=4000, random_state=rng)))[1]
          for _ in range(50)]
    assert abs(np.median(ks) - 0.9) < 0.05


def test_heavy_tail_observation_is_flagged():
    rng = np.random.default_rng(6)
    _, ll, _, _ = normal_normal_loglik()
    ll = ll.copy()
    ll[:, 0] = -heavy_log_ratios(rng)
    res = loo(ll)
    assert res.pareto_k[0] > HIGH_K
    assert res.n_high_k >= 1


def test_psis_degenerate_ratios():
    w, k = psis_smooth(np.full(200, 1.5))
    assert k == -np.inf
    assert_allclose(w, 1 / 200)


def test_psis_rejects_short_or_nonfinite():
    with pytest.raises(ValueError):
        psis_smooth(np.zeros(50))
    lr = np.zeros(200)
    lr[3] = np.nan
    with pytest.raises(ValueError):
        psis_smooth(lr)


@pytest.mark.parametrize("shape", [0.2, 0.5, 0.9])
def test_gpd_fit_recovers_shape(shape):
    x = np.sort(stats.genpareto.rvs(shape, scale=2.0, size=5000, random_state=11))
    k, sigma = gpd_fit(x)
    assert abs(k - shape) < 0.07
    assert abs(sigma / 2.0 - 1) < 0.1


def test_pointwise_loglik_matches_generator():
    data, truth = simulate(SimSpec(kind="JOINT", seed=3))
    ll = pointwise_loglik(truth_draws(truth), data)
    assert ll.shape == (1, 1000)
    assert np.all(np.isfinite(ll))
    expected = gamma_logpdf_mv(data.y, truth["mu"], truth["sigma2"]).sum()
    assert_allclose(ll.sum(), expected, rtol=1e-10)


def test_pointwise_loglik_row_sums():
    data, truth = simulate(SimSpec(kind="TVAR1", n=200, seed=1))
    rng = np.random.default_rng(0)
    d = {"mu": truth["mu"] * np.exp(0.05 * rng.standard_normal((5, 200))),
         "sigma2": truth["sigma2"] * np.exp(0.05 * rng.standard_normal((5, 200)))}
    ll = pointwise_loglik(d, data)
    for s in range(5):
        assert_allclose(ll[s].sum(), gamma_logpdf_mv(data.y, d["mu"][s], d["sigma2"][s]).sum(),
                        rtol=1e-10)


def test_pointwise_loglik_skips_missing():
    data, truth = simulate(SimSpec(kind="TVAR1", n=50, seed=1))
    data.y[[10, 20]] = np.nan
    data.missing_mask[[10, 20]] = True
    ll = pointwise_loglik(truth_draws(truth), data)
    assert ll.shape == (1, 48)


def test_pointwise_loglik_requires_derived():
    data, truth = simulate(SimSpec(kind="TVAR1", n=50, seed=1))
    with pytest.raises(ValueError):
        pointwise_loglik({"mu": truth["mu"][None]}, data)


def test_ppd_calibration_under_true_model():
    hits = np.zeros((100, 2), dtype=bool)
    for seed in range(100):
        data, truth = simulate(SimSpec(kind="JOINT", n=300, horizon=1000, seed=seed))
        hits[seed] = ppd_stats(truth_draws(truth, 200), data, seed=seed).inside(0.95)
    rate = hits.mean(axis=0)
    # 95% nominal; binomial SE at 100 reruns is about 0.022
    assert np.all(rate >= 0.88)


def test_ppd_deterministic_and_floored():
    data, truth = simulate(SimSpec(kind="TVAR1", n=100, seed=2))
    d = truth_draws(truth, 20)
    a, b = ppd_stats(d, data, seed=4), ppd_stats(d, data, seed=4)
    assert np.array_equal(a.mean_logscale, b.mean_logscale)
    d["sigma2"][:] = 0.0
    z = ppd_stats(d, data, seed=4)
    assert np.all(np.isfinite(z.mean_logscale)) and np.all(np.isfinite(z.sd_logscale))


def test_compare_self_and_three_way():
    _, ll, _, _ = normal_normal_loglik()
    r = loo(ll)
    out = compare({"a": r, "b": r})
    assert out["differences"][0]["elpd_diff"] == 0.0
    assert out["differences"][0]["se"] == 0.0
    _, ll2, _, _ = normal_normal_loglik(prior_sd=0.5)
    _, ll3, _, _ = normal_normal_loglik(prior_sd=10.0)
    out = compare({"a": r, "b": loo(ll2), "c": loo(ll3)})
    assert len(out["runs"]) == 3 and len(out["differences"]) == 3


def test_compare_rejects_mismatched_runs():
    _, ll, _, _ = normal_normal_loglik()
    with pytest.raises(ValueError):
        compare({"a": loo(ll), "b": loo(ll[:, :20])})
