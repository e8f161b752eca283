import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from tvgarch.simulation import (
    SimSpec,
    a_joint,
    b_joint,
    c_joint,
    f_single,
    simulate,
    simulate_joint,
    simulate_single,
    target_function,
)


def test_f_single_closed_form():
    assert f_single(0.0) == 0.0
    assert_allclose(f_single(1000.0), 0.45 * math.sin(12.5) + 0.5, rtol=1e-14)
    t = np.linspace(0, 1000, 2001)
    assert np.all(np.abs(f_single(t)) <= 0.45 + 5e-4 * t + 1e-15)


def test_joint_closed_forms():
    assert_allclose(a_joint(0.0), math.sin(10 / 75) * 0.5, rtol=1e-14)
    assert_allclose(a_joint(0.0), 0.066469, atol=1e-6)
    assert_allclose(c_joint(350.0), 0.0175, rtol=1e-12)
    assert b_joint(0.0) < 1e-300 and b_joint(1000.0) < 1e-300
    assert_allclose(b_joint(500.0), 0.5)


@pytest.mark.parametrize("kind", ["TVAR1", "TVARCH1", "TVGARCH01"])
def test_single_truth_equals_f(kind):
    data, truth = simulate_single(SimSpec(kind=kind, seed=2))
    t = np.arange(1, 1001, dtype=float)
    assert_allclose(truth[target_function(kind)], f_single(t), rtol=0, atol=1e-12)
    assert_allclose(truth["f"], f_single(t), rtol=0, atol=1e-12)
    others = {"a", "b", "c"} - {target_function(kind)}
    for k in others:
        assert np.all(truth[k] == 0)
    assert np.all(data.y > 0)
    assert data.y.size == 1000


def test_joint_truth_trajectories():
    data, truth = simulate_joint(SimSpec(kind="JOINT", seed=1))
    t = np.arange(1, 1001, dtype=float)
    assert_allclose(truth["a"], a_joint(t), atol=1e-12)
    assert_allclose(truth["b"], b_joint(t), atol=1e-12)
    assert_allclose(truth["c"], c_joint(t), atol=1e-12)
    assert_allclose(truth["sigma2"][0], math.exp(2.25), rtol=1e-14)
    assert_allclose(truth["sigma2"][0], 9.4877, atol=1e-4)
    assert_allclose(truth["mu"][0], math.exp(3.0), rtol=1e-14)
    assert np.all(data.y > 0)


@pytest.mark.parametrize("kind", ["TVAR1", "JOINT"])
def test_same_seed_bit_identical(kind):
    a, ta = simulate(SimSpec(kind=kind, seed=7))
    b, tb = simulate(SimSpec(kind=kind, seed=7))
    assert np.array_equal(a.y, b.y)
    assert np.array_equal(ta["sigma2"], tb["sigma2"])
    c, _ = simulate(SimSpec(kind=kind, seed=8))
    assert not np.array_equal(a.y, c.y)


def test_null_mean_has_gamma_mean():
    # a = 0 and the variance constant: y is i.i.d. Gamma with mean e^3
    data, truth = simulate(SimSpec(kind="CUSTOM", n=20000, seed=4))
    se = math.sqrt(math.exp(2.25) / data.y.size)
    assert abs(data.y.mean() - math.exp(3.0)) < 3 * se
    assert np.all(truth["mu"] == math.exp(3.0))


def test_recursion_matches_hand_computation():
    spec = SimSpec(kind="JOINT", n=5, seed=3)
    data, truth = simulate(spec)
    y, lm, ls = data.y, np.log(truth["mu"]), np.log(truth["sigma2"])
    for i in range(1, 5):
        assert_allclose(lm[i], 3.0 + truth["a"][i] * (math.log(y[i - 1]) - 3.0), rtol=1e-13)
        z = (y[i - 1] - truth["mu"][i - 1]) / math.sqrt(truth["sigma2"][i - 1])
        h = 0.5 * ls[i - 1] - lm[i - 1]
        shock = abs(z) - math.sqrt(2 / math.pi)
        assert_allclose(ls[i], 2.25 + truth["b"][i] * shock + truth["c"][i] * h, rtol=1e-13)


def test_uncentred_shock_option():
    spec = SimSpec(kind="TVARCH1", n=5, seed=3, arch="abs")
    data, truth = simulate(spec)
    ls = np.log(truth["sigma2"])
    z = (data.y[0] - truth["mu"][0]) / math.sqrt(truth["sigma2"][0])
    assert_allclose(ls[1], 2.25 + truth["b"][1] * abs(z), rtol=1e-13)


def test_horizon_rescales_time():
    _, truth = simulate(SimSpec(kind="TVAR1", n=400, horizon=1000, seed=0))
    assert_allclose(truth["a"], f_single(np.arange(1, 401) * 2.5), atol=1e-12)


def test_overflow_guard_names_time():
    spec = SimSpec(kind="CUSTOM", n=50, c_fn=lambda t: np.full_like(t, 3.0), var_lag="log", seed=0)
    with pytest.raises(OverflowError, match="t="):
        simulate(spec)


def test_builtin_generators_do_not_overflow():
    for seed in range(5):
        for kind in ("TVAR1", "TVARCH1", "TVGARCH01", "JOINT"):
            data, truth = simulate(SimSpec(kind=kind, seed=seed))
            assert np.all(np.isfinite(truth["sigma2"]))


def test_invalid_specs():
    with pytest.raises(ValueError):
        SimSpec(n=1)
    with pytest.raises(ValueError):
        SimSpec(kind="ARMA")
    with pytest.raises(ValueError):
        SimSpec(arch="cube")
    with pytest.raises(ValueError):
        simulate_single(SimSpec(kind="JOINT"))
    with pytest.raises(ValueError):
        simulate_joint(SimSpec(kind="TVAR1"))
