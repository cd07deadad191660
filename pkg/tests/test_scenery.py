import math

import numpy as np
import pytest

from rwrslab.scenery import (CENTERED_WEIBULL, SYMMETRIC_WEIBULL, SceneryDist,
                             inverse_tail, log_tail_prob, moments, sample,
                             sample_tail, tail_prob)


def test_tail_prob_symmetric_exact_values():
    d = SceneryDist(SYMMETRIC_WEIBULL, 0.5, 1.0)
    assert tail_prob(d, 0.0) == 0.5
    assert tail_prob(d, 4.0) == pytest.approx(0.5 * math.exp(-2.0), rel=1e-15)
    d1 = SceneryDist(SYMMETRIC_WEIBULL, 1.0, 1.0)
    assert tail_prob(d1, 1.0) == pytest.approx(0.5 * math.exp(-1.0), rel=1e-15)


def test_tail_prob_is_monotone_and_limits():
    d = SceneryDist(SYMMETRIC_WEIBULL, 0.5, 2.0)
    ts = np.linspace(-50, 50, 401)
    vals = tail_prob(d, ts)
    assert (np.diff(vals) <= 0).all()
    assert tail_prob(d, 1e9) < 1e-300 or tail_prob(d, 1e9) >= 0
    assert tail_prob(d, -1e9) == pytest.approx(1.0)
    dc = SceneryDist(CENTERED_WEIBULL, 0.7, 1.3)
    vals = tail_prob(dc, ts)
    assert (np.diff(vals) <= 0).all()
    # below the support edge the tail saturates at 1
    assert tail_prob(dc, -dc.shift - 1.0) == 1.0


def test_moments_exact():
    assert moments(SceneryDist(SYMMETRIC_WEIBULL, 0.5, 1.0)) == (0.0, 24.0)
    assert moments(SceneryDist(SYMMETRIC_WEIBULL, 1.0, 1.0)) == (0.0, 2.0)
    mean, var = moments(SceneryDist(CENTERED_WEIBULL, 1.0, 1.0))
    assert mean == 0.0 and var == pytest.approx(1.0, rel=1e-14)


def test_log_tail_matches_tail_and_survives_underflow():
    d = SceneryDist(SYMMETRIC_WEIBULL, 0.5, 1.0)
    for t in (-3.0, -0.1, 0.0, 0.5, 7.0, 300.0):
        assert log_tail_prob(d, t) == pytest.approx(math.log(tail_prob(d, t)),
                                                    rel=1e-12)
    # far past double underflow the log form keeps going
    assert log_tail_prob(d, 1e10) == pytest.approx(math.log(0.5) - 1e5)


def test_log_tail_asymptote():
    # |log P(Y>t) / (-c t^q) - 1| = log(2)/t^q for the symmetric family
    d = SceneryDist(SYMMETRIC_WEIBULL, 1.0, 1.0)
    for t, tol in ((1e2, 1e-2), (1e4, 1e-4), (1e6, 1e-6)):
        ratio = log_tail_prob(d, t) / (-d.c * t ** d.q)
        assert abs(ratio - 1.0) < tol
    # slower but still monotone decay at q = 0.5
    d5 = SceneryDist(SYMMETRIC_WEIBULL, 0.5, 1.0)
    devs = [abs(log_tail_prob(d5, t) / (-d5.c * t ** 0.5) - 1.0)
            for t in (1e2, 1e4, 1e6)]
    assert devs[0] > devs[1] > devs[2]
    assert devs[0] == pytest.approx(math.log(2.0) / 10.0, rel=1e-10)


def test_inverse_tail_roundtrip_and_positive_branch():
    d = SceneryDist(SYMMETRIC_WEIBULL, 0.5, 2.0)
    for t in (-5.0, -0.3, 0.0, 0.1, 9.0):
        assert inverse_tail(d, tail_prob(d, t)) == pytest.approx(t, abs=1e-10)
    # sign forced positive: a uniform u maps to b * (-log u)^(1/q)
    for u in (0.9, 0.5, 0.02):
        assert inverse_tail(d, u / 2.0) == pytest.approx(
            d.b * (-math.log(u)) ** (1.0 / d.q), rel=1e-12)
    with pytest.raises(ValueError):
        inverse_tail(d, 0.0)


def test_sampler_moments_and_exceedance():
    d = SceneryDist(SYMMETRIC_WEIBULL, 0.5, 1.0)
    rng = np.random.default_rng(1234)
    x = sample(d, rng, 10 ** 6)
    assert abs(x.mean()) < 3.0 * math.sqrt(24.0 / len(x))
    p4 = tail_prob(d, 4.0)
    se = math.sqrt(p4 * (1 - p4) / len(x))
    assert abs((x > 4.0).mean() - p4) < 4.0 * se
    # exceedance matches the exact tail at several thresholds
    for t in (-2.0, 0.0, 1.0, 9.0):
        p = tail_prob(d, t)
        se = math.sqrt(p * (1 - p) / len(x))
        assert abs((x > t).mean() - p) < 4.0 * se


def test_sampler_centered_family():
    d = SceneryDist(CENTERED_WEIBULL, 0.5, 1.0)
    rng = np.random.default_rng(77)
    x = sample(d, rng, 10 ** 6)
    assert abs(x.mean()) < 3.0 * math.sqrt(d.sigma2 / len(x))
    assert x.min() > -d.shift


def test_sample_tail_support_and_law():
    d1 = SceneryDist(SYMMETRIC_WEIBULL, 1.0, 1.0)
    rng = np.random.default_rng(5)
    # at u=0 the symmetric q=1 overshoot is Exp(1)
    x = sample_tail(d1, 0.0, rng, 10 ** 6)
    assert x.min() > 0.0
    assert abs(x.mean() - 1.0) < 0.01
    d = SceneryDist(SYMMETRIC_WEIBULL, 0.5, 1.0)
    x = sample_tail(d, 4.0, rng, 10 ** 5)
    assert x.min() > 4.0
    p = tail_prob(d, 9.0) / tail_prob(d, 4.0)  # = e^-1
    assert p == pytest.approx(math.exp(-1.0), rel=1e-12)
    se = math.sqrt(p * (1 - p) / len(x))
    assert abs((x > 9.0).mean() - p) < 4.0 * se


def test_sample_tail_reweighting_identity():
    # the importance weight is the constant tail_prob(u): reweighting the
    # conditional draws reproduces the tail with zero variance
    d = SceneryDist(SYMMETRIC_WEIBULL, 0.5, 1.0)
    rng = np.random.default_rng(6)
    u = 25.0
    w = tail_prob(d, u)
    draws = sample_tail(d, u, rng, 1000)
    assert (draws > u).all()
    assert np.mean(w * np.ones_like(draws)) == pytest.approx(w, rel=1e-15)


def test_sample_tail_rejects_underflowed_level():
    d = SceneryDist(SYMMETRIC_WEIBULL, 0.5, 1.0)
    with pytest.raises(ValueError, match="log space"):
        sample_tail(d, 1e12, np.random.default_rng(0), 10)


def test_validation():
    with pytest.raises(ValueError):
        SceneryDist("Gaussian", 0.5, 1.0)
    with pytest.raises(ValueError):
        SceneryDist(SYMMETRIC_WEIBULL, 0.0, 1.0)
    with pytest.raises(ValueError):
        SceneryDist(SYMMETRIC_WEIBULL, 1.5, 1.0)
    with pytest.raises(ValueError):
        SceneryDist(SYMMETRIC_WEIBULL, 0.5, -1.0)


def test_tail_coefficient_monotone():
    # t -> c t^(q-1) strictly decreasing on t > 0 (constant coefficient)
    d = SceneryDist(SYMMETRIC_WEIBULL, 0.5, 2.0)
    ts = np.linspace(0.1, 50, 200)
    vals = d.c * ts ** (d.q - 1.0)
    assert (np.diff(vals) < 0).all()
