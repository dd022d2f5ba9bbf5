import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import norm

from bayescausal.model import (
    Gaussian2,
    LabeledSample,
    LikelihoodSpec,
    ObservationSet,
    PriorSpec,
    SufficientStats,
    ValidationError,
    log_likelihood,
    sufficient_stats,
    transform_labeled,
    unlabeled_log_likelihood,
)

finite = st.floats(-50, 50, allow_nan=False)
DEFAULT_LIK = LikelihoodSpec(var_x=3.0, var_eta=1.0)


def test_transform_labeled_examples():
    assert transform_labeled([LabeledSample(1.0, -2.0)]) == [(1.0, -3.0)]
    assert transform_labeled([]) == []
    assert transform_labeled([LabeledSample(0.0, 0.0), LabeledSample(2.0, 2.0)]) == [(0.0, 0.0), (2.0, 0.0)]


@given(st.lists(st.tuples(finite, finite), max_size=20))
def test_transform_then_reconstruct_is_identity(raw):
    samples = [LabeledSample(x, y) for x, y in raw]
    pairs = transform_labeled(samples)
    assert len(pairs) == len(samples)
    # y - x is exactly representable back only up to rounding; compare against
    # reconstruction through the same arithmetic
    for s, (x, eta) in zip(samples, pairs):
        assert x == s.x
        assert eta == s.y - s.x
        assert math.isclose(x + eta, s.y, rel_tol=1e-15, abs_tol=1e-13)


def test_sufficient_stats_examples():
    assert sufficient_stats([(1, -3), (3, -1)]) == SufficientStats(2, 2.0, -2.0)
    assert sufficient_stats([]) == SufficientStats(0, 0.0, 0.0)


def test_sufficient_stats_sampling_bound():
    # 3 standard errors per axis; checked as coverage over replicates rather than one draw
    rng = np.random.default_rng(7)
    inside = 0
    reps = 500
    for _ in range(reps):
        pairs = rng.multivariate_normal([1, -3], np.diag([3, 1]), size=1000)
        s = sufficient_stats(pairs)
        assert s.n == 1000
        inside += abs(s.mean_x - 1) < 3 * math.sqrt(3 / 1000) and abs(s.mean_eta + 3) < 3 * math.sqrt(1 / 1000)
    assert inside / reps >= 0.98


def test_combine_stats_matches_pooled():
    a = sufficient_stats([(1.0, 2.0), (3.0, -1.0)])
    b = sufficient_stats([(5.0, 0.5)])
    pooled = sufficient_stats([(1.0, 2.0), (3.0, -1.0), (5.0, 0.5)])
    c = SufficientStats.combine(a, b)
    assert c.n == 3
    assert c.mean_x == pytest.approx(pooled.mean_x, abs=1e-15)
    assert c.mean_eta == pytest.approx(pooled.mean_eta, abs=1e-15)
    assert SufficientStats.combine(SufficientStats(), SufficientStats()) == SufficientStats()


def test_log_likelihood_examples():
    assert log_likelihood([], 0.3, -1.0, DEFAULT_LIK) == 0.0
    expected = -0.5 * math.log(2 * math.pi * 3) - 0.5 * math.log(2 * math.pi)
    assert log_likelihood([(0.0, 0.0)], 0.0, 0.0, DEFAULT_LIK) == pytest.approx(expected, abs=1e-14)
    assert log_likelihood([(1.0, -3.0)], 1.0, -3.0, DEFAULT_LIK) == pytest.approx(expected, abs=1e-14)


@settings(max_examples=50)
@given(st.lists(st.tuples(finite, finite), min_size=1, max_size=30), finite, finite)
def test_log_likelihood_matches_scipy_sum(pairs, theta, psi):
    arr = np.array(pairs)
    oracle = norm.logpdf(arr[:, 0], theta, math.sqrt(3)).sum() + norm.logpdf(arr[:, 1], psi, 1.0).sum()
    assert log_likelihood(pairs, theta, psi, DEFAULT_LIK) == pytest.approx(oracle, rel=1e-10, abs=1e-9)


@settings(max_examples=50)
@given(st.lists(st.tuples(finite, finite), max_size=15), st.lists(st.tuples(finite, finite), max_size=15), finite, finite)
def test_log_likelihood_permutation_and_additivity(a, b, theta, psi):
    whole = log_likelihood(a + b, theta, psi, DEFAULT_LIK)
    parts = log_likelihood(a, theta, psi, DEFAULT_LIK) + log_likelihood(b, theta, psi, DEFAULT_LIK)
    swapped = log_likelihood(b + a, theta, psi, DEFAULT_LIK)
    assert whole == pytest.approx(parts, rel=1e-10, abs=1e-8)
    assert whole == pytest.approx(swapped, rel=1e-12, abs=1e-9)


def test_log_likelihood_broadcasts_over_grids():
    pairs = [(0.5, -1.0), (2.0, 0.3)]
    t = np.linspace(-1, 1, 4)[:, None]
    p = np.linspace(-2, 2, 5)[None, :]
    out = log_likelihood(pairs, t, p, DEFAULT_LIK)
    assert out.shape == (4, 5)
    assert out[2, 3] == pytest.approx(log_likelihood(pairs, float(t[2, 0]), float(p[0, 3]), DEFAULT_LIK), abs=1e-12)


def test_unlabeled_log_likelihood():
    assert unlabeled_log_likelihood([], 0.4, DEFAULT_LIK) == 0.0
    assert unlabeled_log_likelihood([0.0], 0.0, DEFAULT_LIK) == pytest.approx(-0.5 * math.log(2 * math.pi * 3), abs=1e-14)
    import inspect

    assert "psi" not in inspect.signature(unlabeled_log_likelihood).parameters


def test_prior_materialization():
    g = PriorSpec(1.0, -1.0, 2.0, 0.5, 0.6).to_gaussian()
    off = 0.6 * math.sqrt(2.0 * 0.5)
    np.testing.assert_allclose(g.cov, [[2.0, off], [off, 0.5]])
    np.testing.assert_allclose(g.mean, [1.0, -1.0])
    assert g.det == pytest.approx(2.0 * 0.5 * (1 - 0.36))


@given(st.floats(-0.999, 0.999), st.floats(0.01, 10), st.floats(0.01, 10))
def test_prior_det_positive(rho, vt, vp):
    g = PriorSpec(var_theta=vt, var_psi=vp, rho=rho).to_gaussian()
    assert g.det == pytest.approx(vt * vp * (1 - rho**2), rel=1e-9)
    assert g.det > 0


@pytest.mark.parametrize(
    "kw",
    [dict(rho=1.0), dict(rho=-1.5), dict(var_theta=0.0), dict(var_psi=-1.0), dict(mean_theta=math.nan)],
)
def test_prior_rejects_invalid(kw):
    with pytest.raises(ValidationError):
        PriorSpec(**kw)


def test_gaussian2_validation_and_immutability():
    with pytest.raises(ValidationError, match="positive definite"):
        Gaussian2([0, 0], [[1, 2], [2, 1]])
    with pytest.raises(ValidationError, match="symmetric"):
        Gaussian2([0, 0], [[1, 0.1], [0.2, 1]])
    with pytest.raises(ValidationError):
        Gaussian2([0, 0, 0], np.eye(2))
    g = Gaussian2([0, 0], np.eye(2))
    with pytest.raises(ValueError):
        g.mean[0] = 1.0
    with pytest.raises(AttributeError):
        g.mean = np.zeros(2)
    np.testing.assert_array_equal(g.cov, g.cov.T)


def test_gaussian2_logpdf_matches_scipy():
    from scipy.stats import multivariate_normal

    g = PriorSpec(0.5, -0.2, 1.5, 0.7, -0.4).to_gaussian()
    pts = np.array([[0.0, 0.0], [1.0, -2.0], [-3.0, 1.5]])
    assert np.allclose(g.logpdf(pts[:, 0], pts[:, 1]), multivariate_normal(g.mean, g.cov).logpdf(pts), atol=1e-12)


def test_likelihood_spec():
    assert np.array_equal(DEFAULT_LIK.cov, np.diag([3.0, 1.0]))
    assert LikelihoodSpec.from_matrix([[3, 0], [0, 1]]) == DEFAULT_LIK
    with pytest.raises(ValidationError, match="diagonal"):
        LikelihoodSpec.from_matrix([[3, 0.1], [0.1, 1]])
    with pytest.raises(ValidationError):
        LikelihoodSpec(var_x=0.0)


def test_observation_set():
    obs = ObservationSet(labeled=[(1.0, 2.0)], unlabeled_causes=[0.5, 1.5])
    assert obs.n == 1 and obs.m == 2
    assert isinstance(obs.labeled[0], LabeledSample)
    assert ObservationSet().n == 0
    with pytest.raises(ValidationError):
        ObservationSet(unlabeled_causes=[math.inf])
    with pytest.raises(ValidationError):
        LabeledSample(math.nan, 0.0)
