import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special

from dcpf import edm
from dcpf.edm import ElementDistribution, Family


def brute_weights(y, lam, elem, eta_max):
    eta = np.arange(eta_max + 1)
    logw = edm.conditional_logpdf(np.full(eta.size, y), eta, elem) + special.xlogy(eta, lam) - special.gammaln(eta + 1)
    return np.exp(logw - special.logsumexp(logw))


# ---------------------------------------------------------------------------
# element distributions


def test_family_parse_aliases():
    assert Family.parse("PO") is Family.POISSON
    assert Family.parse("gamma") is Family.GAMMA
    assert Family.parse(Family.GAUSSIAN) is Family.GAUSSIAN
    with pytest.raises(ValueError):
        Family.parse("binomial")


def test_domain_checks():
    with pytest.raises(edm.DomainError):
        ElementDistribution("ga", 0.5, 1.0)
    with pytest.raises(ValueError):
        ElementDistribution("po", 0.0, -1.0)
    with pytest.raises(ValueError):
        ElementDistribution("ztp", 0.0, 1.5)


def test_log_partition_examples():
    assert edm.log_partition(ElementDistribution("n", 0.0, 1.0)) == 0.0
    assert edm.log_partition(ElementDistribution("po", 0.0, 1.0)) == 1.0
    assert math.isclose(edm.log_partition(ElementDistribution("ga", -2.0, 1.0)), -math.log(2.0))
    lam = math.exp(0.3)
    assert math.isclose(edm.log_partition(ElementDistribution("ztp", 0.3, 1.0)), math.log(math.exp(lam) - 1))


@pytest.mark.parametrize("family,theta", [("po", 0.4), ("ga", -1.3), ("n", 0.7), ("ztp", -0.2)])
def test_dlog_partition_matches_finite_difference(family, theta):
    h = 1e-6
    f = lambda th: edm.log_partition(ElementDistribution(family, th, 1.0))  # noqa: E731
    numeric = (f(theta + h) - f(theta - h)) / (2 * h)
    assert math.isclose(edm.dlog_partition(ElementDistribution(family, theta, 1.0)), numeric, rel_tol=1e-7)


@pytest.mark.parametrize("family,theta,kappa", [("po", 0.3, 1.7), ("ztp", 0.5, 2.0), ("ga", -1.2, 0.7), ("n", -0.4, 1.3)])
def test_element_density_normalises(family, theta, kappa):
    elem = ElementDistribution(family, theta, kappa)
    if elem.family.discrete:
        ys = np.arange(0, 200, dtype=float)
        total = np.exp(edm.conditional_logpdf(ys, 1, elem)).sum()
    else:
        lower = 0.0 if family == "ga" else -np.inf
        total = integrate.quad(lambda y: math.exp(edm.conditional_logpdf(y, 1, elem)), lower, np.inf)[0]
    assert abs(total - 1.0) < 1e-8


def test_base_measure_examples():
    # zero-truncated Poisson with eta = 1 is the plain ztp pmf
    elem = ElementDistribution("ztp", 0.2, 1.0)
    lam = math.exp(0.2)
    for y in range(1, 8):
        ztp = lam**y / math.factorial(y) / (math.exp(lam) - 1)
        assert math.isclose(math.exp(edm.conditional_logpdf(y, 1, elem)), ztp, rel_tol=1e-12)
    # gamma with eta kappa = 1 is the exponential
    elem = ElementDistribution("ga", -2.5, 0.5)
    for y in (0.1, 1.0, 3.0):
        assert math.isclose(math.exp(edm.conditional_logpdf(y, 2, elem)), 2.5 * math.exp(-2.5 * y), rel_tol=1e-12)


def test_base_measure_support_errors():
    with pytest.raises(edm.SupportError):
        edm.log_base_measure("ga", -1.0, 2.0)
    with pytest.raises(edm.SupportError):
        edm.log_base_measure("ztp", 2, 3)
    with pytest.raises(edm.SupportError):
        edm.log_base_measure("po", 1.5, 1.0)
    assert math.isclose(edm.log_base_measure("n", 1.0, 2.0), -0.25 - 0.5 * math.log(4 * math.pi))


def test_convolution_additivity_discrete():
    for family, kappa in (("po", 1.3), ("ztp", 2.0)):
        elem = ElementDistribution(family, 0.1, kappa)
        ys = np.arange(0, 60)
        p1 = np.exp(edm.conditional_logpdf(ys.astype(float), 1, elem))
        p2 = np.exp(edm.conditional_logpdf(ys.astype(float), 2, elem))
        p3 = np.exp(edm.conditional_logpdf(ys.astype(float), 3, elem))
        conv = np.convolve(p1, p2)[: ys.size]
        assert np.allclose(conv[:30], p3[:30], rtol=1e-10, atol=1e-300)


# ---------------------------------------------------------------------------
# Stirling numbers


def test_stirling_examples():
    assert edm.stirling2(0, 0) == 1
    assert edm.stirling2(5, 0) == 0
    assert edm.stirling2(3, 2) == 3
    assert edm.stirling2(2, 3) == 0
    assert all(edm.stirling2(n, 1) == 1 for n in range(1, 30))
    assert all(edm.stirling2(n, n) == 1 for n in range(0, 30))
    assert edm.stirling2(10, 4) == 34105
    assert edm.log_stirling2(2, 3) == -np.inf


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 60), st.integers(1, 60))
def test_stirling_recurrence_log_space(n, k):
    k = min(k, n)
    lhs = edm.log_stirling2(n, k)
    rhs = np.logaddexp(math.log(k) + edm.log_stirling2(n - 1, k), edm.log_stirling2(n - 1, k - 1))
    if np.isneginf(lhs):
        assert np.isneginf(rhs)
    else:
        assert abs(lhs - rhs) <= 1e-10 * abs(lhs) + 1e-12


def test_stirling_log_matches_exact():
    for n, k in ((60, 7), (45, 20), (30, 29)):
        assert math.isclose(edm.log_stirling2(n, k), math.log(edm.stirling2(n, k)), rel_tol=1e-12)


# ---------------------------------------------------------------------------
# eta posterior


def test_posterior_trivial_cases():
    post = edm.posterior_eta(0, 3.0, ElementDistribution("ztp", 0.0, 1.0))
    assert post.zero_prob == 1.0 and post.mean == 0.0
    post = edm.posterior_eta(0, 0.0, ElementDistribution("po", 0.0, 1.0))
    assert post.zero_prob == 1.0
    with pytest.raises(edm.InconsistentObservationError):
        edm.posterior_eta(2.0, 0.0, ElementDistribution("ga", -1.0, 1.0))


def test_posterior_matches_high_truncation_example():
    elem = ElementDistribution("ga", -1.0, 0.8)
    post = edm.posterior_eta(5.0, 1.3, elem)
    brute = brute_weights(5.0, 1.3, elem, 500)
    w = post.weights
    big = brute[: w.size] > 1e-200
    assert np.all(np.abs(w[big] - brute[: w.size][big]) <= 1e-8 * brute[: w.size][big])
    assert brute[w.size:].sum() < 1e-12


def test_posterior_truncation_warning():
    elem = ElementDistribution("po", 0.0, 1.0)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        edm.posterior_eta(5000, 5000.0, elem, eta_max=50, cap=64)
    assert any(issubclass(w.category, edm.TruncationWarning) for w in caught)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.05, 25.0), st.floats(0.01, 20.0), st.sampled_from(["po", "ga", "n", "ztp"]))
def test_posterior_normalised_and_batch_consistent(y, lam, family):
    theta = {"po": 0.2, "ga": -0.8, "n": 0.3, "ztp": 0.1}[family]
    if family in ("po", "ztp"):
        y = float(max(1, round(y)))
    elem = ElementDistribution(family, theta, 1.0)
    post = edm.posterior_eta(y, lam, elem)
    assert abs(post.weights.sum() - 1.0) < 1e-9
    batch = edm.eta_posterior_batch(np.array([y]), np.array([lam]), elem)
    assert math.isclose(batch.mean[0], post.mean, rel_tol=1e-12, abs_tol=1e-14)


def test_gaussian_zero_response_posterior():
    elem = ElementDistribution("n", 0.5, 1.0)
    post = edm.posterior_eta(0.0, 2.0, elem)
    assert 0 < post.zero_prob < 1
    brute = brute_weights(0.0, 2.0, elem, 400)
    assert abs(post.mean - brute @ np.arange(brute.size)) < 1e-10


# ---------------------------------------------------------------------------
# marginal quantities


def test_zero_probability_identities():
    for family, theta in (("ga", -1.0), ("ztp", 0.3)):
        elem = ElementDistribution(family, theta, 1.0)
        assert edm.log_prob_zero(1.7, elem) == -1.7
        assert math.isclose(edm.prob_nonzero(elem, math.log(2.0)), 0.5)
    elem = ElementDistribution("po", 0.0, 1.0)
    assert edm.prob_nonzero(elem, 0.0) == 0.0
    assert edm.prob_nonzero(ElementDistribution("n", 0.0, 1.0), 2.0) == 1.0


def test_compound_logpdf_against_direct_sum():
    elem = ElementDistribution("po", -0.3, 1.4)
    for y in (0.0, 1.0, 4.0):
        logp, trunc = edm.compound_logpdf(np.array([y]), 2.3, elem)
        eta = np.arange(400)
        direct = special.logsumexp(edm.conditional_logpdf(np.full(eta.size, y), eta, elem)
                                   + special.xlogy(eta, 2.3) - 2.3 - special.gammaln(eta + 1))
        assert abs(logp[0] - direct) < 1e-10 and not trunc[0]


def test_response_mean_examples():
    assert edm.response_mean(ElementDistribution("n", 2.0, 1.0), 3.0) == 6.0
    assert edm.response_mean(ElementDistribution("ga", -1.0, 1.0), 0.0) == 0.0


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 10.0), st.floats(0.0, 10.0), st.sampled_from(["po", "ga", "ztp"]))
def test_monotone_in_rate(a, b, family):
    elem = ElementDistribution(family, -0.5, 1.0)
    lo, hi = sorted((a, b))
    if hi - lo < 1e-6:
        return
    assert edm.prob_nonzero(elem, hi) > edm.prob_nonzero(elem, lo)
    assert edm.response_mean(elem, hi) > edm.response_mean(elem, lo)


@pytest.mark.parametrize("family,theta,kappa", [("po", 0.0, 1.0), ("ga", -1.5, 0.7), ("n", 0.8, 1.2), ("ztp", 0.4, 2.0)])
def test_sampling_moments(family, theta, kappa):
    rng = np.random.default_rng(7)
    elem = ElementDistribution(family, theta, kappa)
    lam = 1.3
    draws = edm.sample_compound(lam, elem, rng, size=400_000)
    se = draws.std() / math.sqrt(draws.size)
    assert abs(draws.mean() - edm.response_mean(elem, lam)) < 3.5 * se
    if family != "n":
        p = edm.prob_nonzero(elem, lam)
        assert abs(np.mean(draws != 0) - p) < 3.5 * math.sqrt(p * (1 - p) / draws.size)


def test_sampling_zero_rate_and_ztp_support():
    rng = np.random.default_rng(1)
    elem = ElementDistribution("ztp", 0.0, 2.0)
    assert np.all(edm.sample_compound(0.0, elem, rng, size=100) == 0)
    eta = rng.poisson(2.0, 5000)
    y = edm.sample_given_eta(eta, elem, rng)
    assert np.all(y >= 2 * eta) and np.all(y[eta == 0] == 0)


# ---------------------------------------------------------------------------
# maximum likelihood initialisation


def test_mle_gamma_recovers_truth():
    rng = np.random.default_rng(3)
    theta, kappa = edm.mle_init(rng.gamma(2.0, 1.0, 100_000), "ga")
    assert abs(theta + 1.0) < 0.05 and abs(kappa - 2.0) < 0.1


def test_mle_degenerate_gaussian_warns():
    with pytest.warns(RuntimeWarning):
        theta, kappa = edm.mle_init([2.0, 2.0, 2.0, 2.0], "n")
    assert kappa == 1.0 and math.isfinite(theta)


def test_mle_errors():
    with pytest.raises(ValueError):
        edm.mle_init([], "ga")
    with pytest.raises(ValueError):
        edm.mle_init([0.0, 1.0], "ga")


@pytest.mark.parametrize("family", ["po", "ga", "n", "ztp"])
def test_mle_beats_grid(family):
    rng = np.random.default_rng(11)
    sample = {
        "po": rng.poisson(3.0, 500) + 1,
        "ga": rng.gamma(1.5, 2.0, 500),
        "n": rng.normal(1.0, 2.0, 500),
        "ztp": edm.sample_element(ElementDistribution("ztp", 0.5, 1.0), 500, rng),
    }[family].astype(float)
    theta, kappa = edm.mle_init(sample, family)

    def loglik(th, ka):
        try:
            return float(np.sum(edm.conditional_logpdf(sample, 1, ElementDistribution(family, th, ka))))
        except ValueError:
            return -np.inf

    best = loglik(theta, kappa)
    assert math.isfinite(best)
    kappas = [kappa] if family in ("po", "ztp") else kappa * np.linspace(0.5, 1.5, 50)
    for th in theta + np.linspace(-0.5, 0.5, 50) * max(1.0, abs(theta)):
        for ka in kappas:
            assert loglik(th, ka) <= best + 1e-7
