import math

import numpy as np
import pytest

from chisqalt.binning import bin_counts, bin_probabilities, equal_prob_edges
from chisqalt.distributions import as_distribution, parse_spec
from chisqalt.estimation import (
    AffineTransform,
    EstimationError,
    binned_mle,
    canonicalize,
    default_start,
    expected_probs,
    minimum_chisq,
    unbinned_mle,
)
from chisqalt.rng import stream
from chisqalt.statistics import ALL_KINDS, StatisticKind, chisq_stat


def exact_counts(spec, theta, edges, n):
    return n * bin_probabilities(parse_spec(spec).bind(theta), edges)


class TestMinimumChisq:
    def test_two_bin_exp(self):
        fit = minimum_chisq("exp(?)", [60, 40], [0, 0.7, math.inf], "Pearson")
        assert fit.theta[0] == pytest.approx(-math.log(0.4) / 0.7, abs=1e-5)
        assert fit.theta[0] == pytest.approx(1.30899, abs=1e-5)
        assert fit.objective <= 1e-10

    @pytest.mark.parametrize("kind", [k for k in ALL_KINDS])
    def test_exact_fit_normal(self, kind):
        edges = np.array([-np.inf, -1.0, -0.3, 0.4, 1.2, 2.0, np.inf])
        O = exact_counts("normal(?,?)", [0.3, 1.2], edges, 1000)
        fit = minimum_chisq("normal(?,?)", O, edges, kind)
        np.testing.assert_allclose(fit.theta, [0.3, 1.2], atol=1e-5)
        assert fit.objective <= 1e-10

    def test_exact_fit_gamma(self):
        edges = np.array([0, 1, 2, 3, 5, 8, np.inf])
        O = exact_counts("gamma(?,?)", [3.0, 0.9], edges, 5000)
        fit = minimum_chisq("gamma(?,?)", O, edges, "Pearson")
        np.testing.assert_allclose(fit.theta, [3.0, 0.9], atol=1e-5)

    def test_neyman_with_empty_bin(self):
        with pytest.raises(ValueError):
            minimum_chisq("exp(?)", [10, 0, 5], [0, 1, 2, math.inf], "NeymanModified")

    def test_poisson_total(self):
        # with a free total the exact fit is found without renormalizing
        edges = np.array([0, 0.5, 1.5, np.inf])
        O = exact_counts("exp(?)", [1.3], edges, 800)
        fit = minimum_chisq("exp(?)", O, edges, "Pearson", total=800.0)
        assert fit.theta[0] == pytest.approx(1.3, abs=1e-5)

    def test_not_worse_than_binned_mle(self):
        rng = stream(4)
        x = rng.normal(0.2, 1.3, 400)
        edges = np.array([-np.inf, -1.5, -0.5, 0, 0.5, 1.5, np.inf])
        O = bin_counts(x, edges)
        for kind in (StatisticKind.PEARSON, StatisticKind.G2, StatisticKind.CR23):
            mc = minimum_chisq("normal(?,?)", O, edges, kind)
            ml = binned_mle("normal(?,?)", O, edges)
            E = O.sum() * expected_probs(parse_spec("normal(?,?)").bind(ml.theta), edges)
            assert mc.objective <= chisq_stat(kind, O, E) + 1e-8

    def test_reparameterization_invariance(self):
        rng = stream(9)
        x = rng.gamma(2.5, 1 / 1.7, 600)
        edges = np.array([0, 0.5, 1, 1.5, 2, 3, np.inf])
        O = bin_counts(x, edges)
        a = minimum_chisq("gamma(?,?)", O, edges, "Pearson")
        b = minimum_chisq("gamma(?,?)", O, edges, "Pearson", transform=AffineTransform(parse_spec("gamma(?,?)")))
        np.testing.assert_allclose(a.theta, b.theta, atol=2e-5)

    @pytest.mark.parametrize("spec,theta", [("exp(?)", [0.7]), ("normal(?,?)", [1.0, 2.0])])
    def test_consistency(self, spec, theta):
        # n = 1e5 multinomial counts: estimates within 5 Monte Carlo standard errors
        family = parse_spec(spec)
        F = family.bind(theta)
        edges = equal_prob_edges(F, 10)
        n = 100_000
        p = bin_probabilities(F, edges)
        est = []
        for b in range(20):
            O = stream(31, spec, b).multinomial(n, p)
            est.append(minimum_chisq(family, O, edges, "Pearson", start=theta).theta)
        est = np.array(est)
        se = est.std(axis=0, ddof=1) / math.sqrt(len(est))
        O = stream(32, spec).multinomial(n, p)
        one = minimum_chisq(family, O, edges, "Pearson").theta
        sd = est.std(axis=0, ddof=1)
        assert np.all(np.abs(one - theta) <= 5 * sd)
        assert np.all(np.abs(est.mean(axis=0) - theta) <= 5 * se + 1e-12)


class TestBinnedMle:
    def test_exact_fit(self):
        edges = np.array([-np.inf, -1, 0, 1, np.inf])
        O = exact_counts("normal(?,?)", [0.2, 0.8], edges, 1000)
        fit = binned_mle("normal(?,?)", O, edges)
        np.testing.assert_allclose(fit.theta, [0.2, 0.8], atol=1e-5)

    def test_agrees_with_min_chisq_on_two_bins(self):
        a = binned_mle("exp(?)", [60, 40], [0, 0.7, math.inf])
        b = minimum_chisq("exp(?)", [60, 40], [0, 0.7, math.inf])
        assert a.theta[0] == pytest.approx(b.theta[0], abs=1e-4)

    def test_degenerate(self):
        try:
            fit = binned_mle("exp(?)", [100, 0, 0], [0, 1, 2, math.inf])
        except EstimationError:
            return
        assert not fit.converged or fit.floored or fit.theta[0] > 10


class TestUnbinnedMle:
    def test_normal_closed_form(self):
        fit = unbinned_mle("normal(?,?)", [0.0, 2.0])
        np.testing.assert_allclose(fit.theta, [1.0, 1.0])

    def test_exp_closed_form(self):
        fit = unbinned_mle("exp(?)", [1.0, 3.0, 2.0])
        assert fit.theta[0] == pytest.approx(0.5)

    def test_outside_support(self):
        with pytest.raises(EstimationError):
            unbinned_mle("exp(?)", [-1.0, 2.0])
        with pytest.raises(EstimationError):
            unbinned_mle("beta(?,?)", [0.2, 1.5, 0.4])

    def test_no_data(self):
        with pytest.raises(EstimationError):
            unbinned_mle("normal(?,?)", [])

    def test_single_value(self):
        with pytest.raises(EstimationError):
            unbinned_mle("beta(?,?)", [0.3, 0.3])
        with pytest.raises(EstimationError):
            unbinned_mle("normal(?,?)", [1.0])

    def test_optimizer_family(self):
        x = stream(12).gamma(3.0, 1 / 0.5, 5000)
        fit = unbinned_mle("gamma(?,?)", x)
        np.testing.assert_allclose(fit.theta, [3.0, 0.5], rtol=0.1)

    def test_mixture_recovers_weight(self):
        truth = as_distribution("0.3333333333333333*normal(0,1) + normal(5,2)")
        x = truth.sample(1000, stream(77))
        fit = unbinned_mle("?*normal(?,?) + normal(?,?)", x)
        lam, mu1, s1, mu2, s2 = fit.theta
        assert abs(lam - 1 / 3) <= 0.1
        assert mu1 < mu2

    def test_canonical_order(self):
        theta = canonicalize("?*normal(?,?) + normal(?,?)", [0.7, 5.0, 2.0, 0.0, 1.0])
        np.testing.assert_allclose(theta, [0.3, 0.0, 1.0, 5.0, 2.0])


class TestDefaultStart:
    def test_normal(self):
        x = np.array([1.0, 5.0, 1.0, 5.0])
        np.testing.assert_allclose(default_start("normal(?,?)", data=x), [3.0, 2.0])

    def test_exp_from_counts(self):
        edges = np.array([0, 1, 2, 4])
        counts = np.array([50, 30, 20])
        m = (50 * 0.5 + 30 * 1.5 + 20 * 3.0) / 100
        assert default_start("exp(?)", counts=counts, edges=edges)[0] == pytest.approx(1 / m)

    def test_no_data(self):
        np.testing.assert_allclose(default_start("normal(?,?)"), [0.0, 1.0])

    @pytest.mark.parametrize("spec", ["beta(?,?)", "gamma(?,?)", "linear(?)", "uniform(?,?)", "t(?)",
                                      "?*normal(?,?) + normal(?,?)", "exp(?) | [0, 2]"])
    def test_inside_domain(self, spec):
        x = stream(3, spec).uniform(0.05, 0.95, 50)
        theta = default_start(spec, data=x)
        parse_spec(spec).bind(theta)
