import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from chisqalt.distributions import (
    FREE,
    Mixture,
    Normal,
    SpecError,
    Truncated,
    Uniform,
    as_distribution,
    bind,
    parse_spec,
    sample,
)
from chisqalt.distributions.spec import Atom, Truncate
from chisqalt.rng import stream

CATALOG_CASES = [
    "uniform(0,1)",
    "uniform(-2,3)",
    "normal(0,1)",
    "normal(1.5,0.3)",
    "t(1)",
    "t(5)",
    "t(30)",
    "beta(2,4)",
    "beta(0.7,0.7)",
    "gamma(3,0.5)",
    "gamma(0.8,2)",
    "exp(1)",
    "exp(0.25)",
    "linear(0.2)",
    "linear(-0.5)",
    "linear(1)",
    "exp(1) | [0, 1]",
    "0.9*exp(1) + 0.1*normal(1.5, 0.5) | [0, inf)",
    "0.3*normal(0,1) + 0.7*normal(5,2)",
]


class TestParse:
    def test_atom(self):
        spec = parse_spec("normal(0,1)")
        assert spec.root == Atom("normal", (0.0, 1.0))
        assert spec.p == 0 and spec.is_simple

    def test_free_parameters(self):
        spec = parse_spec("normal(?,?)")
        assert spec.root == Atom("normal", (FREE, FREE))
        assert spec.p == 2

    def test_truncated_mixture(self):
        spec = parse_spec("0.9*exp(1) + 0.1*normal(1.5, 0.5) | [0, inf)")
        assert isinstance(spec.root, Truncate)
        assert spec.root.lower == 0.0 and spec.root.upper == math.inf
        assert spec.p == 0

    def test_case_and_whitespace(self):
        assert parse_spec("  NORMAL ( 0 , 1 ) ") == parse_spec("normal(0,1)")

    def test_negative_arguments(self):
        assert parse_spec("linear(-0.5)").root == Atom("linear", (-0.5,))
        assert parse_spec("uniform(-1e-1, 2)").root == Atom("uniform", (-0.1, 2.0))

    def test_free_weight_with_remainder(self):
        spec = parse_spec("?*normal(?,?) + normal(?,?)")
        assert spec.p == 5

    @pytest.mark.parametrize("text", [
        "normal(0,1",
        "normal(0,1))",
        "foo(1)",
        "0.5*normal(0,1) + 0.4*normal(1,1)",
        "normal(0,1) | [1, 0]",
        "exp(1) | [-2, -1]",
        "",
        "normal(0,1) +",
        "1.2*normal(0,1) + normal(1,1)",
    ])
    def test_errors(self, text):
        with pytest.raises(SpecError):
            parse_spec(text)

    def test_error_carries_position(self):
        with pytest.raises(SpecError) as err:
            parse_spec("normal(0,1) + ")
        assert err.value.position is not None

    @pytest.mark.parametrize("text", CATALOG_CASES + ["normal(?,?)", "?*normal(?,?) + normal(?,?)",
                                                       "exp(?) | (0, 3]"])
    def test_round_trip(self, text):
        spec = parse_spec(text)
        again = parse_spec(spec.unparse())
        assert again == spec
        assert again.p == spec.p


class TestBind:
    def test_substitution(self):
        a = bind("normal(?,?)", [0, 1])
        b = as_distribution("normal(0,1)")
        x = np.linspace(-3, 3, 13)
        np.testing.assert_array_equal(a.cdf(x), b.cdf(x))

    def test_exp_cdf(self):
        assert bind("exp(?)", [1]).cdf(1.0) == pytest.approx(0.632121, abs=1e-6)

    def test_identity_embedding(self):
        d = bind("uniform(0,1)", [])
        assert d.cdf(0.3) == pytest.approx(0.3)

    def test_arity(self):
        with pytest.raises(SpecError):
            bind("normal(?,?)", [0])

    def test_domain(self):
        with pytest.raises(SpecError):
            bind("normal(?,?)", [0, -1])

    def test_free_spec_is_not_a_distribution(self):
        with pytest.raises(SpecError):
            as_distribution("exp(?)")


class TestCdfQuantile:
    def test_linear(self):
        assert as_distribution("linear(0.2)").cdf(0.5) == pytest.approx(0.45, abs=1e-12)

    def test_truncated_exp(self):
        d = as_distribution("exp(1) | [0, 1]")
        assert d.cdf(0.5) == pytest.approx((1 - math.exp(-0.5)) / (1 - math.exp(-1)), abs=1e-12)
        assert d.cdf(0.5) == pytest.approx(0.622459, abs=1e-6)

    @pytest.mark.parametrize("text", CATALOG_CASES)
    def test_upper_end_is_one(self, text):
        d = as_distribution(text)
        assert d.cdf(d.support.upper) == 1.0
        assert d.cdf(d.support.lower) == 0.0

    def test_quantile_examples(self):
        assert as_distribution("exp(1)").quantile(1 / 3) == pytest.approx(-math.log(2 / 3), abs=1e-9)
        assert as_distribution("uniform(0,1)").quantile(0.7) == pytest.approx(0.7, abs=1e-15)
        assert as_distribution("normal(0,1)").quantile(0.5) == 0.0

    @pytest.mark.parametrize("q", [0.0, 1.0, -0.1, 1.5])
    def test_quantile_domain(self, q):
        with pytest.raises(ValueError):
            as_distribution("normal(0,1)").quantile(q)

    @pytest.mark.parametrize("text,ref", [
        ("normal(1.5,0.3)", stats.norm(1.5, 0.3)),
        ("t(5)", stats.t(5)),
        ("t(1)", stats.t(1)),
        ("beta(2,4)", stats.beta(2, 4)),
        ("gamma(3,0.5)", stats.gamma(3, scale=2.0)),
        ("exp(0.25)", stats.expon(scale=4.0)),
    ])
    def test_against_reference(self, text, ref):
        d = as_distribution(text)
        q = np.linspace(0.01, 0.99, 25)
        np.testing.assert_allclose(d.quantile(q), ref.ppf(q), rtol=1e-9, atol=1e-10)
        x = ref.ppf(q)
        np.testing.assert_allclose(d.cdf(x), q, atol=1e-10)
        np.testing.assert_allclose(d.density(x), ref.pdf(x), rtol=1e-9)

    def test_published_reference_values(self):
        # standard-table values
        assert as_distribution("normal(0,1)").cdf(1.959963985) == pytest.approx(0.975, abs=1e-9)
        assert as_distribution("t(5)").quantile(0.975) == pytest.approx(2.570582, abs=1e-6)
        assert as_distribution("t(1)").cdf(1.0) == pytest.approx(0.75, abs=1e-12)
        assert as_distribution("beta(2,2)").cdf(0.5) == pytest.approx(0.5, abs=1e-12)
        assert as_distribution("gamma(1,1)").cdf(1.0) == pytest.approx(1 - math.exp(-1), abs=1e-12)

    @pytest.mark.parametrize("text", CATALOG_CASES)
    def test_round_trip_grid(self, text):
        d = as_distribution(text)
        q = np.random.default_rng(0).uniform(1e-6, 1 - 1e-6, 1000)
        np.testing.assert_allclose(d.cdf(d.quantile(q)), q, atol=1e-8)

    @pytest.mark.parametrize("text", CATALOG_CASES)
    def test_quantile_of_cdf(self, text):
        d = as_distribution(text)
        x = d.quantile(np.linspace(0.02, 0.98, 49))
        np.testing.assert_allclose(d.quantile(d.cdf(x)), x, atol=1e-8, rtol=1e-8)

    @pytest.mark.parametrize("text", CATALOG_CASES)
    def test_monotone(self, text):
        d = as_distribution(text)
        lo, hi = d.quantile(0.001), d.quantile(0.999)
        c = d.cdf(np.linspace(lo - 1, hi + 1, 500))
        assert np.all(np.diff(c) >= 0)
        assert np.all((c >= 0) & (c <= 1))

    @pytest.mark.parametrize("text", CATALOG_CASES)
    def test_density_integrates_to_one(self, text):
        from scipy import integrate

        d = as_distribution(text)
        lo, hi = d.support.lower, d.support.upper
        total = 0.0
        # split at quantiles so quad sees the mass
        cuts = [lo] + list(d.quantile([0.01, 0.25, 0.5, 0.75, 0.99])) + [hi]
        for a, b in zip(cuts[:-1], cuts[1:]):
            total += integrate.quad(d.density, a, b, limit=200)[0]
        assert total == pytest.approx(1.0, abs=1e-6)

    @settings(max_examples=60, deadline=None)
    @given(st.floats(-1, 1), st.floats(1e-6, 1 - 1e-6))
    def test_linear_round_trip(self, s, q):
        d = as_distribution(f"linear({s!r})")
        assert abs(d.cdf(d.quantile(q)) - q) <= 1e-8

    @settings(max_examples=60, deadline=None)
    @given(st.floats(0.2, 20), st.floats(0.2, 20), st.floats(1e-6, 1 - 1e-6))
    def test_beta_round_trip(self, a, b, q):
        d = as_distribution(f"beta({a!r},{b!r})")
        assert abs(d.cdf(d.quantile(q)) - q) <= 1e-8


class TestCombinators:
    def test_mixture_is_weighted_sum(self):
        m = as_distribution("0.3*normal(0,1) + 0.7*normal(5,2)")
        x = np.linspace(-5, 12, 300)
        ref = 0.3 * Normal(0, 1).cdf(x) + 0.7 * Normal(5, 2).cdf(x)
        np.testing.assert_allclose(m.cdf(x), ref, atol=1e-12, rtol=0)

    def test_remainder_weight(self):
        a = as_distribution("0.25*normal(0,1) + normal(3,1)")
        b = as_distribution("0.25*normal(0,1) + 0.75*normal(3,1)")
        x = np.linspace(-3, 6, 50)
        np.testing.assert_allclose(a.cdf(x), b.cdf(x), atol=1e-15)

    def test_truncation_formula(self):
        base = Normal(0, 1)
        t = Truncated(base, -0.5, 2.0)
        x = np.linspace(-0.5, 2.0, 200)
        ref = (base.cdf(x) - base.cdf(-0.5)) / (base.cdf(2.0) - base.cdf(-0.5))
        np.testing.assert_allclose(t.cdf(x), ref, atol=1e-12, rtol=0)

    def test_bad_weights(self):
        with pytest.raises(ValueError):
            Mixture([0.5, 0.6], [Normal(0, 1), Normal(1, 1)])

    def test_truncation_without_mass(self):
        with pytest.raises(ValueError):
            Truncated(Uniform(0, 1), 2.0, 3.0)


class TestSampling:
    def test_empty(self):
        assert len(sample("uniform(0,1)", 0, stream(1))) == 0

    def test_uniform_mean(self):
        x = sample("uniform(0,1)", 100_000, stream(2))
        assert abs(x.mean() - 0.5) < 0.01

    def test_truncated_mixture_support(self):
        x = sample("0.9*exp(1) + 0.1*normal(1.5, 0.5) | [0, inf)", 100_000, stream(3))
        assert x.min() >= 0.0

    def test_deterministic(self):
        a = sample("t(3)", 50, stream(5, "x"))
        b = sample("t(3)", 50, stream(5, "x"))
        np.testing.assert_array_equal(a, b)

    @pytest.mark.parametrize("text", ["t(5)", "gamma(3,0.5)", "beta(2,4)", "linear(0.2)",
                                      "0.3*normal(0,1) + 0.7*normal(5,2)", "exp(1) | [0, 1]"])
    def test_matches_cdf(self, text):
        d = as_distribution(text)
        x = d.sample(20_000, stream(11, text))
        assert stats.kstest(x, d.cdf).pvalue > 1e-3

    def test_negative_size(self):
        with pytest.raises(ValueError):
            sample("uniform(0,1)", -1, stream(1))
