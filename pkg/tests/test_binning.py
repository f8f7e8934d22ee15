import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from chisqalt.binning import (
    BinnedData,
    BinningError,
    BinningScheme,
    admissible,
    bin_counts,
    bin_probabilities,
    equal_prob_edges,
    equal_size_edges,
    histogram_scheme,
    interpolate_edges,
    make_scheme,
    merge_to_admissible,
    snap_to_data_edges,
    working_range,
)
from chisqalt.distributions import as_distribution

FAMILIES = ["uniform(0,1)", "normal(0,1)", "t(3)", "beta(2,4)", "gamma(3,0.5)", "exp(1)",
            "linear(0.2)", "exp(1) | [0, 1]", "0.3*normal(0,1) + 0.7*normal(5,2)"]


class TestEqualProb:
    def test_uniform(self):
        np.testing.assert_allclose(equal_prob_edges(as_distribution("uniform(0,1)"), 4),
                                   [0, 0.25, 0.5, 0.75, 1])

    def test_exp(self):
        e = equal_prob_edges(as_distribution("exp(1)"), 3)
        np.testing.assert_allclose(e[:3], [0, 0.405465, 1.098612], atol=1e-6)
        assert e[3] == math.inf

    def test_normal(self):
        np.testing.assert_array_equal(equal_prob_edges(as_distribution("normal(0,1)"), 2),
                                      [-math.inf, 0.0, math.inf])

    @pytest.mark.parametrize("text", FAMILIES)
    @pytest.mark.parametrize("k", [2, 3, 7, 15, 30])
    def test_probabilities(self, text, k):
        F = as_distribution(text)
        np.testing.assert_allclose(bin_probabilities(F, equal_prob_edges(F, k)), np.full(k, 1 / k), atol=1e-8)

    def test_too_few(self):
        with pytest.raises(BinningError):
            equal_prob_edges(as_distribution("uniform(0,1)"), 1)


class TestEqualSize:
    def test_uniform(self):
        np.testing.assert_allclose(equal_size_edges(as_distribution("uniform(0,1)"), 4),
                                   [0, 0.25, 0.5, 0.75, 1])

    def test_exp(self):
        F = as_distribution("exp(1)")
        lo, hi = working_range(F)
        assert lo == pytest.approx(0.005013, abs=1e-6)
        assert hi == pytest.approx(5.298317, abs=1e-6)
        e = equal_size_edges(F, 3)
        np.testing.assert_allclose(e[:3], [0, 1.769447, 3.533882], atol=1e-6)
        assert e[3] == math.inf

    def test_beta(self):
        e = equal_size_edges(as_distribution("beta(2,4)"), 5)
        np.testing.assert_allclose(e, [0, 0.2, 0.4, 0.6, 0.8, 1.0], atol=1e-12)

    def test_normal_ends(self):
        e = equal_size_edges(as_distribution("normal(0,1)"), 4)
        assert e[0] == -math.inf and e[-1] == math.inf
        np.testing.assert_allclose(np.diff(e[1:-1]), np.diff(e[1:-1])[0])


class TestInterpolate:
    def test_endpoints(self):
        F = as_distribution("exp(1)")
        e0, e1 = equal_prob_edges(F, 3), equal_size_edges(F, 3)
        np.testing.assert_array_equal(interpolate_edges(e0, e1, 0.0), e0)
        np.testing.assert_array_equal(interpolate_edges(e0, e1, 1.0), e1)

    def test_midpoint(self):
        F = as_distribution("exp(1)")
        e = interpolate_edges(equal_prob_edges(F, 3), equal_size_edges(F, 3), 0.5)
        np.testing.assert_allclose(e[:3], [0, 1.087456, 2.316247], atol=1e-6)
        assert e[3] == math.inf

    def test_degenerate(self):
        e = np.array([0, 0.3, 1.0])
        for kappa in (0, 0.3, 1):
            np.testing.assert_allclose(interpolate_edges(e, e, kappa), e)

    def test_mismatch(self):
        with pytest.raises(BinningError):
            interpolate_edges([0, 1, 2], [0, 2], 0.5)
        with pytest.raises(BinningError):
            interpolate_edges([-math.inf, 0, 1], [-1, 0, 1], 0.5)
        with pytest.raises(BinningError):
            interpolate_edges([0, 1], [0, 1], 1.5)

    @settings(max_examples=80, deadline=None)
    @given(st.sampled_from(FAMILIES), st.integers(2, 25), st.floats(0, 1))
    def test_strictly_increasing(self, text, k, kappa):
        F = as_distribution(text)
        e = interpolate_edges(equal_prob_edges(F, k), equal_size_edges(F, k), kappa)
        assert np.all(np.diff(e) > 0)


class TestProbabilitiesAndCounts:
    def test_probabilities(self):
        np.testing.assert_allclose(bin_probabilities(as_distribution("uniform(0,1)"), [0, .25, .5, .75, 1]),
                                   [0.25] * 4)
        np.testing.assert_allclose(bin_probabilities(as_distribution("linear(0.2)"), [0, 0.5, 1]),
                                   [0.45, 0.55], atol=1e-12)
        np.testing.assert_allclose(bin_probabilities(as_distribution("exp(1) | [0, 1]"), [0, 0.5, 1]),
                                   [0.622459, 0.377541], atol=1e-6)

    def test_counts(self):
        np.testing.assert_array_equal(bin_counts([0.1, 0.2, 0.9], [0, 0.5, 1]), [2, 1])
        np.testing.assert_array_equal(bin_counts([], [0, 0.5, 1]), [0, 0])
        np.testing.assert_array_equal(bin_counts([0.5], [0, 0.5, 1]), [0, 1])
        np.testing.assert_array_equal(bin_counts([1.0, 0.0], [0, 0.5, 1]), [1, 1])

    def test_out_of_range(self):
        with pytest.warns(UserWarning):
            counts, outside = bin_counts([-1.0, 0.2, 2.0], [0, 0.5, 1], return_outside=True)
        assert outside == 2
        np.testing.assert_array_equal(counts, [1, 0])

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(0, 1), min_size=0, max_size=200), st.randoms())
    def test_counts_sum_and_permutation(self, values, rnd):
        edges = [0, 0.1, 0.35, 0.5, 0.9, 1]
        counts = bin_counts(values, edges)
        assert counts.sum() == len(values)
        shuffled = list(values)
        rnd.shuffle(shuffled)
        np.testing.assert_array_equal(bin_counts(shuffled, edges), counts)


class TestAdmissible:
    def test_examples(self):
        assert admissible(1000, [0.25] * 4)
        assert not admissible(12, [0.25] * 4)
        assert admissible(20, [0.25] * 4)


class TestHistogram:
    def test_unchanged(self):
        s = histogram_scheme(as_distribution("uniform(0,1)"), 1000)
        assert s.k == 50

    def test_merged(self):
        s = histogram_scheme(as_distribution("uniform(0,1)"), 100)
        # 15 merged triples then the leftover folded into the last bin
        assert s.k == 16
        assert admissible(100, s.prob_array)
        np.testing.assert_allclose(np.diff(s.edge_array)[:15], 0.06, atol=1e-12)
        assert s.edge_array[-1] == 1.0

    def test_two_bins(self):
        s = histogram_scheme(as_distribution("uniform(0,1)"), 10, nbins=2)
        assert s.k == 2

    def test_too_small(self):
        with pytest.raises(BinningError):
            histogram_scheme(as_distribution("uniform(0,1)"), 9)

    @settings(max_examples=40, deadline=None)
    @given(st.sampled_from(FAMILIES), st.integers(10, 3000), st.integers(2, 60))
    def test_always_admissible(self, text, n, nbins):
        try:
            s = histogram_scheme(as_distribution(text), n, nbins)
        except BinningError:
            # only tiny samples may fail to reach two admissible bins
            assert n < 60
            return
        assert admissible(n, s.prob_array)
        assert s.k >= 2

    def test_merge_remainder(self):
        edges, probs = merge_to_admissible([0, 1, 2, 3], [0.5, 0.46, 0.04], 100)
        np.testing.assert_array_equal(edges, [0, 1, 3])
        np.testing.assert_allclose(probs, [0.5, 0.5])


class TestSnap:
    def test_nearest(self):
        avail = np.round(np.arange(11) * 0.1, 10)
        np.testing.assert_allclose(snap_to_data_edges([0, 0.33, 0.66, 1], avail), [0, 0.3, 0.7, 1])

    def test_subset(self):
        avail = np.round(np.arange(11) * 0.1, 10)
        np.testing.assert_allclose(snap_to_data_edges([0, 0.3, 0.6, 1], avail), [0, 0.3, 0.6, 1])

    def test_collision(self):
        avail = np.round(np.arange(11) * 0.1, 10)
        np.testing.assert_allclose(snap_to_data_edges([0, 0.14, 0.16, 1], avail), [0, 0.1, 0.2, 1])

    def test_not_enough(self):
        with pytest.raises(BinningError):
            snap_to_data_edges([0, 0.2, 0.4, 0.6, 1], [0, 0.5, 1])


class TestSchemeTypes:
    def test_scheme_validates(self):
        with pytest.raises(BinningError):
            BinningScheme(2, 0.0, (0.0, 0.5, 0.4), (0.5, 0.5))
        with pytest.raises(BinningError):
            BinningScheme(2, 0.0, (0.0, 0.5, 1.0), (0.5, 0.6))

    def test_make_scheme(self):
        s = make_scheme(as_distribution("normal(0,1)"), 5, 0.5)
        assert s.k == 5 and s.prob_array.sum() == pytest.approx(1.0)

    def test_binned_csv_round_trip(self):
        b = BinnedData((-math.inf, 0.0, 1.5, math.inf), (3, 10, 4))
        again = BinnedData.from_csv(b.to_csv())
        assert again.edges == b.edges and again.counts == b.counts
        assert again.n == 17

    @pytest.mark.parametrize("text,line", [
        ("lower,upper,count\n0,1,3\n1.5,2,4\n", 3),
        ("lower,upper,count\n0,1,3\n1,2,x\n", 3),
        ("lower,upper,count\n0,1,-3\n", 2),
    ])
    def test_binned_csv_errors(self, text, line):
        with pytest.raises(BinningError, match=f"line {line}"):
            BinnedData.from_csv(text)

    def test_binned_csv_header(self):
        with pytest.raises(BinningError):
            BinnedData.from_csv("a,b,c\n0,1,2\n")
