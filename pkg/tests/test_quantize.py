"""Quantizer oracles, threshold values, distribution shapes, and properties."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quantrnn.errors import DomainError
from quantrnn.quantize import (
    FULL_PRECISION,
    LevelShape,
    QuantKind,
    QuantScheme,
    ThresholdSet,
    histogram_csv,
    quantize,
    quantize_bc,
    quantize_qc,
    quantize_tc,
    quaternary_thresholds,
    ternary_thresholds,
    weight_histogram,
)
from quantrnn.tensor import Tensor, mean_std

from oracles import bc_scalar, qc_scalar, tc_scalar

NORMAL = LevelShape.NORMAL_LIKE
UNIFORM = LevelShape.UNIFORM_LIKE


class TestBinaryConnect:
    def test_sign_with_zero_to_plus_one(self):
        out = quantize_bc(np.array([0.7, -0.3, 0.0]))
        assert out.tolist() == [1.0, -1.0, 1.0]

    def test_negative_zero_maps_to_plus_one(self):
        assert quantize_bc(np.array([-0.0]))[0] == 1.0

    def test_scale_invariance(self):
        rng = np.random.default_rng(3)
        w = rng.standard_normal(500)
        for alpha in (0.01, 1.0, 37.5):
            assert np.array_equal(quantize_bc(alpha * w), quantize_bc(w))

    def test_balanced_on_standard_normal(self):
        w = np.random.default_rng(7).standard_normal(100_000)
        frac_pos = (quantize_bc(w) == 1.0).mean()
        assert abs(frac_pos - 0.5) < 0.01

    def test_matches_scalar_reference(self):
        w = np.random.default_rng(0).standard_normal(10_000)
        want = np.array([bc_scalar(v) for v in w])
        assert np.array_equal(quantize_bc(w), want)


class TestTernaryThresholds:
    def test_normal_literal_substitution(self):
        ts = ternary_thresholds(0.0, 1.0, NORMAL)
        assert ts.cutpoints == (-1.0, 1.0)
        assert ts.levels == (-1.0, 0.0, 1.0)

    def test_uniform_literal_substitution(self):
        ts = ternary_thresholds(0.0, 1.0, UNIFORM)
        assert ts.cutpoints == (-0.5, 0.5)

    def test_degenerate_zero_stats_all_zero(self):
        ts = ternary_thresholds(0.0, 0.0, NORMAL)
        out = ts.apply(np.array([-5.0, 0.0, 5.0]))
        assert out.tolist() == [0.0, 0.0, 0.0]

    def test_negative_sigma_rejected(self):
        with pytest.raises(DomainError):
            ternary_thresholds(0.0, -0.1, NORMAL)

    def test_boundaries_belong_to_lower_interval(self):
        ts = ternary_thresholds(0.0, 1.0, NORMAL)
        out = ts.apply(np.array([-3.0, -1.0, 0.2, 1.0, 3.0]))
        assert out.tolist() == [-1.0, -1.0, 0.0, 0.0, 1.0]

    def test_uniform_boundaries(self):
        ts = ternary_thresholds(0.0, 1.0, UNIFORM)
        out = ts.apply(np.array([-0.6, -0.4, 0.5, 0.51]))
        assert out.tolist() == [-1.0, 0.0, 0.0, 1.0]


class TestQuaternaryThresholds:
    def test_normal_literal_substitution(self):
        ts = quaternary_thresholds(0.0, 1.0, NORMAL)
        assert ts.cutpoints == (-0.25, 0.0, 0.25)
        assert ts.levels == (-1.0, -0.5, 0.5, 1.0)

    def test_uniform_literal_substitution(self):
        ts = quaternary_thresholds(0.0, 1.0, UNIFORM)
        assert ts.cutpoints == (-1.0 / 6.0, 0.0, 1.0 / 6.0)

    def test_degenerate_sign_split(self):
        ts = quaternary_thresholds(0.0, 0.0, NORMAL)
        out = ts.apply(np.array([-2.0, 0.0, 2.0]))
        assert out.tolist() == [-0.5, -0.5, 0.5]

    def test_zero_maps_to_minus_half(self):
        out = quantize_qc(np.array([0.0]), NORMAL)
        assert out[0] == -0.5

    def test_boundaries(self):
        ts = quaternary_thresholds(0.0, 1.0, NORMAL)
        out = ts.apply(np.array([-0.3, -0.1, 0.1, 0.3]))
        assert out.tolist() == [-1.0, -0.5, 0.5, 1.0]


class TestThresholdSet:
    def test_level_count_invariant(self):
        with pytest.raises(DomainError):
            ThresholdSet(0.0, 1.0, (-1.0, 1.0), (-1.0, 1.0))

    def test_cutpoints_strictly_increasing(self):
        with pytest.raises(DomainError):
            ThresholdSet(0.0, 0.0, (0.0, 0.0), (-1.0, 0.0, 1.0))


class TestDistributionShapes:
    """Bin fractions for 1e6 standard-normal weights vs Gaussian CDF values."""

    w = np.random.default_rng(12345).standard_normal(1_000_000)

    @staticmethod
    def _fractions(q, levels):
        return [float((q == lv).mean()) for lv in levels]

    def test_tc_normal_like(self):
        # Phi(-1), Phi(1)-Phi(-1), 1-Phi(1)
        frac = self._fractions(quantize_tc(self.w, NORMAL), (-1.0, 0.0, 1.0))
        for got, want in zip(frac, (0.1587, 0.6827, 0.1587)):
            assert abs(got - want) < 0.005

    def test_tc_uniform_like(self):
        frac = self._fractions(quantize_tc(self.w, UNIFORM), (-1.0, 0.0, 1.0))
        for got, want in zip(frac, (0.3085, 0.3829, 0.3085)):
            assert abs(got - want) < 0.005

    def test_qc_normal_like(self):
        # Phi(-0.25), Phi(0)-Phi(-0.25), symmetric
        frac = self._fractions(quantize_qc(self.w, NORMAL), (-1.0, -0.5, 0.5, 1.0))
        for got, want in zip(frac, (0.4013, 0.0987, 0.0987, 0.4013)):
            assert abs(got - want) < 0.005


class TestDispatch:
    def test_full_precision_identity(self):
        t = Tensor([1.0, -2.0, 3.0])
        assert quantize(t, FULL_PRECISION) is t

    def test_binary_dispatch(self):
        out = quantize(np.array([-5.0, 5.0]), QuantScheme.parse("bc"))
        assert out.tolist() == [-1.0, 1.0]

    def test_tc_matches_scalar_reference_on_random_weights(self):
        w = np.random.default_rng(9).standard_normal(100_000) * 0.05
        mu, sigma = mean_std(w)
        got = quantize(w, QuantScheme.parse("tc", "normal"))
        want = np.array([tc_scalar(v, mu, sigma) for v in w])
        assert np.array_equal(got, want)

    def test_qc_matches_scalar_reference_on_random_weights(self):
        w = np.random.default_rng(10).standard_normal(100_000) * 0.05
        mu, sigma = mean_std(w)
        got = quantize(w, QuantScheme.parse("qc", "uniform"))
        want = np.array([qc_scalar(v, mu, sigma, uniform=True) for v in w])
        assert np.array_equal(got, want)

    def test_tensor_in_tensor_out(self):
        t = Tensor(np.array([0.5, -0.5]))
        out = quantize(t, QuantScheme.parse("bc"))
        assert isinstance(out, Tensor) and out.shape == t.shape

    def test_scheme_names(self):
        assert QuantScheme.parse("tc", "uniform").name == "tc-uniform"
        assert QuantScheme.parse("fp").name == "fp"
        assert QuantScheme.parse("bc").levels() == (-1.0, 1.0)
        assert QuantScheme.parse("qc").levels() == (-1.0, -0.5, 0.5, 1.0)


class TestHistogram:
    def test_bc_tensor_two_populated_bins(self):
        w = quantize_bc(np.random.default_rng(2).standard_normal(1000))
        rows = weight_histogram(w, bins=10)
        assert sum(1 for _, count in rows if count > 0) == 2
        assert sum(count for _, count in rows) == 1000

    def test_constant_tensor_single_bin(self):
        rows = weight_histogram(np.full(50, 3.25), bins=7)
        assert sum(1 for _, count in rows if count > 0) == 1
        assert sum(count for _, count in rows) == 50

    def test_tc_normal_middle_level_most_populated(self):
        w = np.random.default_rng(4).standard_normal(200_000)
        rows = weight_histogram(quantize_tc(w, NORMAL), bins=9)
        counts = [count for _, count in rows]
        mid = counts[len(counts) // 2]
        assert mid > max(counts[0], counts[-1])

    def test_bins_lower_bound(self):
        with pytest.raises(DomainError):
            weight_histogram(np.ones(4), bins=1)

    def test_csv_format(self):
        text = histogram_csv([(0.5, 3), (1.5, 7)])
        lines = text.strip().split("\n")
        assert lines[0] == "bin_center,count"
        assert lines[1].endswith(",3") and lines[2].endswith(",7")


SCHEMES = [QuantScheme.parse(k, s) for k in ("bc", "tc", "qc") for s in ("normal", "uniform")]


class TestProperties:
    @pytest.mark.filterwarnings("ignore:overflow")
    @pytest.mark.parametrize("scheme", SCHEMES, ids=lambda s: s.name)
    def test_codomain_exactness_on_edge_values(self, scheme):
        w = np.array([0.0, -0.0, 5e-324, -5e-324, 1e-308, -1e-308, 1e300, -1e300, 0.3, -0.3])
        out = quantize(w, scheme)
        assert set(np.unique(out)).issubset(set(scheme.levels()))

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=60))
    def test_codomain_exactness_random(self, values):
        w = np.array(values)
        for scheme in SCHEMES:
            out = quantize(w, scheme)
            assert set(np.unique(out)).issubset(set(scheme.levels()))
            assert out.shape == w.shape

    @settings(max_examples=50, deadline=None)
    @given(st.floats(-5, 5, allow_nan=False), st.floats(0, 5, allow_nan=False),
           st.lists(st.floats(-10, 10, allow_nan=False), min_size=2, max_size=40))
    def test_monotone_under_shared_thresholds(self, mu, sigma, values):
        for maker in (ternary_thresholds, quaternary_thresholds):
            for shape in (NORMAL, UNIFORM):
                ts = maker(mu, sigma, shape)
                w = np.sort(np.array(values))
                out = ts.apply(w)
                assert (np.diff(out) >= 0).all()

    @settings(max_examples=50, deadline=None)
    @given(st.floats(-1e9, 1e9, allow_nan=False))
    def test_partition_totality(self, w):
        for maker in (ternary_thresholds, quaternary_thresholds):
            for shape in (NORMAL, UNIFORM):
                ts = maker(0.1, 0.7, shape)
                out = ts.apply(np.array([w]))
                assert out[0] in ts.levels

    def test_statistics_recomputed_every_call(self):
        rng = np.random.default_rng(8)
        w = rng.standard_normal(1000) * 0.1
        before = quantize_tc(w, NORMAL)
        w2 = w.copy()
        w2[:500] *= 10.0  # fatter tails -> wider cutpoints -> different output
        after = quantize_tc(w2, NORMAL)
        assert not np.array_equal(before[500:], after[500:])

    @pytest.mark.parametrize("scheme", SCHEMES, ids=lambda s: s.name)
    def test_shape_preserved(self, scheme):
        w = np.random.default_rng(6).standard_normal((3, 4, 5))
        assert quantize(w, scheme).shape == (3, 4, 5)

    def test_empty_rejected(self):
        with pytest.raises(DomainError):
            quantize_bc(np.array([]))
