"""Descriptive stats, Pearson correlation, and the residual ECDF."""

from datetime import datetime, timezone

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from eventrisk import errors
from eventrisk.describe import correlation_matrix, describe, pearson, residual_ecdf
from eventrisk.ingest import EventRecord, FeatureTable
from eventrisk.panel import aggregate, join_features


def utc(*args):
    return datetime(*args, tzinfo=timezone.utc)


SPAN = (utc(2016, 1, 4), utc(2016, 1, 25))


def panel_with_counts(counts_by_week, region="R1"):
    events = []
    weeks = [utc(2016, 1, 4), utc(2016, 1, 11), utc(2016, 1, 18)]
    for week, c in zip(weeks, counts_by_week):
        for i in range(c):
            events.append(
                EventRecord(f"e{i}", week.replace(hour=1 + i % 20), "FR", region_id=region)
            )
    return aggregate(events, {region}, "weekly", SPAN, ["FR"])


class TestDescribe:
    def test_constant_series(self):
        rows = describe(panel_with_counts([2, 2, 2]))
        (row,) = rows
        assert row.mean_mu == 2.0
        assert row.stddev_sigma == 0.0
        assert row.cv == 0.0
        assert row.n_periods == 3

    def test_zero_four_sample_std(self):
        # hand computation with the n-1 denominator: sigma = 2*sqrt(2)
        span2 = (utc(2016, 1, 4), utc(2016, 1, 18))
        events = [
            EventRecord(f"e{i}", utc(2016, 1, 12, 1 + i), "FR", region_id="R1") for i in range(4)
        ]
        panel = aggregate(events, {"R1"}, "weekly", span2, ["FR"])
        (row,) = describe(panel)
        assert row.mean_mu == 2.0
        assert row.stddev_sigma == pytest.approx(2 * np.sqrt(2))
        assert row.cv == pytest.approx(np.sqrt(2))

    def test_all_zero_flags_cv_undefined(self):
        (row,) = describe(panel_with_counts([0, 0, 0]))
        assert row.mean_mu == 0.0
        assert row.cv is None

    def test_population_std_switch(self):
        span2 = (utc(2016, 1, 4), utc(2016, 1, 18))
        events = [
            EventRecord(f"e{i}", utc(2016, 1, 12, 1 + i), "FR", region_id="R1") for i in range(4)
        ]
        panel = aggregate(events, {"R1"}, "weekly", span2, ["FR"])
        (row,) = describe(panel, sample_std=False)
        assert row.stddev_sigma == pytest.approx(2.0)

    def test_city_level_sums_regions_first(self):
        events = [
            EventRecord("a", utc(2016, 1, 5), "FR", region_id="R1"),
            EventRecord("b", utc(2016, 1, 6), "FR", region_id="R2"),
        ]
        panel = aggregate(events, {"R1", "R2"}, "weekly", SPAN, ["FR"])
        (city,) = describe(panel, level="city")
        (region,) = (r for r in describe(panel, level="region"))
        assert city.n_periods == 3
        assert region.n_periods == 6
        assert city.mean_mu == pytest.approx(2 / 3)
        assert region.mean_mu == pytest.approx(2 / 6)

    def test_integer_scaling_preserves_cv(self):
        base = describe(panel_with_counts([1, 2, 3]))[0]
        scaled = describe(panel_with_counts([3, 6, 9]))[0]
        assert scaled.mean_mu == pytest.approx(3 * base.mean_mu)
        assert scaled.stddev_sigma == pytest.approx(3 * base.stddev_sigma)
        assert scaled.cv == pytest.approx(base.cv)


class TestPearson:
    def test_perfect_positive(self):
        assert pearson([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)

    def test_perfect_negative(self):
        assert pearson([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)

    def test_zero_variance(self):
        with pytest.raises(errors.ZeroVariance):
            pearson([1, 2, 3], [5, 5, 5])

    @given(
        xs=st.lists(st.floats(-100, 100), min_size=3, max_size=30),
        a=st.floats(0.1, 50),
        b=st.floats(-100, 100),
    )
    @settings(max_examples=60, deadline=None)
    def test_affine_invariance_and_sign_flip(self, xs, a, b):
        x = np.asarray(xs)
        assume(x.std() > 1e-3)
        rng = np.random.default_rng(1)
        ys = rng.normal(size=len(xs))
        rho = pearson(x, ys)
        assert abs(rho) <= 1 + 1e-12
        assert pearson(a * x + b, ys) == pytest.approx(rho, abs=1e-7)
        assert pearson(-x, ys) == pytest.approx(-rho, abs=1e-7)


class TestCorrelationMatrix:
    def _joined(self, values, counts):
        n = len(values)
        regions = [f"R{i:03d}" for i in range(n)]
        table = FeatureTable(regions, ["f"], np.array(values, dtype=float).reshape(-1, 1))
        events = []
        for rid, c in zip(regions, counts):
            events.extend(
                EventRecord(f"{rid}-{i}", utc(2016, 1, 5, (i % 23) + 1, i % 60 ), "FR", region_id=rid)
                for i in range(int(c))
            )
        panel = aggregate(events, set(regions), "weekly", SPAN, ["FR"])
        return join_features(panel, table)

    def test_feature_equal_to_counts_gives_one(self):
        counts = [1, 2, 3, 4, 5]
        cm = correlation_matrix(self._joined(counts, counts))
        assert cm.rho[0, 0] == pytest.approx(1.0)

    def test_independent_feature_near_zero(self):
        # Monte Carlo: independent feature vs counts over 1000 regions
        rng = np.random.default_rng(41)
        hits = 0
        for trial in range(20):
            values = rng.uniform(0, 1, 1000)
            counts = rng.poisson(2.0, 1000)
            cm = correlation_matrix(self._joined(values, counts))
            if abs(cm.rho[0, 0]) < 0.1:
                hits += 1
        assert hits >= 19

    def test_constant_feature_flagged(self):
        cm = correlation_matrix(self._joined([3, 3, 3, 3], [1, 2, 3, 4]))
        assert cm.undefined()[0, 0]


class TestEcdf:
    def test_hand_values(self):
        f = residual_ecdf([0, 0, 1, 2])
        assert f(0) == 0.5
        assert f(1) == 0.75
        assert f(2) == 1.0

    def test_all_zeros(self):
        f = residual_ecdf([0, 0, 0])
        assert f(0) == 1.0

    def test_single_value(self):
        f = residual_ecdf([7.0])
        assert f(7.0) == 1.0
        assert f(6.9) == 0.0

    @given(st.lists(st.floats(0, 1e6), min_size=1, max_size=100))
    @settings(max_examples=60, deadline=None)
    def test_monotone_and_bounded(self, values):
        f = residual_ecdf(values)
        assert np.all(np.diff(f.fractions) > 0) or len(f.fractions) == 1
        assert 0 < f.fractions[0] <= 1
        assert f.fractions[-1] == 1.0
        assert f(max(values)) == 1.0
