"""Synthetic-city generation: moments, determinism, and the ingest loop."""

import numpy as np
import pytest

from eventrisk.ingest import parse_events, parse_feature_table
from eventrisk.panel import aggregate
from eventrisk.simulate import (
    FeatureSpec,
    ScenarioSpec,
    Truth,
    generate,
    sample_nb2,
    write_events_csv,
)


class TestSampleNb2:
    def test_poisson_mean(self):
        rng = np.random.default_rng(1)
        draws = [sample_nb2(3.0, 0.0, rng) for _ in range(100_000)]
        assert np.mean(draws) == pytest.approx(3.0, abs=0.05)

    def test_overdispersed_variance(self):
        # var = mu + alpha mu^2 = 4 + 0.5 * 16 = 12
        rng = np.random.default_rng(2)
        draws = [sample_nb2(4.0, 0.5, rng) for _ in range(100_000)]
        assert np.var(draws) == pytest.approx(12.0, abs=1.0)
        assert np.mean(draws) == pytest.approx(4.0, abs=0.1)

    def test_tiny_mu_gives_zeros(self):
        rng = np.random.default_rng(3)
        draws = [sample_nb2(1e-9, 0.5, rng) for _ in range(1000)]
        assert sum(draws) == 0


def small_spec(seed=0, **overrides):
    kwargs = dict(
        n_regions=10,
        features=[FeatureSpec("f1", 0, 2)],
        coefficients={"FR": [0.2, 0.4], "MD": [1.0, 0.1]},
        alpha={"FR": 0.5, "MD": 0.2},
        period_kind="weekly",
        n_periods=8,
        seed=seed,
    )
    kwargs.update(overrides)
    return ScenarioSpec(**kwargs)


class TestGenerate:
    def test_grand_mean_with_intercept_only(self):
        spec = ScenarioSpec(
            n_regions=100,
            features=[],
            coefficients={"FR": [np.log(2.0)]},
            alpha={"FR": 0.3},
            period_kind="weekly",
            n_periods=10,
            seed=7,
        )
        panel, _, _, _ = generate(spec)
        counts = [o.count_y for o in panel.observations]
        assert len(counts) == 1000
        assert np.mean(counts) == pytest.approx(2.0, abs=0.15)

    def test_doubled_exposure_doubles_counts(self):
        base, _, _, _ = generate(small_spec(seed=9))
        doubled, _, _, _ = generate(small_spec(seed=9, exposure_t=2.0))
        assert sum(o.count_y for o in doubled.observations) > 1.5 * sum(
            o.count_y for o in base.observations
        )

    def test_same_spec_same_output(self):
        a, ev_a, feat_a, _ = generate(small_spec(seed=4))
        b, ev_b, feat_b, _ = generate(small_spec(seed=4))
        assert [(o.region_id, o.event_type, o.count_y) for o in a.observations] == [
            (o.region_id, o.event_type, o.count_y) for o in b.observations
        ]
        assert [(e.event_id, e.dispatch_time) for e in ev_a] == [
            (e.event_id, e.dispatch_time) for e in ev_b
        ]
        np.testing.assert_array_equal(feat_a.values, feat_b.values)

    def test_mean_variance_match_model_within_3se(self):
        spec = ScenarioSpec(
            n_regions=2000,
            features=[],
            coefficients={"FR": [1.0]},
            alpha={"FR": 0.5},
            period_kind="weekly",
            n_periods=1,
            seed=6,
        )
        panel, _, _, _ = generate(spec)
        y = np.array([o.count_y for o in panel.observations], dtype=float)
        mu = np.e
        var = mu + 0.5 * mu * mu
        se_mean = np.sqrt(var / len(y))
        assert abs(y.mean() - mu) < 3 * se_mean
        # variance of the sample variance, normal-ish approximation via 4th moment
        m4 = np.mean((y - y.mean()) ** 4)
        se_var = np.sqrt((m4 - var**2) / len(y))
        assert abs(y.var() - var) < 3 * se_var

    def test_aggregate_round_trip(self):
        from datetime import timedelta

        panel, events, _, _ = generate(small_spec(seed=11))
        rebuilt = aggregate(
            events,
            {o.region_id for o in panel.observations},
            "weekly",
            (panel.span[0], panel.span[1] + timedelta(days=7)),
            ["FR", "MD"],
        )
        want = {
            (o.region_id, o.period_start, o.event_type): o.count_y for o in panel.observations
        }
        got = {
            (o.region_id, o.period_start, o.event_type): o.count_y for o in rebuilt.observations
        }
        assert want == got

    def test_csv_loop_through_ingest(self, tmp_path):
        panel, events, features, truth = generate(small_spec(seed=12))
        write_events_csv(events, tmp_path / "events.csv", metadata=["fixture"])
        from eventrisk.ingest import write_feature_table

        write_feature_table(features, tmp_path / "features.csv")
        parsed = parse_events(tmp_path / "events.csv")
        assert not parsed.errors
        assert len(parsed.records) == len(events)
        table = parse_feature_table(tmp_path / "features.csv")
        np.testing.assert_array_equal(table.values, features.values)
        doc = Truth.from_json(truth.to_json())
        assert doc.coefficients == truth.coefficients
        assert doc.alpha == truth.alpha
