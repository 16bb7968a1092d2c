"""Jenks natural breaks against the brute-force oracle, plus tier assignment."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eventrisk import errors
from eventrisk.classify import (
    brute_force_breaks,
    classify_regions,
    jenks_breaks,
    partition_cost,
)


class TestJenksBreaks:
    def test_two_obvious_clusters(self):
        breaks = jenks_breaks([1, 2, 3, 100, 101, 102], k=2)
        assert breaks == [3.0]

    def test_each_value_its_own_class(self):
        breaks = jenks_breaks([5.0, 1.0, 9.0], k=3)
        assert breaks == [1.0, 5.0]

    def test_all_equal_tie_rule(self):
        # equal-cost partitions resolve to the earliest cut
        breaks = jenks_breaks([4.0, 4.0, 4.0, 4.0], k=2)
        assert breaks == [4.0]
        assert partition_cost([4.0] * 4, breaks) == 0.0

    def test_too_few_values(self):
        with pytest.raises(errors.TooFewValues):
            jenks_breaks([1.0, 2.0], k=3)

    def test_matches_brute_force_on_random_instances(self):
        rng = np.random.default_rng(99)
        for trial in range(200):
            n = int(rng.integers(4, 13))
            k = int(rng.integers(2, min(n, 4) + 1))
            values = rng.uniform(0, 50, n)
            got = jenks_breaks(values, k)
            _, best_cost = brute_force_breaks(values, k)
            assert partition_cost(values, got) == pytest.approx(best_cost, abs=1e-9)

    def test_tie_breaking_matches_brute_force(self):
        # duplicated values create cost ties; both sides prefer earliest cuts
        rng = np.random.default_rng(7)
        for trial in range(50):
            values = rng.integers(0, 4, 8).astype(float)
            got = jenks_breaks(values, 3)
            want, _ = brute_force_breaks(values, 3)
            assert got == want

    @given(st.lists(st.floats(0, 1000), min_size=4, max_size=12), st.integers(2, 4))
    @settings(max_examples=80, deadline=None)
    def test_optimal_cost_property(self, values, k):
        if len(values) < k:
            return
        got = jenks_breaks(values, k)
        _, best = brute_force_breaks(values, k)
        assert partition_cost(values, got) <= best + 1e-9 * (1 + best)


class TestClassifyRegions:
    def test_one_region_per_class(self):
        result = classify_regions({"a": 1.0, "b": 2.0, "c": 10.0, "d": 100.0}, k=4)
        assert result.label_of("a") == "Low"
        assert result.label_of("b") == "Medium"
        assert result.label_of("c") == "High"
        assert result.label_of("d") == "Severe"

    def test_label_monotone_in_value(self):
        # fixture mirroring published weekly tiers: the top-rate regions are
        # Severe and labels never decrease as predicted rates increase
        rates = {"n1010": 26.0, "n1090": 24.6, "n1020": 11.0, "n3240": 10.7,
                 "q1": 0.5, "q2": 2.0, "q3": 4.5, "q4": 7.0, "q5": 1.2}
        result = classify_regions(rates, k=4)
        ordered = sorted(rates, key=rates.get)
        classes = [result.assignment[r] for r in ordered]
        assert classes == sorted(classes)
        assert result.label_of("n1010") == "Severe"
        assert result.label_of("n1090") == "Severe"

    def test_assignment_matches_brute_force_partition(self):
        rng = np.random.default_rng(13)
        for trial in range(25):
            n = int(rng.integers(6, 13))
            values = {f"r{i}": float(v) for i, v in enumerate(rng.uniform(0, 20, n))}
            result = classify_regions(values, k=3, labels=("Low", "Medium", "High"))
            want, _ = brute_force_breaks(list(values.values()), 3)
            got_classes = {
                rid: int(np.searchsorted(want, v, side="left")) for rid, v in values.items()
            }
            assert result.assignment == got_classes

    def test_shift_invariance_of_membership(self):
        rng = np.random.default_rng(17)
        values = {f"r{i}": float(v) for i, v in enumerate(rng.uniform(0, 30, 15))}
        base = classify_regions(values, k=4)
        shifted = classify_regions({r: v + 123.25 for r, v in values.items()}, k=4)
        assert base.assignment == shifted.assignment

    def test_too_few_regions(self):
        with pytest.raises(errors.TooFewValues):
            classify_regions({"a": 1.0, "b": 2.0}, k=4)

    def test_csv_export(self, tmp_path):
        result = classify_regions({"a": 1.0, "b": 2.0, "c": 10.0, "d": 100.0}, k=4)
        path = tmp_path / "classes.csv"
        result.to_csv(path, metadata=["fixture"])
        lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
        assert lines[0] == "region_id,value,class"
        assert "d,100.0,Severe" in lines
