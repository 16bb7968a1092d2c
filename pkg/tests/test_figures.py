"""Chart rendering smoke tests: files exist, are PNGs, and are stable."""

import numpy as np

from eventrisk.classify import classify_regions
from eventrisk.describe import CorrelationMatrix, DescriptiveRow, residual_ecdf
from eventrisk.figures import (
    save_breaks_chart,
    save_correlation_heatmap,
    save_describe_chart,
    save_ecdf_chart,
    save_importance_chart,
)
from eventrisk.importance import ImportanceReport

PNG_MAGIC = b"\x89PNG"


def is_png(path):
    return path.read_bytes()[:4] == PNG_MAGIC


def test_describe_chart(tmp_path):
    rows = [
        DescriptiveRow("FR", "weekly", 26.6, 6.4, 0.24, 52),
        DescriptiveRow("MD", "weekly", 613.0, 63.4, 0.10, 52),
        DescriptiveRow("FR", "monthly", 116.3, 15.3, 0.13, 12),
    ]
    out = tmp_path / "cv.png"
    save_describe_chart(rows, out)
    assert is_png(out)


def test_correlation_heatmap(tmp_path):
    cm = CorrelationMatrix(
        ["income", "food", "retail"],
        ["FR", "MD"],
        np.array([[0.5, 0.8], [np.nan, 0.3], [-0.2, 0.1]]),
    )
    out = tmp_path / "heat.png"
    save_correlation_heatmap(cm, out)
    assert is_png(out)


def test_importance_chart(tmp_path):
    report = ImportanceReport(
        ranked=[("food", 0.6), ("income", 0.3), ("noise", 0.0)],
        threshold=0.05,
        selected=["food", "income"],
    )
    out = tmp_path / "imp.png"
    save_importance_chart(report, out, title="FR")
    assert is_png(out)


def test_ecdf_chart(tmp_path):
    ecdf = residual_ecdf([0, 0, 1, 1, 1, 2, 3, 5])
    out = tmp_path / "ecdf.png"
    save_ecdf_chart(ecdf, out, title="weekly")
    assert is_png(out)


def test_breaks_chart(tmp_path):
    rng = np.random.default_rng(1)
    values = {f"r{i}": float(v) for i, v in enumerate(rng.gamma(2.0, 3.0, 40))}
    result = classify_regions(values, k=4)
    out = tmp_path / "breaks.png"
    save_breaks_chart(result, out)
    assert is_png(out)


def test_render_twice_identical_bytes(tmp_path):
    ecdf = residual_ecdf([0, 1, 2, 2, 4])
    a, b = tmp_path / "a.png", tmp_path / "b.png"
    save_ecdf_chart(ecdf, a)
    save_ecdf_chart(ecdf, b)
    assert a.read_bytes() == b.read_bytes()
