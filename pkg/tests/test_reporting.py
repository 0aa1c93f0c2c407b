"""Reports: duration curves, histograms, deterministic SVG emission."""
import csv

import numpy as np
import pytest

from gridarb.reporting import (build_bundle, emit_reports,
                               make_duration_curve, make_profit_histogram)
from gridarb.simulation import CampaignSpec, CampaignResult, run_year


def test_duration_curve_constant():
    curve = make_duration_curve([30.0] * 10)
    assert curve.price == pytest.approx([30.0] * 10)
    assert (np.diff(curve.price) <= 0).all()
    assert 0.0 <= curve.fraction[0] and curve.fraction[-1] <= 1.0


def test_duration_curve_sorts_descending():
    curve = make_duration_curve([10.0, 50.0, 30.0])
    assert curve.price == pytest.approx([50.0, 30.0, 10.0])


def test_duration_curve_empty_rejected():
    with pytest.raises(ValueError):
        make_duration_curve([])


def test_duration_curve_at_fraction():
    curve = make_duration_curve(np.arange(100.0))
    assert curve.at_fraction(0.0) == pytest.approx(99.0)
    assert curve.at_fraction(0.999) == pytest.approx(0.0)


def test_histogram_all_zero():
    hist = make_profit_histogram(np.zeros(7), bins=5)
    assert hist.counts.sum() == 7
    assert (hist.counts > 0).sum() == 1
    assert hist.counts[0] == 0 and hist.counts[-1] == 0


def test_histogram_under_overflow():
    hist = make_profit_histogram([-5.0, 1.0, 2.0, 9.0], bins=4, lo=0.0,
                                 hi=4.0)
    assert hist.counts[0] == 1        # underflow
    assert hist.counts[-1] == 1       # overflow
    assert hist.counts.sum() == 4


def test_histogram_counts_sum():
    rng = np.random.default_rng(7)
    profits = rng.normal(size=100)
    hist = make_profit_histogram(profits, bins=12)
    assert hist.counts.sum() == 100


def test_histogram_rejects_bad_bins():
    with pytest.raises(ValueError):
        make_profit_histogram([1.0], bins=0)


@pytest.fixture(scope="module")
def small_campaign():
    return run_year(CampaignSpec(mode="pc", days=2, horizon=6,
                                 line_scale=1.5))


def test_bundle_contents(small_campaign):
    bundle = build_bundle(small_campaign)
    key = ("pc", "base")
    assert key in bundle.duration_curves
    assert bundle.histograms[key].counts.sum() == 2
    assert len(bundle.snapshot[key]) == 12  # 2 days x 6 hours


def test_emit_reports(tmp_path, small_campaign):
    written = emit_reports(small_campaign, tmp_path / "rep")
    names = {p.name for p in written}
    assert "duration_curve.svg" in names
    assert "profit_histogram.svg" in names
    assert "duration_curve.csv" in names
    svg = (tmp_path / "rep" / "duration_curve.svg").read_text()
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")

    # refusing to overwrite without force
    with pytest.raises(FileExistsError):
        emit_reports(small_campaign, tmp_path / "rep")
    # byte-identical when regenerated
    emit_reports(small_campaign, tmp_path / "rep", force=True)
    assert (tmp_path / "rep" / "duration_curve.svg").read_text() == svg


def test_emitted_csv_roundtrips(tmp_path, small_campaign):
    emit_reports(small_campaign, tmp_path / "rep")
    curve = build_bundle(small_campaign).duration_curves[("pc", "base")]
    with (tmp_path / "rep" / "duration_curve.csv").open() as fh:
        rows = [r for r in csv.DictReader(fh)
                if (r["mode"], r["scenario"]) == ("pc", "base")]
    assert [float(r["price"]) for r in rows] == pytest.approx(curve.price)
    assert [float(r["fraction"]) for r in rows] == pytest.approx(curve.fraction)


def test_empty_campaign_emits_nothing(tmp_path):
    spec = CampaignSpec(mode="pc", days=1, horizon=6)
    empty = CampaignResult(spec=spec, records=(), storage_bus_by_scenario={})
    assert emit_reports(empty, tmp_path / "rep") == []
