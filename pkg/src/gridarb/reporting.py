"""Report generation: duration curves, histograms and self-contained SVGs.

Plots are rendered by hand (axes, polylines, bars) with fixed float
formatting so that identical data always produces byte-identical files.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .simulation import CampaignResult

__all__ = ["DurationCurve", "ProfitHistogram", "ReportBundle",
           "make_duration_curve", "make_profit_histogram", "emit_reports"]


@dataclass(frozen=True)
class DurationCurve:
    """Prices sorted descending against the fraction of hours exceeded."""
    fraction: np.ndarray   # in [0, 1], ascending
    price: np.ndarray      # non-increasing

    def at_fraction(self, f: float) -> float:
        """Price at a given exceedance fraction (step interpolation)."""
        idx = min(int(f * self.price.size), self.price.size - 1)
        return float(self.price[idx])


@dataclass(frozen=True)
class ProfitHistogram:
    edges: np.ndarray      # len == bins + 1, interior bin edges
    counts: np.ndarray     # len == bins + 2: underflow, bins, overflow


@dataclass(frozen=True)
class ReportBundle:
    duration_curves: dict      # (mode, scenario) -> DurationCurve
    histograms: dict           # (mode, scenario) -> ProfitHistogram
    snapshot: dict             # (mode, scenario) -> first-3-days LMP series


def make_duration_curve(series) -> DurationCurve:
    values = np.asarray(series, float).ravel()
    if values.size == 0:
        raise ValueError("duration curve needs a nonempty series")
    price = np.sort(values)[::-1]
    n = price.size
    fraction = (np.arange(n) + 0.5) / n
    return DurationCurve(fraction=fraction, price=price)


def make_profit_histogram(profits, bins: int = 20,
                          lo: float | None = None,
                          hi: float | None = None) -> ProfitHistogram:
    if bins < 1:
        raise ValueError("bins must be >= 1")
    values = np.asarray(profits, float).ravel()
    if values.size == 0:
        edges = np.linspace(0.0, 1.0, bins + 1)
        return ProfitHistogram(edges=edges,
                               counts=np.zeros(bins + 2, dtype=int))
    if lo is None:
        lo = float(values.min())
    if hi is None:
        hi = float(values.max())
    if hi <= lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    inner, _ = np.histogram(np.clip(values, lo, hi), bins=edges)
    under = int(np.sum(values < lo))
    over = int(np.sum(values > hi))
    # clipped values land in the outermost inner bins; move true outliers out
    inner = inner.copy()
    inner[0] -= under
    inner[-1] -= over
    counts = np.concatenate([[under], inner, [over]]).astype(int)
    return ProfitHistogram(edges=edges, counts=counts)


def build_bundle(result: CampaignResult, snapshot_days: int = 3) -> ReportBundle:
    curves = {}
    hists = {}
    snaps = {}
    spec = result.spec
    for scenario in result.storage_bus_by_scenario:
        for mode in spec.modes:
            series = result.lmp_series(mode, scenario)
            if series.size == 0:
                continue
            key = (mode, scenario)
            curves[key] = make_duration_curve(series)
            hists[key] = make_profit_histogram(
                result.daily_profits(mode, scenario))
            snaps[key] = series[: snapshot_days * spec.horizon]
    return ReportBundle(duration_curves=curves, histograms=hists,
                        snapshot=snaps)


# ---------------------------------------------------------------------------
# hand-rendered SVG

_W, _H = 640, 400
_ML, _MR, _MT, _MB = 60, 16, 24, 44
_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
            "#8c564b", "#17becf", "#7f7f7f")


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _ticks(lo: float, hi: float, n: int = 5):
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10.0 ** np.floor(np.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        step = mult * mag
        if step >= raw:
            break
    first = np.ceil(lo / step) * step
    ticks = []
    v = first
    while v <= hi + 1e-9 * step:
        ticks.append(0.0 if abs(v) < 1e-12 else float(v))
        v += step
    return ticks


class _SvgPlot:
    """Minimal line/bar chart writer with fixed formatting."""

    def __init__(self, title: str, xlabel: str, ylabel: str,
                 xlim, ylim):
        self.parts = []
        self.xlim = xlim
        self.ylim = ylim
        self.legend: list[tuple[str, str]] = []
        self.parts.append(
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" '
            f'height="{_H}" viewBox="0 0 {_W} {_H}">')
        self.parts.append(
            f'<rect width="{_W}" height="{_H}" fill="white"/>')
        self.parts.append(
            f'<text x="{_W // 2}" y="16" text-anchor="middle" '
            f'font-family="sans-serif" font-size="13">{title}</text>')
        self.parts.append(
            f'<text x="{_W // 2}" y="{_H - 8}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="12">{xlabel}</text>')
        self.parts.append(
            f'<text x="14" y="{_H // 2}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="12" '
            f'transform="rotate(-90 14 {_H // 2})">{ylabel}</text>')
        self._axes()

    def _sx(self, x: float) -> float:
        lo, hi = self.xlim
        return _ML + (x - lo) / (hi - lo) * (_W - _ML - _MR)

    def _sy(self, y: float) -> float:
        lo, hi = self.ylim
        return _H - _MB - (y - lo) / (hi - lo) * (_H - _MT - _MB)

    def _axes(self):
        x0, y0 = _ML, _H - _MB
        x1, y1 = _W - _MR, _MT
        self.parts.append(
            f'<rect x="{x0}" y="{y1}" width="{x1 - x0}" '
            f'height="{y0 - y1}" fill="none" stroke="black"/>')
        for v in _ticks(*self.xlim):
            sx = self._sx(v)
            self.parts.append(
                f'<line x1="{_fmt(sx)}" y1="{y0}" x2="{_fmt(sx)}" '
                f'y2="{y0 + 4}" stroke="black"/>')
            self.parts.append(
                f'<text x="{_fmt(sx)}" y="{y0 + 16}" text-anchor="middle" '
                f'font-family="sans-serif" font-size="10">{v:g}</text>')
        for v in _ticks(*self.ylim):
            sy = self._sy(v)
            self.parts.append(
                f'<line x1="{x0 - 4}" y1="{_fmt(sy)}" x2="{x0}" '
                f'y2="{_fmt(sy)}" stroke="black"/>')
            self.parts.append(
                f'<text x="{x0 - 6}" y="{_fmt(sy + 3)}" text-anchor="end" '
                f'font-family="sans-serif" font-size="10">{v:g}</text>')

    def polyline(self, xs, ys, color: str, label: str = ""):
        pts = " ".join(f"{_fmt(self._sx(x))},{_fmt(self._sy(y))}"
                       for x, y in zip(xs, ys))
        self.parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" '
            f'stroke-width="1.5"/>')
        if label:
            self.legend.append((label, color))

    def bars(self, edges, heights, color: str, label: str = ""):
        for k in range(len(heights)):
            x0, x1 = self._sx(edges[k]), self._sx(edges[k + 1])
            y0 = self._sy(0.0)
            y1 = self._sy(heights[k])
            self.parts.append(
                f'<rect x="{_fmt(x0)}" y="{_fmt(min(y0, y1))}" '
                f'width="{_fmt(abs(x1 - x0))}" '
                f'height="{_fmt(abs(y0 - y1))}" fill="{color}" '
                f'fill-opacity="0.55" stroke="black" stroke-width="0.5"/>')
        if label:
            self.legend.append((label, color))

    def render(self) -> str:
        for k, (label, color) in enumerate(self.legend):
            y = _MT + 14 + 14 * k
            self.parts.append(
                f'<line x1="{_W - _MR - 130}" y1="{y - 4}" '
                f'x2="{_W - _MR - 110}" y2="{y - 4}" stroke="{color}" '
                f'stroke-width="2"/>')
            self.parts.append(
                f'<text x="{_W - _MR - 104}" y="{y}" '
                f'font-family="sans-serif" font-size="11">{label}</text>')
        return "\n".join(self.parts) + "\n</svg>\n"


def _limits(arrays):
    lo = min(float(np.min(a)) for a in arrays)
    hi = max(float(np.max(a)) for a in arrays)
    if hi <= lo:
        hi = lo + 1.0
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


# ---------------------------------------------------------------------------
# emission

def _write(path: Path, text: str, force: bool) -> None:
    if path.exists() and not force:
        raise FileExistsError(f"{path} exists; pass force to overwrite")
    try:
        path.write_text(text)
    except OSError as exc:
        raise OSError(f"cannot write report file {path}: {exc}") from exc


def emit_reports(result: CampaignResult, outdir, force: bool = False) -> list:
    """Write duration-curve/histogram/snapshot SVGs and their CSVs.

    Returns the list of written paths.  An empty campaign produces no plot
    files and is not an error.
    """
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    bundle = build_bundle(result)
    written: list[Path] = []
    if not bundle.duration_curves:
        return written
    keys = sorted(bundle.duration_curves)

    # duration curves, one figure across scenarios/modes
    plot = _SvgPlot("LMP duration curve", "fraction of hours",
                    "price [$/MWh]", (0.0, 1.0),
                    _limits([bundle.duration_curves[k].price for k in keys]))
    for i, key in enumerate(keys):
        curve = bundle.duration_curves[key]
        plot.polyline(curve.fraction, curve.price,
                      _PALETTE[i % len(_PALETTE)], label="/".join(key))
    path = out / "duration_curve.svg"
    _write(path, plot.render(), force)
    written.append(path)

    csv_path = out / "duration_curve.csv"
    if csv_path.exists() and not force:
        raise FileExistsError(f"{csv_path} exists; pass force to overwrite")
    with csv_path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mode", "scenario", "fraction", "price"])
        for key in keys:
            curve = bundle.duration_curves[key]
            for f, p in zip(curve.fraction, curve.price):
                w.writerow([key[0], key[1], repr(float(f)), repr(float(p))])
    written.append(csv_path)

    # daily profit histogram
    all_edges = [bundle.histograms[k].edges for k in keys]
    plot = _SvgPlot("Daily storage profit histogram", "profit [$/day]",
                    "days", _limits(all_edges),
                    (0.0, max(1.0, max(float(bundle.histograms[k].counts.max())
                                       for k in keys)) * 1.1))
    for i, key in enumerate(keys):
        hist = bundle.histograms[key]
        plot.bars(hist.edges, hist.counts[1:-1],
                  _PALETTE[i % len(_PALETTE)], label="/".join(key))
    path = out / "profit_histogram.svg"
    _write(path, plot.render(), force)
    written.append(path)

    csv_path = out / "profit_histogram.csv"
    if csv_path.exists() and not force:
        raise FileExistsError(f"{csv_path} exists; pass force to overwrite")
    with csv_path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mode", "scenario", "bin_lo", "bin_hi", "count"])
        for key in keys:
            hist = bundle.histograms[key]
            w.writerow([key[0], key[1], "-inf", repr(float(hist.edges[0])),
                        int(hist.counts[0])])
            for k in range(hist.edges.size - 1):
                w.writerow([key[0], key[1], repr(float(hist.edges[k])),
                            repr(float(hist.edges[k + 1])),
                            int(hist.counts[k + 1])])
            w.writerow([key[0], key[1], repr(float(hist.edges[-1])), "inf",
                        int(hist.counts[-1])])
    written.append(csv_path)

    # 3-day LMP snapshot
    snaps = {k: v for k, v in bundle.snapshot.items() if len(v)}
    if snaps:
        skeys = sorted(snaps)
        plot = _SvgPlot("LMP at the storage bus, first 3 days", "hour",
                        "price [$/MWh]",
                        (0.0, float(max(len(v) for v in snaps.values()) - 1)),
                        _limits(list(snaps.values())))
        for i, key in enumerate(skeys):
            series = np.asarray(snaps[key])
            plot.polyline(np.arange(series.size), series,
                          _PALETTE[i % len(_PALETTE)], label="/".join(key))
        path = out / "lmp_snapshot.svg"
        _write(path, plot.render(), force)
        written.append(path)

    # annual profit per scenario (congestion/siting sweep figure)
    agg = result.aggregates()
    scenarios = sorted({v["scenario"] for v in agg.values()})
    if len(scenarios) > 1:
        modes = sorted({v["mode"] for v in agg.values()})
        xs = np.arange(len(scenarios), dtype=float)
        series = {m: [agg.get(f"{m}/{s}", {"profit": 0.0})["profit"]
                      for s in scenarios] for m in modes}
        plot = _SvgPlot("Annual storage profit by scenario",
                        "scenario index", "profit [$]",
                        (-0.5, len(scenarios) - 0.5),
                        _limits(list(series.values()) + [[0.0]]))
        for i, m in enumerate(modes):
            plot.polyline(xs, series[m], _PALETTE[i % len(_PALETTE)], label=m)
        path = out / "profit_by_scenario.svg"
        _write(path, plot.render(), force)
        written.append(path)

        csv_path = out / "profit_by_scenario.csv"
        if csv_path.exists() and not force:
            raise FileExistsError(f"{csv_path} exists; pass force to overwrite")
        with csv_path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["mode", "scenario", "profit", "welfare"])
            for key in sorted(agg):
                v = agg[key]
                w.writerow([v["mode"], v["scenario"], repr(v["profit"]),
                            repr(v["welfare"])])
        written.append(csv_path)
    return written
