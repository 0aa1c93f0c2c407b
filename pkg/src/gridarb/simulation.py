"""Multi-day experiment campaigns: year runs, congestion and siting sweeps.

Days are decoupled by the terminal state-of-charge equality, so each day is
an independent work item; campaigns never abort on a single failed day.
Results persist as a directory (summary.json, daily.csv, lmp_<bus>.csv)
whose CSVs round-trip exactly.
"""
from __future__ import annotations

import csv
import json
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace as dc_replace

import numpy as np

from .market import (ClearingConfig, clear_market_pc, social_welfare,
                     storage_profit)
from .model import MarketInstance, derate_local_lines
from .mpec import BigMConfig, MpecConfig, solve_strategic
from .rts24 import DEFAULT_STORAGE_BUS, build_rts24

__all__ = ["CampaignSpec", "CampaignResult", "DayRecord", "run_day",
           "run_year", "run_congestion_sweep", "run_siting_sweep",
           "save_campaign", "load_campaign"]

log = logging.getLogger(__name__)

MODES = ("pc", "mpec", "both")
DEFAULT_DERATE_LEVELS = (1.0, 0.9, 0.8, 0.7, 0.6, 0.5)


@dataclass(frozen=True)
class CampaignSpec:
    mode: str = "both"
    days: int = 365
    line_scale: float = 1.5
    derate_levels: tuple[float, ...] = DEFAULT_DERATE_LEVELS
    candidate_buses: tuple[int, ...] = ()
    storage_bus: int = DEFAULT_STORAGE_BUS
    wind_seed: int = 0
    horizon: int = 24
    rel_gap: float = 5e-5
    big_m: float = 2000.0
    price_cap: float = 2000.0
    time_limit: float | None = None
    workers: int = 1

    def check(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.days < 1:
            raise ValueError("days must be >= 1")
        for f in self.derate_levels:
            if not 0.0 < f <= 1.0:
                raise ValueError("derate factors must lie in (0, 1]")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    @property
    def modes(self) -> tuple[str, ...]:
        return ("pc", "mpec") if self.mode == "both" else (self.mode,)


@dataclass(frozen=True)
class DayRecord:
    day: int
    mode: str                   # "pc" | "mpec"
    scenario: str
    ok: bool
    profit: float
    welfare: float
    gap: float
    seconds: float
    flagged: bool               # gap above the configured tolerance
    error: str = ""
    lmp_storage_bus: tuple[float, ...] = ()
    # full per-day solution objects, kept in memory only (not persisted)
    solution: object = field(default=None, compare=False, repr=False)
    instance: object = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class CampaignResult:
    spec: CampaignSpec
    records: tuple[DayRecord, ...]
    storage_bus_by_scenario: dict

    def aggregates(self) -> dict:
        """Annual totals per (mode, scenario) over the successful days."""
        out: dict = {}
        for r in self.records:
            key = f"{r.mode}/{r.scenario}"
            agg = out.setdefault(key, {
                "mode": r.mode, "scenario": r.scenario, "profit": 0.0,
                "welfare": 0.0, "days_ok": 0, "days_failed": 0,
                "days_flagged": 0, "seconds": 0.0,
            })
            if r.ok:
                agg["profit"] += r.profit
                agg["welfare"] += r.welfare
                agg["days_ok"] += 1
                agg["days_flagged"] += int(r.flagged)
            else:
                agg["days_failed"] += 1
            agg["seconds"] += r.seconds
        return out

    def failures(self) -> tuple[DayRecord, ...]:
        return tuple(r for r in self.records if not r.ok)

    def lmp_series(self, mode: str, scenario: str) -> np.ndarray:
        """Hour-of-year LMP series at the scenario's storage bus."""
        chunks = [r.lmp_storage_bus for r in self.records
                  if r.ok and r.mode == mode and r.scenario == scenario]
        return np.concatenate([np.asarray(c) for c in chunks]) \
            if chunks else np.empty(0)

    def daily_profits(self, mode: str, scenario: str) -> np.ndarray:
        return np.array([r.profit for r in self.records
                         if r.ok and r.mode == mode and r.scenario == scenario])


# ---------------------------------------------------------------------------
# single-day solves

def run_day(instance: MarketInstance, mode: str, spec: CampaignSpec,
            day: int = 0, scenario: str = "base") -> DayRecord:
    """Solve one independent day; failures are captured, not raised."""
    if mode not in ("pc", "mpec"):
        raise ValueError("mode must be 'pc' or 'mpec'")
    bus_ids = [b.id for b in instance.buses]
    sbus = instance.storage_units[0].bus if instance.storage_units else bus_ids[0]
    k = bus_ids.index(sbus)
    t0 = time.perf_counter()
    try:
        if mode == "pc":
            sol = clear_market_pc(
                instance, ClearingConfig(rel_gap=spec.rel_gap,
                                         time_limit=spec.time_limit))
            profit = float(storage_profit(sol, instance).sum())
            welfare = social_welfare(instance, sol)
            gap = sol.gap
            lmp = sol.lmp[k]
        else:
            ss = solve_strategic(instance, MpecConfig(
                rel_gap=spec.rel_gap,
                big_m=BigMConfig(dual_default=spec.big_m,
                                 price_cap=spec.price_cap),
                time_limit=spec.time_limit))
            sol = ss
            profit = ss.profit_expost
            welfare = social_welfare(instance, ss.cleared)
            gap = ss.gap
            lmp = ss.cleared.lmp[k]
    except Exception as exc:  # day marked failed, campaign continues
        log.warning("day %d %s/%s failed: %s", day, mode, scenario, exc)
        return DayRecord(day=day, mode=mode, scenario=scenario, ok=False,
                         profit=0.0, welfare=0.0, gap=float("nan"),
                         seconds=time.perf_counter() - t0, flagged=True,
                         error=str(exc))
    seconds = time.perf_counter() - t0
    return DayRecord(day=day, mode=mode, scenario=scenario, ok=True,
                     profit=profit, welfare=welfare, gap=gap,
                     seconds=seconds, flagged=gap > spec.rel_gap + 1e-12,
                     lmp_storage_bus=tuple(float(v) for v in lmp),
                     solution=sol, instance=instance)


def _day_instance(spec: CampaignSpec, day: int, derate: float = 1.0,
                  storage_bus: int | None = None) -> MarketInstance:
    bus = spec.storage_bus if storage_bus is None else storage_bus
    instance = build_rts24(line_scale=spec.line_scale,
                           wind_seed=spec.wind_seed, day=day,
                           horizon=spec.horizon, storage_bus=bus)
    if derate < 1.0:
        instance = derate_local_lines(instance, bus, derate)
    return instance


def _solve_item(item) -> DayRecord:
    spec, day, mode, scenario, derate, storage_bus = item
    instance = _day_instance(spec, day, derate, storage_bus)
    return run_day(instance, mode, spec, day=day, scenario=scenario)


def _run_items(spec: CampaignSpec, items: list) -> tuple[DayRecord, ...]:
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            records = list(pool.map(_solve_item, items))
    else:
        records = [_solve_item(it) for it in items]
    # deterministic order regardless of execution interleaving
    records.sort(key=lambda r: (r.scenario, r.mode, r.day))
    return tuple(records)


# ---------------------------------------------------------------------------
# campaigns

def run_year(spec: CampaignSpec) -> CampaignResult:
    """Day-by-day campaign at the baseline line scale, no derating."""
    spec.check()
    items = [(spec, day, mode, "base", 1.0, None)
             for day in range(spec.days) for mode in spec.modes]
    return CampaignResult(spec=spec, records=_run_items(spec, items),
                          storage_bus_by_scenario={"base": spec.storage_bus})


def run_congestion_sweep(spec: CampaignSpec) -> CampaignResult:
    """Derate the lines incident to the storage bus, one level at a time."""
    spec.check()
    items = []
    buses = {}
    for level in spec.derate_levels:
        scenario = f"derate={level:g}"
        buses[scenario] = spec.storage_bus
        for day in range(spec.days):
            for mode in spec.modes:
                items.append((spec, day, mode, scenario, level, None))
    return CampaignResult(spec=spec, records=_run_items(spec, items),
                          storage_bus_by_scenario=buses)


def run_siting_sweep(spec: CampaignSpec, derate: float = 0.5) -> CampaignResult:
    """Relocate storage to each candidate bus and derate its local lines."""
    spec.check()
    if not spec.candidate_buses:
        raise ValueError("candidate_buses must be nonempty for a siting sweep")
    items = []
    buses = {}
    for bus in spec.candidate_buses:
        scenario = f"bus={bus}"
        buses[scenario] = bus
        for day in range(spec.days):
            for mode in spec.modes:
                items.append((spec, day, mode, scenario, derate, bus))
    return CampaignResult(spec=spec, records=_run_items(spec, items),
                          storage_bus_by_scenario=buses)


# ---------------------------------------------------------------------------
# persistence

def save_campaign(result: CampaignResult, outdir, force: bool = False) -> None:
    """Write summary.json, daily.csv and per-bus LMP series to a directory."""
    from pathlib import Path
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    targets = [out / "summary.json", out / "daily.csv"]
    for p in targets:
        if p.exists() and not force:
            raise FileExistsError(f"{p} exists; pass force=True to overwrite")

    spec = result.spec
    summary = {
        "spec": {
            "mode": spec.mode, "days": spec.days,
            "line_scale": spec.line_scale,
            "derate_levels": list(spec.derate_levels),
            "candidate_buses": list(spec.candidate_buses),
            "storage_bus": spec.storage_bus, "wind_seed": spec.wind_seed,
            "horizon": spec.horizon, "rel_gap": spec.rel_gap,
            "big_m": spec.big_m, "price_cap": spec.price_cap,
            "workers": spec.workers,
        },
        "storage_bus_by_scenario": result.storage_bus_by_scenario,
        "aggregates": result.aggregates(),
        "failed_days": [
            {"day": r.day, "mode": r.mode, "scenario": r.scenario,
             "error": r.error} for r in result.failures()
        ],
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2,
                                                 sort_keys=True) + "\n")

    with (out / "daily.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["day", "mode", "scenario", "profit", "welfare", "gap",
                    "seconds", "ok", "flagged"])
        for r in result.records:
            w.writerow([r.day, r.mode, r.scenario, repr(r.profit),
                        repr(r.welfare), repr(r.gap), repr(r.seconds),
                        int(r.ok), int(r.flagged)])

    # hour-of-year LMP series at each scenario's storage bus
    by_bus: dict[int, list] = {}
    for scenario, bus in result.storage_bus_by_scenario.items():
        for mode in spec.modes:
            series = result.lmp_series(mode, scenario)
            if series.size:
                by_bus.setdefault(bus, []).append((mode, scenario, series))
    for bus, entries in sorted(by_bus.items()):
        path = out / f"lmp_{bus}.csv"
        if path.exists() and not force:
            raise FileExistsError(f"{path} exists; pass force=True to overwrite")
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["mode", "scenario", "hour", "price"])
            for mode, scenario, series in entries:
                for h, price in enumerate(series):
                    w.writerow([mode, scenario, h, repr(float(price))])


def load_campaign(outdir) -> CampaignResult:
    """Rebuild a slim CampaignResult (no solution objects) from disk."""
    from pathlib import Path
    out = Path(outdir)
    summary = json.loads((out / "summary.json").read_text())
    s = summary["spec"]
    spec = CampaignSpec(
        mode=s["mode"], days=s["days"], line_scale=s["line_scale"],
        derate_levels=tuple(s["derate_levels"]),
        candidate_buses=tuple(s["candidate_buses"]),
        storage_bus=s["storage_bus"], wind_seed=s["wind_seed"],
        horizon=s["horizon"], rel_gap=s["rel_gap"], big_m=s["big_m"],
        price_cap=s["price_cap"], workers=s["workers"],
    )
    buses = {k: int(v) for k, v in summary["storage_bus_by_scenario"].items()}

    lmp: dict[tuple[str, str], list[float]] = {}
    for path in sorted(out.glob("lmp_*.csv")):
        with path.open(newline="") as fh:
            for row in csv.DictReader(fh):
                lmp.setdefault((row["mode"], row["scenario"]), []).append(
                    float(row["price"]))

    records = []
    horizon = spec.horizon
    counter: dict[tuple[str, str], int] = {}
    with (out / "daily.csv").open(newline="") as fh:
        for row in csv.DictReader(fh):
            key = (row["mode"], row["scenario"])
            ok = bool(int(row["ok"]))
            chunk: tuple[float, ...] = ()
            if ok and key in lmp:
                i = counter.get(key, 0)
                chunk = tuple(lmp[key][i * horizon:(i + 1) * horizon])
                counter[key] = i + 1
            records.append(DayRecord(
                day=int(row["day"]), mode=row["mode"],
                scenario=row["scenario"], ok=ok,
                profit=float(row["profit"]), welfare=float(row["welfare"]),
                gap=float(row["gap"]), seconds=float(row["seconds"]),
                flagged=bool(int(row["flagged"])), lmp_storage_bus=chunk))
    return CampaignResult(spec=spec, records=tuple(records),
                          storage_bus_by_scenario=buses)
