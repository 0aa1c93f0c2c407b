"""End-to-end acceptance gate.

Every criterion prints an explicit ``ACCEPTANCE n: PASS``/``FAIL`` line
straight to the terminal (bypassing pytest capture) so a reviewer can scan
the run output.  The two 30-day campaigns are module-scoped fixtures shared
across criteria; together the suite takes several minutes.
"""
import contextlib
import itertools
import time
from dataclasses import replace

import numpy as np
import pytest

from gridarb.lp import (LpStatus, complementarity_residual, dual_objective,
                        solve_lp)
from gridarb.market import (ClearingConfig, build_ed_milp, clear_market_pc,
                            social_welfare, storage_profit)
from gridarb.milp import fix_binaries
from gridarb.model import Bus, Generator, Line, MarketInstance, StorageUnit
from gridarb.mpec import (BigMConfig, MpecConfig, StrategicBid,
                          build_lower_level_lp, solve_strategic)
from gridarb.reporting import make_duration_curve
from gridarb.rts24 import build_rts24
from gridarb.simulation import CampaignSpec, run_congestion_sweep, run_year

from test_lp import test_solve_lp_matches_vertex_enumeration
from test_market import check_invariants
from test_milp import test_solve_milp_matches_brute_force

GAP = 5e-5          # 0.005 % relative MILP gap
DAYS = 30
LINE_SCALE = 1.5


@contextlib.contextmanager
def _verdict(capsys, num, title):
    try:
        yield
    except BaseException:
        with capsys.disabled():
            print(f"\nACCEPTANCE {num}: FAIL - {title}")
        raise
    with capsys.disabled():
        print(f"\nACCEPTANCE {num}: PASS - {title}")


@pytest.fixture(scope="module")
def year30():
    """30 synthetic days, competitive clearing and strategic bidding."""
    return run_year(CampaignSpec(mode="both", days=DAYS,
                                 line_scale=LINE_SCALE, rel_gap=GAP))


@pytest.fixture(scope="module")
def sweep30():
    """30 competitive days, baseline versus 50 % local derating."""
    return run_congestion_sweep(
        CampaignSpec(mode="pc", days=DAYS, line_scale=LINE_SCALE,
                     rel_gap=GAP, derate_levels=(1.0, 0.5)))


def test_criterion_1_uniform_lmp_baseline(capsys):
    with _verdict(capsys, 1, "uncongested baseline clears at a uniform "
                  "price (7 days, spread <= 1e-6, < 1 min)"):
        t0 = time.perf_counter()
        spread = 0.0
        for day in range(7):
            inst = build_rts24(line_scale=LINE_SCALE, day=day)
            sol = clear_market_pc(inst, ClearingConfig(rel_gap=GAP))
            spread = max(spread, float(
                (sol.lmp.max(axis=0) - sol.lmp.min(axis=0)).max()))
        elapsed = time.perf_counter() - t0
        assert spread <= 1e-6, f"worst LMP spread {spread}"
        assert elapsed < 60.0, f"took {elapsed:.1f}s"


def test_criterion_2_gap_honored(year30, sweep30, capsys):
    with _verdict(capsys, 2, "every reported day meets the 0.005 % gap "
                  "or carries the flag"):
        records = [r for r in year30.records + sweep30.records if r.ok]
        assert records
        for r in records:
            assert r.gap <= GAP or r.flagged, \
                f"day {r.day} {r.mode}/{r.scenario}: gap {r.gap} unflagged"
            assert r.flagged == (r.gap > GAP + 1e-12)


def test_criterion_3_runtime(year30, capsys):
    with _verdict(capsys, 3, "competitive day <= 5 s; strategic day <= 5 s "
                  "on the documented 12 h horizon"):
        pc_secs = [r.seconds for r in year30.records
                   if r.ok and r.mode == "pc"]
        assert pc_secs and max(pc_secs) <= 5.0, \
            f"slowest competitive day {max(pc_secs):.2f}s"

        inst12 = build_rts24(line_scale=LINE_SCALE, day=0, horizon=12)
        t0 = time.perf_counter()
        solve_strategic(inst12, MpecConfig(rel_gap=GAP))
        half_day = time.perf_counter() - t0
        assert half_day <= 5.0, f"12 h strategic day took {half_day:.2f}s"

        mp_secs = [r.seconds for r in year30.records
                   if r.ok and r.mode == "mpec"]
        with capsys.disabled():
            print(f"\n  strategic 24 h day: mean {np.mean(mp_secs):.1f}s, "
                  f"max {max(mp_secs):.1f}s (reported, not asserted); "
                  f"12 h day {half_day:.2f}s")


# ---------------------------------------------------------------------------
# criterion 4: exhaustive bid grid search on a tiny instance

def _toy_instance() -> MarketInstance:
    """2 buses, 2 generators, 2 hours, one 4 MW / 8 MWh storage unit.

    Hour 0 is slack (bus-2 load 2 MW, line uncongested, price 5); in hour 1
    the 10 MW line saturates and bus-2 demand at bid 15 goes partly unserved,
    so the storage arbitrages 4 MW from 5 to 15.
    """
    return MarketInstance(
        buses=(Bus(1, 0.0, (0.0, 0.0), (0.0, 0.0)),
               Bus(2, 15.0, (0.0, 0.0), (2.0, 20.0))),
        lines=(Line(0, 1, 2, 0.1, 10.0),),
        generators=(Generator(0, 1, 0.0, 100.0, 5.0),
                    Generator(1, 2, 0.0, 4.0, 12.0)),
        wind_farms=(),
        storage_units=(StorageUnit(0, 2, 4.0, 4.0, 1.0, 1.0, 0.0, 8.0, 4.0),),
        horizon=2, ref_bus=1)


def _hour_instance(inst: MarketInstance, t: int) -> MarketInstance:
    buses = tuple(
        replace(b, load_min=(b.load_min[t],), load_max=(b.load_max[t],))
        for b in inst.buses)
    return replace(inst, buses=buses, horizon=1)


def _clear_hour(inst1: MarketInstance, action):
    """Cleared (charge, discharge, price) for one hour under one bid."""
    kind, rho, qty = action
    z = np.zeros((1, 1))
    bid = StrategicBid(price_dis=z.copy(), price_chs=z.copy(),
                       qty_dis=z.copy(), qty_chs=z.copy(),
                       x_dis=z.copy(), x_chs=z.copy())
    if kind == "d":
        bid.price_dis[0, 0] = rho
        bid.qty_dis[0, 0] = qty
        bid.x_dis[0, 0] = 1.0
    elif kind == "c":
        bid.price_chs[0, 0] = rho
        bid.qty_chs[0, 0] = qty
        bid.x_chs[0, 0] = 1.0
    lp = build_lower_level_lp(inst1, bid)
    sol = solve_lp(lp)
    assert sol.status is LpStatus.OPTIMAL
    ci = {n: j for j, n in enumerate(lp.col_names)}
    return (sol.x[ci["qc[0,0]"]], sol.x[ci["qd[0,0]"]],
            sol.duals[sol.row_index["bal[2,0]"]])


def _grid_search_profit(inst: MarketInstance) -> float:
    """Best profit over all hourly bids: price step 0.5, quantity step 1 MW.

    Each action's market response is cleared once per hour; combinations are
    then screened for state-of-charge feasibility (cycle back to the initial
    level) and scored at the cleared nodal price.
    """
    actions = [("idle", 0.0, 0.0)]
    for kind in ("c", "d"):
        for rho in np.arange(0.0, 15.0 + 1e-9, 0.5):
            for qty in (1.0, 2.0, 3.0, 4.0):
                actions.append((kind, float(rho), float(qty)))
    cleared = [[_clear_hour(_hour_instance(inst, t), a) for a in actions]
               for t in range(inst.horizon)]
    s = inst.storage_units[0]
    best = -np.inf
    for (qc1, qd1, l1), (qc2, qd2, l2) in itertools.product(*cleared):
        soc1 = s.soc_init + qc1 - qd1
        if not s.soc_min - 1e-6 <= soc1 <= s.soc_max + 1e-6:
            continue
        if abs(soc1 + qc2 - qd2 - s.soc_init) > 1e-6:
            continue
        best = max(best, l1 * (qd1 - qc1) + l2 * (qd2 - qc2))
    return float(best)


def test_criterion_4_grid_search_oracle(capsys):
    with _verdict(capsys, 4, "strategic solver matches the exhaustive bid "
                  "grid search within 1 % (< 5 min)"):
        t0 = time.perf_counter()
        inst = _toy_instance()
        reference = _grid_search_profit(inst)
        ss = solve_strategic(inst, MpecConfig(
            big_m=BigMConfig(dual_default=100.0, price_cap=15.0)))
        elapsed = time.perf_counter() - t0
        assert reference == pytest.approx(40.0, abs=1e-6)
        assert abs(ss.profit_expost - reference) \
            <= 0.01 * max(1.0, abs(reference))
        assert elapsed < 300.0, f"took {elapsed:.1f}s"


def test_criterion_5_dominance_and_welfare(year30, capsys):
    with _verdict(capsys, 5, "strategic profit >= competitive profit and "
                  "strategic welfare <= competitive welfare on all 30 days"):
        assert not year30.failures()
        pc = {r.day: r for r in year30.records if r.mode == "pc"}
        mp = {r.day: r for r in year30.records if r.mode == "mpec"}
        assert len(pc) == DAYS and len(mp) == DAYS
        for day in range(DAYS):
            p, m = pc[day], mp[day]
            tol_p = (p.gap + m.gap) * max(1.0, abs(p.profit),
                                          abs(m.profit)) + 1e-6
            assert m.profit >= p.profit - tol_p, \
                f"day {day}: {m.profit} < {p.profit}"
            tol_w = p.gap * max(1.0, abs(p.welfare)) + 1e-6
            assert m.welfare <= p.welfare + tol_w, \
                f"day {day}: welfare {m.welfare} > {p.welfare}"
        # the campaign totals must show a real gain, not just weak dominance
        assert sum(r.profit for r in mp.values()) \
            > sum(r.profit for r in pc.values())


def test_criterion_6_congestion_raises_prices(sweep30, capsys):
    with _verdict(capsys, 6, "50 % local derating raises the mean LMP at "
                  "the storage bus and its top-decile duration curve"):
        assert not sweep30.failures()
        base = sweep30.lmp_series("pc", "derate=1")
        derated = sweep30.lmp_series("pc", "derate=0.5")
        assert len(base) == len(derated) == DAYS * 24
        assert derated.mean() >= base.mean() - 1e-9, \
            f"mean {derated.mean()} < {base.mean()}"
        cb = make_duration_curve(base)
        cd = make_duration_curve(derated)
        top = len(base) // 10
        worst = float(np.min(np.asarray(cd.price[:top])
                             - np.asarray(cb.price[:top])))
        assert worst >= -1e-9, f"top-decile dominance violated by {-worst}"


def test_criterion_7_invariant_suite(year30, sweep30, capsys):
    with _verdict(capsys, 7, "physical, duality and complementarity "
                  "invariants hold on every solved campaign day"):
        records = [r for r in year30.records + sweep30.records if r.ok]
        assert records
        for r in records:
            if r.mode == "pc":
                check_invariants(r.instance, r.solution)
            else:
                check_invariants(r.instance, r.solution.cleared)
                diag = r.solution.diagnostics
                assert diag["strong_duality_residual"] <= 1e-6, \
                    f"day {r.day}: duality residual {diag}"
                assert diag["max_complementarity_residual"] <= 1e-5, \
                    f"day {r.day}: complementarity residual {diag}"
        # competitive days carry no stored duality diagnostics; recheck a
        # sample directly on the binary-fixed pricing model
        sample = [r for r in records if r.mode == "pc"][::11][:3]
        for r in sample:
            _check_pc_duality(r.instance, r.solution)


def _check_pc_duality(inst, sol) -> None:
    problem = build_ed_milp(inst)
    values = []
    for h in range(len(inst.storage_units)):
        for t in range(inst.horizon):
            values += [sol.x_chs[h, t], sol.x_dis[h, t]]
    fixed = fix_binaries(problem, np.asarray(values))
    lpsol = solve_lp(fixed)
    assert lpsol.status is LpStatus.OPTIMAL
    scale = max(1.0, abs(lpsol.objective))
    assert abs(dual_objective(fixed, lpsol) - lpsol.objective) / scale <= 1e-6
    assert complementarity_residual(fixed, lpsol) <= 1e-5


def test_criterion_8_solver_oracles(capsys):
    with _verdict(capsys, 8, "LP solver matches vertex enumeration and "
                  "MILP solver matches brute force on 200 random cases each"):
        test_solve_lp_matches_vertex_enumeration()
        test_solve_milp_matches_brute_force()
