"""Strategic bidding: KKT derivation, big-M linearization, strong-duality
objective linearization, and dominance over truthful bidding."""
from dataclasses import replace

import numpy as np
import pytest

from gridarb.lp import LpBuilder, LpStatus, solve_lp
from gridarb.market import clear_market_pc, social_welfare, storage_profit
from gridarb.milp import solve_milp
from gridarb.mpec import (BigMConfig, MpecConfig, StrategicBid,
                          assemble_kkt_milp, build_lower_level_lp, derive_kkt,
                          linearize_complementarity, linearize_objective,
                          solve_strategic, truthful_bid)

from test_market import check_invariants


def test_bid_validation(two_bus):
    bid = truthful_bid(two_bus)
    bid.check(two_bus)
    bad = replace(bid, qty_dis=bid.qty_dis + 100.0)
    with pytest.raises(ValueError):
        bad.check(two_bus)
    bad = replace(bid, price_dis=bid.price_dis - 100.0)
    with pytest.raises(ValueError):
        bad.check(two_bus)
    bad.check(two_bus, allow_negative_prices=True)


def test_lower_level_lp_structure(two_bus):
    lp = build_lower_level_lp(two_bus, truthful_bid(two_bus))
    assert "bid_d[0,0]" in lp.row_names and "bal[2,3]" in lp.row_names
    # no integer structure and no state-of-charge rows in the lower level
    assert not any(name.startswith("soc") for name in lp.row_names)
    sol = solve_lp(lp)
    assert sol.status is LpStatus.OPTIMAL


def test_derive_kkt_counts(two_bus):
    lp = build_lower_level_lp(two_bus, truthful_bid(two_bus))
    kkt = derive_kkt(lp)
    n_eq = sum(1 for r in lp.relations if r == "=")
    n_ineq = lp.n_rows - n_eq
    kinds = [k for _, k in kkt.duals]
    assert kinds.count("eq") == n_eq
    assert kinds.count("ineq") == n_ineq
    # one stationarity equation per primal variable
    assert len(kkt.stationarity) == lp.n_vars
    # every inequality and finite non-fixed bound has a complementarity pair
    n_fix = kinds.count("fix")
    n_bound = kinds.count("lb") + kinds.count("ub")
    assert len(kkt.pairs) == n_ineq + n_bound
    # the reference-bus angle is fixed, so fixing duals exist
    assert n_fix == two_bus.horizon


def test_kkt_point_recovers_lp_optimum(two_bus):
    """Any point satisfying the linearized KKT system attains the LP optimum."""
    lp = build_lower_level_lp(two_bus, truthful_bid(two_bus))
    kkt = derive_kkt(lp)
    direct = solve_lp(lp)
    prob = assemble_kkt_milp(kkt, BigMConfig(dual_default=200.0))
    milp_sol = solve_milp(prob)
    x = milp_sol.x
    obj = sum(lp.c[j] * x[j] for j in range(lp.n_vars))
    assert obj == pytest.approx(direct.objective, abs=1e-6)


def test_complementarity_block_shape(two_bus):
    lp = build_lower_level_lp(two_bus, truthful_bid(two_bus))
    kkt = derive_kkt(lp)
    block = linearize_complementarity(kkt, BigMConfig(dual_default=100.0))
    assert len(block.binaries) == len(kkt.pairs)
    assert len(block.rows) == 2 * len(kkt.pairs)


def test_unbounded_slack_needs_override():
    b = LpBuilder()
    b.add_var("x", 0.0, np.inf, obj=1.0)
    b.add_row("r", [(0, 1.0)], "<=", 5.0)
    kkt = derive_kkt(b.build())
    # the lower bound pair of x has an unbounded slack
    with pytest.raises(ValueError):
        linearize_complementarity(kkt, BigMConfig())
    block = linearize_complementarity(
        kkt, BigMConfig(dual_overrides={("primal", "lb[x]"): 10.0}))
    assert block.binaries


def test_objective_linearization_identity(two_bus):
    """At the strategic optimum the linearized revenue equals lmp * net
    discharge computed from the recovered primal/dual values."""
    ss = solve_strategic(two_bus, MpecConfig(
        big_m=BigMConfig(dual_default=200.0, price_cap=60.0)))
    s = two_bus.storage_units[0]
    k = two_bus.bus_ids().index(s.bus)
    revenue = float(np.sum(ss.cleared.lmp[k]
                           * (ss.cleared.q_dis[0] - ss.cleared.q_chs[0])))
    assert ss.profit == pytest.approx(revenue, abs=1e-6)
    assert ss.profit == pytest.approx(ss.profit_expost, abs=1e-6)
    assert ss.diagnostics["strong_duality_residual"] <= 1e-6
    assert ss.diagnostics["max_complementarity_residual"] <= 1e-5


def test_strategic_dominates_truthful(two_bus):
    pc = clear_market_pc(two_bus)
    ss = solve_strategic(two_bus, MpecConfig(
        big_m=BigMConfig(dual_default=200.0, price_cap=60.0)))
    assert ss.profit >= float(storage_profit(pc, two_bus).sum()) - 1e-6
    assert social_welfare(two_bus, ss.cleared) <= pc.objective + 1e-6
    ss.bids.check(two_bus)
    check_invariants(two_bus, ss.cleared)


def test_zero_rate_storage_earns_nothing(two_bus):
    units = (replace(two_bus.storage_units[0], charge_max=0.0,
                     discharge_max=0.0, soc_init=0.0, soc_max=0.0),)
    inst = replace(two_bus, storage_units=units)
    ss = solve_strategic(inst, MpecConfig(
        big_m=BigMConfig(dual_default=200.0, price_cap=60.0)))
    assert ss.profit == pytest.approx(0.0, abs=1e-8)


def test_invalid_instance_rejected(two_bus):
    bad = replace(two_bus, ref_bus=99)
    with pytest.raises(ValueError):
        solve_strategic(bad)


def test_strategic_with_wind_fixed_hours(two_bus_wind):
    """Hours with a zero wind forecast produce fixed variables; the KKT
    system must still be consistent."""
    ss = solve_strategic(two_bus_wind, MpecConfig(
        big_m=BigMConfig(dual_default=200.0, price_cap=60.0)))
    assert ss.diagnostics["strong_duality_residual"] <= 1e-6
    check_invariants(two_bus_wind, ss.cleared)
    pc = clear_market_pc(two_bus_wind)
    assert ss.profit >= float(storage_profit(pc, two_bus_wind).sum()) - 1e-6
