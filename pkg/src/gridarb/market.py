"""Network-constrained market clearing under perfect competition.

Builds the day-ahead economic-dispatch MILP (welfare maximization with
storage commitment binaries, DC power flow and state-of-charge coupling),
solves it, then re-solves the binary-fixed LP to price every bus from the
duals of the nodal balance rows.
"""
from __future__ import annotations

import io
import json
from dataclasses import dataclass

import numpy as np

from .lp import LpBuilder, LpStatus, solve_lp
from .milp import (DEFAULT_REL_GAP, MilpProblem, MilpStatus, fix_binaries,
                   solve_milp)
from .model import MarketInstance, validate

__all__ = ["ClearingConfig", "DispatchSolution", "InfeasibleMarketError",
           "build_ed_milp", "clear_market_pc", "storage_profit",
           "social_welfare", "solution_to_csv", "solution_summary"]

MVA_BASE = 100.0


class InfeasibleMarketError(RuntimeError):
    pass


@dataclass(frozen=True)
class ClearingConfig:
    rel_gap: float = DEFAULT_REL_GAP
    feas_tol: float = 1e-6
    enforce_terminal_soc: bool = True
    time_limit: float | None = None


@dataclass(frozen=True)
class DispatchSolution:
    """Cleared quantities, commitment, network state and nodal prices."""
    p_gen: np.ndarray      # (n_gen, T)
    p_wind: np.ndarray     # (n_wind, T)
    load: np.ndarray       # (n_bus, T)
    q_dis: np.ndarray      # (n_storage, T)
    q_chs: np.ndarray      # (n_storage, T)
    x_dis: np.ndarray      # (n_storage, T) 0/1
    x_chs: np.ndarray      # (n_storage, T) 0/1
    soc: np.ndarray        # (n_storage, T)
    flow: np.ndarray       # (n_line, T)
    angle: np.ndarray      # (n_bus, T)
    lmp: np.ndarray        # (n_bus, T)
    objective: float
    gap: float


def build_ed_milp(instance: MarketInstance) -> MilpProblem:
    """Assemble the economic-dispatch MILP with named columns and rows.

    Column/row names follow ``kind[entity,t]`` (e.g. ``bal[14,7]`` for the
    balance row of bus 14 at hour 7), so callers can address any model
    element through the LP name maps.
    """
    problems = validate(instance)
    if problems:
        raise ValueError("invalid instance: " + "; ".join(problems))
    T = instance.horizon
    b = LpBuilder()
    binaries: list[int] = []

    for bus in instance.buses:
        for t in range(T):
            b.add_var(f"d[{bus.id},{t}]", bus.load_min[t], bus.load_max[t],
                      obj=bus.consumer_bid_price)
    for g in instance.generators:
        for t in range(T):
            b.add_var(f"pg[{g.id},{t}]", g.p_min, g.p_max, obj=-g.offer_price)
    for w in instance.wind_farms:
        for t in range(T):
            b.add_var(f"pw[{w.id},{t}]", 0.0, w.forecast[t],
                      obj=-w.offer_price)
    for s in instance.storage_units:
        for t in range(T):
            b.add_var(f"qc[{s.id},{t}]", 0.0, s.charge_max, obj=s.bid_price)
            b.add_var(f"qd[{s.id},{t}]", 0.0, s.discharge_max,
                      obj=-s.cost_discharge)
            binaries.append(b.add_var(f"xc[{s.id},{t}]", 0.0, 1.0))
            binaries.append(b.add_var(f"xd[{s.id},{t}]", 0.0, 1.0))
            b.add_var(f"soc[{s.id},{t}]", s.soc_min, s.soc_max)
        # constant charging cost enters the objective on the charging side
        if s.cost_charge:
            for t in range(T):
                j = b.col_index[f"qc[{s.id},{t}]"]
                b.set_obj(j, s.bid_price - s.cost_charge)
    for ln in instance.lines:
        for t in range(T):
            b.add_var(f"pf[{ln.id},{t}]", -ln.capacity, ln.capacity)
    for bus in instance.buses:
        for t in range(T):
            if bus.id == instance.ref_bus:
                b.add_var(f"th[{bus.id},{t}]", 0.0, 0.0)
            else:
                b.add_var(f"th[{bus.id},{t}]", -np.pi, np.pi)

    ci = b.col_index
    for s in instance.storage_units:
        for t in range(T):
            b.add_row(f"qc_link[{s.id},{t}]",
                      [(ci[f"qc[{s.id},{t}]"], 1.0),
                       (ci[f"xc[{s.id},{t}]"], -s.charge_max)], "<=", 0.0)
            b.add_row(f"qd_link[{s.id},{t}]",
                      [(ci[f"qd[{s.id},{t}]"], 1.0),
                       (ci[f"xd[{s.id},{t}]"], -s.discharge_max)], "<=", 0.0)
            b.add_row(f"mutex[{s.id},{t}]",
                      [(ci[f"xc[{s.id},{t}]"], 1.0),
                       (ci[f"xd[{s.id},{t}]"], 1.0)], "<=", 1.0)
            coeffs = [(ci[f"soc[{s.id},{t}]"], 1.0),
                      (ci[f"qc[{s.id},{t}]"], -s.eta_charge),
                      (ci[f"qd[{s.id},{t}]"], 1.0 / s.eta_discharge)]
            rhs = s.soc_init if t == 0 else 0.0
            if t > 0:
                coeffs.append((ci[f"soc[{s.id},{t - 1}]"], -1.0))
            b.add_row(f"soc[{s.id},{t}]", coeffs, "=", rhs)
        b.add_row(f"socT[{s.id}]", [(ci[f"soc[{s.id},{T - 1}]"], 1.0)],
                  "=", s.soc_init)

    for bus in instance.buses:
        for t in range(T):
            coeffs = [(ci[f"d[{bus.id},{t}]"], 1.0)]
            for ln in instance.lines:
                if ln.from_bus == bus.id:
                    coeffs.append((ci[f"pf[{ln.id},{t}]"], 1.0))
                elif ln.to_bus == bus.id:
                    coeffs.append((ci[f"pf[{ln.id},{t}]"], -1.0))
            for g in instance.generators:
                if g.bus == bus.id:
                    coeffs.append((ci[f"pg[{g.id},{t}]"], -1.0))
            for w in instance.wind_farms:
                if w.bus == bus.id:
                    coeffs.append((ci[f"pw[{w.id},{t}]"], -1.0))
            for s in instance.storage_units:
                if s.bus == bus.id:
                    coeffs.append((ci[f"qd[{s.id},{t}]"], -1.0))
                    coeffs.append((ci[f"qc[{s.id},{t}]"], 1.0))
            b.add_row(f"bal[{bus.id},{t}]", coeffs, "=", 0.0)

    for ln in instance.lines:
        susceptance = MVA_BASE / ln.reactance
        for t in range(T):
            b.add_row(f"pfdef[{ln.id},{t}]",
                      [(ci[f"pf[{ln.id},{t}]"], 1.0),
                       (ci[f"th[{ln.from_bus},{t}]"], -susceptance),
                       (ci[f"th[{ln.to_bus},{t}]"], susceptance)], "=", 0.0)
    return MilpProblem(lp=b.build(), binary_indices=tuple(binaries))


def _drop_terminal_soc(problem: MilpProblem,
                       instance: MarketInstance) -> MilpProblem:
    lp = problem.lp
    relations = list(lp.relations)
    rhs = lp.rhs.copy()
    for s in instance.storage_units:
        i = lp.row_names.index(f"socT[{s.id}]")
        relations[i] = ">="
        rhs[i] = s.soc_min
    from dataclasses import replace
    return MilpProblem(lp=replace(lp, relations=tuple(relations), rhs=rhs),
                       binary_indices=problem.binary_indices)


def clear_market_pc(instance: MarketInstance,
                    config: ClearingConfig = ClearingConfig()) -> DispatchSolution:
    """Clear the day, then price it from the binary-fixed LP's balance duals."""
    problem = build_ed_milp(instance)
    if not config.enforce_terminal_soc:
        problem = _drop_terminal_soc(problem, instance)
    mip = solve_milp(problem, rel_gap=config.rel_gap,
                     time_limit=config.time_limit)
    if mip.status is MilpStatus.INFEASIBLE:
        raise InfeasibleMarketError(_diagnose_infeasible(instance))
    if mip.x is None:
        raise InfeasibleMarketError(f"market clearing failed: {mip.status.value}")
    fixed = fix_binaries(problem, mip.x[list(problem.binary_indices)])
    lpsol = solve_lp(fixed)
    if lpsol.status is not LpStatus.OPTIMAL:
        raise InfeasibleMarketError(
            f"binary-fixed pricing LP not optimal: {lpsol.status.value}")
    return _extract_dispatch(instance, problem, lpsol, mip.rel_gap or 0.0)


def _extract_dispatch(instance, problem, lpsol, gap) -> DispatchSolution:
    lp = problem.lp
    ci = {name: j for j, name in enumerate(lp.col_names)}
    x = lpsol.x
    T = instance.horizon

    def grid(prefix, entities):
        out = np.zeros((len(entities), T))
        for k, e in enumerate(entities):
            for t in range(T):
                out[k, t] = x[ci[f"{prefix}[{e},{t}]"]]
        return out

    bus_ids = [bus.id for bus in instance.buses]
    lmp = np.zeros((len(bus_ids), T))
    for k, bid in enumerate(bus_ids):
        for t in range(T):
            lmp[k, t] = lpsol.duals[lpsol.row_index[f"bal[{bid},{t}]"]]
    sids = [s.id for s in instance.storage_units]
    return DispatchSolution(
        p_gen=grid("pg", [g.id for g in instance.generators]),
        p_wind=grid("pw", [w.id for w in instance.wind_farms]),
        load=grid("d", bus_ids),
        q_dis=grid("qd", sids), q_chs=grid("qc", sids),
        x_dis=np.round(grid("xd", sids)), x_chs=np.round(grid("xc", sids)),
        soc=grid("soc", sids),
        flow=grid("pf", [ln.id for ln in instance.lines]),
        angle=grid("th", bus_ids),
        lmp=lmp, objective=float(lpsol.objective), gap=float(gap),
    )


def _diagnose_infeasible(instance: MarketInstance) -> str:
    """Best-effort identification of the first violated subsystem."""
    for s in instance.storage_units:
        # terminal condition needs a feasible cycle back to soc_init
        if s.soc_init > s.soc_max or s.soc_init < s.soc_min:
            return f"infeasible: storage {s.id} SoC window excludes soc_init"
    for bus in instance.buses:
        for t in range(instance.horizon):
            if bus.load_min[t] > bus.load_max[t]:
                return f"infeasible: bus {bus.id} load bounds cross at t={t}"
    total_gen = sum(g.p_max for g in instance.generators)
    peak_min_load = max(
        sum(bus.load_min[t] for bus in instance.buses)
        for t in range(instance.horizon)
    )
    if peak_min_load > total_gen:
        return "infeasible: minimum load exceeds installed generation"
    return ("infeasible: network-constrained dispatch has no solution "
            "(check line capacities against minimum load)")


def storage_profit(solution: DispatchSolution,
                   instance: MarketInstance) -> np.ndarray:
    """Ex-post arbitrage profit per storage unit from nodal prices."""
    bus_pos = {bus.id: k for k, bus in enumerate(instance.buses)}
    out = np.zeros(len(instance.storage_units))
    for h, s in enumerate(instance.storage_units):
        lam = solution.lmp[bus_pos[s.bus]]
        out[h] = float(np.sum(
            lam * (solution.q_dis[h] - solution.q_chs[h])
            - s.cost_discharge * solution.q_dis[h]
            - s.cost_charge * solution.q_chs[h]))
    return out


def social_welfare(instance: MarketInstance,
                   solution: DispatchSolution) -> float:
    """Bid value minus offer cost of the cleared quantities (the clearing
    objective, reusable for dispatches produced by other mechanisms)."""
    val = 0.0
    for k, bus in enumerate(instance.buses):
        val += bus.consumer_bid_price * float(solution.load[k].sum())
    for k, g in enumerate(instance.generators):
        val -= g.offer_price * float(solution.p_gen[k].sum())
    for k, w in enumerate(instance.wind_farms):
        val -= w.offer_price * float(solution.p_wind[k].sum())
    for h, s in enumerate(instance.storage_units):
        val += (s.bid_price - s.cost_charge) * float(solution.q_chs[h].sum())
        val -= s.cost_discharge * float(solution.q_dis[h].sum())
    return val


# ---------------------------------------------------------------------------
# serialization

def solution_to_csv(solution: DispatchSolution,
                    instance: MarketInstance) -> str:
    """One row per (entity, hour): kind,id,bus,t,value_MW,lmp."""
    bus_pos = {bus.id: k for k, bus in enumerate(instance.buses)}
    buf = io.StringIO()
    buf.write("kind,id,bus,t,value_MW,lmp\n")

    def rows(kind, entities, values, bus_of):
        for k, e in enumerate(entities):
            bus = bus_of(e)
            for t in range(values.shape[1]):
                buf.write(f"{kind},{e.id},{bus},{t},{values[k, t]:.6f},"
                          f"{solution.lmp[bus_pos[bus], t]:.6f}\n")

    rows("load", instance.buses, solution.load, lambda e: e.id)
    rows("generator", instance.generators, solution.p_gen, lambda e: e.bus)
    rows("wind", instance.wind_farms, solution.p_wind, lambda e: e.bus)
    net = solution.q_dis - solution.q_chs
    rows("storage", instance.storage_units, net, lambda e: e.bus)
    return buf.getvalue()


def solution_summary(solution: DispatchSolution,
                     instance: MarketInstance) -> str:
    profits = storage_profit(solution, instance)
    doc = {
        "objective": solution.objective,
        "gap": solution.gap,
        "storage_profit": {str(s.id): profits[h]
                           for h, s in enumerate(instance.storage_units)},
    }
    return json.dumps(doc, indent=2)
