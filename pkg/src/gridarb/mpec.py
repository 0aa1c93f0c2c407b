"""Strategic storage bidding as a single-level mixed-integer program.

The storage owner chooses price/quantity bids to maximize arbitrage profit
while the market clears a welfare-maximizing LP parametrized by those bids.
The bilevel problem is collapsed to one MILP by

* replacing the clearing LP with its KKT conditions,
* linearizing each complementary-slackness pair with a big-M disjunction
  (one binary per pair), and
* eliminating the bilinear price-times-quantity revenue with the
  strong-duality equality of the clearing LP, which leaves an expression
  that is linear in the clearing primals and duals:

      sum_t lmp * (q_dis - q_chs)
          = sum(non-storage objective terms) - Phi_rest

  where Phi_rest collects every dual-objective term except those of the
  bid-quantity rows (the bilinear parts cancel against complementarity).
  The identity is exercised numerically in the test suite.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace as dc_replace

import numpy as np

from .lp import LinearProgram, LpBuilder, LpStatus, solve_lp
from .market import DispatchSolution, MVA_BASE, social_welfare
from .milp import DEFAULT_REL_GAP, MilpProblem, MilpStatus, fix_binaries, solve_milp
from .model import MarketInstance, validate

__all__ = [
    "StrategicBid", "StrategicSolution", "BigMConfig", "MpecConfig",
    "KktSystem", "ComplementarityPair", "ComplementarityBlock",
    "build_lower_level_lp", "derive_kkt", "linearize_complementarity",
    "linearize_objective", "assemble_kkt_milp", "solve_strategic",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class StrategicBid:
    """Hourly price/quantity bids of the strategic agent, per storage unit."""
    price_dis: np.ndarray   # (n_storage, T)
    price_chs: np.ndarray
    qty_dis: np.ndarray
    qty_chs: np.ndarray
    x_dis: np.ndarray       # 0/1 commitment
    x_chs: np.ndarray

    def check(self, instance: MarketInstance,
              allow_negative_prices: bool = False) -> None:
        for h, s in enumerate(instance.storage_units):
            if not allow_negative_prices:
                if (self.price_dis[h] < 0).any() or (self.price_chs[h] < 0).any():
                    raise ValueError(f"storage {s.id}: negative bid price")
            if ((self.qty_dis[h] < -1e-9).any()
                    or (self.qty_dis[h] > s.discharge_max * self.x_dis[h] + 1e-9).any()):
                raise ValueError(f"storage {s.id}: discharge quantity outside limits")
            if ((self.qty_chs[h] < -1e-9).any()
                    or (self.qty_chs[h] > s.charge_max * self.x_chs[h] + 1e-9).any()):
                raise ValueError(f"storage {s.id}: charge quantity outside limits")


def truthful_bid(instance: MarketInstance) -> StrategicBid:
    """Full-rate bids at marginal cost: the non-strategic reference offer."""
    T = instance.horizon
    n = len(instance.storage_units)
    return StrategicBid(
        price_dis=np.array([[s.cost_discharge] * T for s in instance.storage_units]),
        price_chs=np.array([[s.bid_price] * T for s in instance.storage_units]),
        qty_dis=np.array([[s.discharge_max] * T for s in instance.storage_units]),
        qty_chs=np.array([[s.charge_max] * T for s in instance.storage_units]),
        x_dis=np.ones((n, T)), x_chs=np.ones((n, T)),
    )


@dataclass(frozen=True)
class BigMConfig:
    dual_default: float = 2000.0
    dual_overrides: dict = field(default_factory=dict)  # pair name -> M
    price_cap: float = 2000.0
    allow_negative_prices: bool = False


@dataclass(frozen=True)
class MpecConfig:
    rel_gap: float = DEFAULT_REL_GAP
    big_m: BigMConfig = BigMConfig()
    time_limit: float | None = None
    big_m_validation_rounds: int = 3


@dataclass(frozen=True)
class StrategicSolution:
    bids: StrategicBid
    cleared: DispatchSolution
    profit: float               # MILP objective
    profit_expost: float        # recomputed from binary-fixed LP prices
    gap: float
    diagnostics: dict


# ---------------------------------------------------------------------------
# lower-level clearing LP

def redundant_line_limits(instance: MarketInstance) -> frozenset:
    """Ids of lines whose capacity can never bind on this instance.

    For each line the largest attainable |flow| is maximized over a
    relaxation of every hour's feasible set (widest hourly injection bounds,
    all other line limits dropped), so a limit below capacity here proves
    the capacity constraint slack in every hour.  Dropping such constraints
    leaves the clearing LP and its dual solutions unchanged while removing
    their complementarity pairs.
    """
    b = LpBuilder()
    for bus in instance.buses:
        b.add_var(f"d[{bus.id}]", min(bus.load_min), max(bus.load_max))
    for g in instance.generators:
        b.add_var(f"pg[{g.id}]", g.p_min, g.p_max)
    for w in instance.wind_farms:
        b.add_var(f"pw[{w.id}]", 0.0, max(w.forecast))
    for s in instance.storage_units:
        b.add_var(f"q[{s.id}]", -s.charge_max, s.discharge_max)
    for ln in instance.lines:
        b.add_var(f"pf[{ln.id}]", -np.inf, np.inf)
    for bus in instance.buses:
        if bus.id == instance.ref_bus:
            b.add_var(f"th[{bus.id}]", 0.0, 0.0)
        else:
            b.add_var(f"th[{bus.id}]", -np.inf, np.inf)
    ci = b.col_index
    for bus in instance.buses:
        coeffs = [(ci[f"d[{bus.id}]"], 1.0)]
        for ln in instance.lines:
            if ln.from_bus == bus.id:
                coeffs.append((ci[f"pf[{ln.id}]"], 1.0))
            elif ln.to_bus == bus.id:
                coeffs.append((ci[f"pf[{ln.id}]"], -1.0))
        for g in instance.generators:
            if g.bus == bus.id:
                coeffs.append((ci[f"pg[{g.id}]"], -1.0))
        for w in instance.wind_farms:
            if w.bus == bus.id:
                coeffs.append((ci[f"pw[{w.id}]"], -1.0))
        for s in instance.storage_units:
            if s.bus == bus.id:
                coeffs.append((ci[f"q[{s.id}]"], -1.0))
        b.add_row(f"bal[{bus.id}]", coeffs, "=", 0.0)
    for ln in instance.lines:
        susceptance = MVA_BASE / ln.reactance
        b.add_row(f"pfdef[{ln.id}]",
                  [(ci[f"pf[{ln.id}]"], 1.0),
                   (ci[f"th[{ln.from_bus}]"], -susceptance),
                   (ci[f"th[{ln.to_bus}]"], susceptance)], "=", 0.0)
    base = b.build()
    out = set()
    for ln in instance.lines:
        j = ci[f"pf[{ln.id}]"]
        worst = 0.0
        for sense in (1.0, -1.0):
            c = np.zeros(base.n_vars)
            c[j] = sense
            sol = solve_lp(dc_replace(base, c=c))
            if sol.status is not LpStatus.OPTIMAL:
                worst = np.inf
                break
            worst = max(worst, abs(sol.objective))
        if worst <= ln.capacity * (1.0 - 1e-9) - 1e-6:
            out.add(ln.id)
    return frozenset(out)


def build_lower_level_lp(instance: MarketInstance, bids: StrategicBid,
                         free_line_limits: frozenset = frozenset(),
                         ) -> LinearProgram:
    """Welfare-maximizing clearing LP parametrized by the storage bids.

    Storage enters only through the bid-quantity rows ``bid_d[h,t]`` /
    ``bid_c[h,t]``; its intertemporal constraints stay with the bidder.
    Lines listed in `free_line_limits` (see :func:`redundant_line_limits`)
    keep their flow variable unbounded.
    """
    problems = validate(instance)
    if problems:
        raise ValueError("invalid instance: " + "; ".join(problems))
    bids.check(instance, allow_negative_prices=True)
    T = instance.horizon
    b = LpBuilder()
    for bus in instance.buses:
        for t in range(T):
            b.add_var(f"d[{bus.id},{t}]", bus.load_min[t], bus.load_max[t],
                      obj=bus.consumer_bid_price)
    for g in instance.generators:
        for t in range(T):
            b.add_var(f"pg[{g.id},{t}]", g.p_min, g.p_max, obj=-g.offer_price)
    for w in instance.wind_farms:
        for t in range(T):
            b.add_var(f"pw[{w.id},{t}]", 0.0, w.forecast[t], obj=-w.offer_price)
    for h, s in enumerate(instance.storage_units):
        for t in range(T):
            b.add_var(f"qc[{s.id},{t}]", 0.0, s.charge_max,
                      obj=float(bids.price_chs[h, t]))
            b.add_var(f"qd[{s.id},{t}]", 0.0, s.discharge_max,
                      obj=-float(bids.price_dis[h, t]))
    for ln in instance.lines:
        lo, hi = ((-np.inf, np.inf) if ln.id in free_line_limits
                  else (-ln.capacity, ln.capacity))
        for t in range(T):
            b.add_var(f"pf[{ln.id},{t}]", lo, hi)
    for bus in instance.buses:
        for t in range(T):
            if bus.id == instance.ref_bus:
                b.add_var(f"th[{bus.id},{t}]", 0.0, 0.0)
            else:
                # angles are free: they are determined by the flows, and
                # leaving the cosmetic +-pi box off keeps the KKT system lean
                b.add_var(f"th[{bus.id},{t}]", -np.inf, np.inf)

    ci = b.col_index
    for h, s in enumerate(instance.storage_units):
        for t in range(T):
            b.add_row(f"bid_c[{s.id},{t}]", [(ci[f"qc[{s.id},{t}]"], 1.0)],
                      "<=", float(bids.qty_chs[h, t]))
            b.add_row(f"bid_d[{s.id},{t}]", [(ci[f"qd[{s.id},{t}]"], 1.0)],
                      "<=", float(bids.qty_dis[h, t]))
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
    return b.build()


# ---------------------------------------------------------------------------
# KKT machinery

@dataclass(frozen=True)
class ComplementarityPair:
    """slack >= 0 complements dual >= 0; slack = const + sum(coeff * x)."""
    name: str
    dual: str
    slack_terms: tuple[tuple[str, float], ...]   # over primal column names
    slack_const: float
    primal_m: float                              # upper bound on the slack


@dataclass(frozen=True)
class KktSystem:
    lp: LinearProgram
    duals: tuple[tuple[str, str], ...]      # (name, kind in eq/ineq/lb/ub/fix)
    # stationarity per primal column: (col, c_j, ((dual, coeff), ...))
    stationarity: tuple[tuple[str, float, tuple[tuple[str, float], ...]], ...]
    pairs: tuple[ComplementarityPair, ...]


def _slack_upper_bound(lp: LinearProgram, terms, const: float) -> float:
    """Interval bound of const + sum(coeff * x) over the variable box."""
    hi = const
    name_to_col = {n: j for j, n in enumerate(lp.col_names)}
    for cname, coeff in terms:
        j = name_to_col[cname]
        end = lp.ub[j] if coeff > 0 else lp.lb[j]
        hi += coeff * end
    return float(hi)


def derive_kkt(lp: LinearProgram) -> KktSystem:
    """First-order optimality system of a (max-sense) LP.

    One free dual per equality row, one nonnegative dual per inequality row
    and per finite variable bound; one stationarity equation per primal
    variable; one complementarity pair per inequality and finite bound.
    Variables with equal bounds get a free fixing dual and no pair.
    """
    lp.check()
    if not lp.col_names or not lp.row_names:
        raise ValueError("KKT derivation needs a fully named LP")
    duals: list[tuple[str, str]] = []
    pairs: list[ComplementarityPair] = []
    # column-wise constraint terms: col -> [(dual, coeff)]
    terms: dict[str, list[tuple[str, float]]] = {n: [] for n in lp.col_names}

    A = lp.matrix().tocoo()
    row_entries: dict[int, list[tuple[int, float]]] = {}
    for i, j, v in zip(A.row, A.col, A.data):
        row_entries.setdefault(int(i), []).append((int(j), float(v)))

    for i, rel in enumerate(lp.relations):
        rname = lp.row_names[i]
        entries = row_entries.get(i, [])
        if rel == "=":
            dname = f"y[{rname}]"
            duals.append((dname, "eq"))
            for j, v in entries:
                terms[lp.col_names[j]].append((dname, v))
        else:
            # normalize ">=" to "<=" by negation
            sgn = 1.0 if rel == "<=" else -1.0
            dname = f"mu[{rname}]"
            duals.append((dname, "ineq"))
            slack = tuple((lp.col_names[j], -sgn * v) for j, v in entries)
            m = _slack_upper_bound(lp, slack, sgn * lp.rhs[i])
            pairs.append(ComplementarityPair(
                name=rname, dual=dname, slack_terms=slack,
                slack_const=sgn * lp.rhs[i], primal_m=m))
            for j, v in entries:
                terms[lp.col_names[j]].append((dname, sgn * v))

    for j, cname in enumerate(lp.col_names):
        lo, hi = lp.lb[j], lp.ub[j]
        if np.isfinite(lo) and np.isfinite(hi) and hi - lo < 1e-12:
            dname = f"nu_fix[{cname}]"
            duals.append((dname, "fix"))
            terms[cname].append((dname, -1.0))
            continue
        if np.isfinite(lo):
            dname = f"nu_lb[{cname}]"
            duals.append((dname, "lb"))
            terms[cname].append((dname, -1.0))
            pairs.append(ComplementarityPair(
                name=f"lb[{cname}]", dual=dname,
                slack_terms=((cname, 1.0),), slack_const=-lo,
                primal_m=float(hi - lo) if np.isfinite(hi) else np.inf))
        if np.isfinite(hi):
            dname = f"nu_ub[{cname}]"
            duals.append((dname, "ub"))
            terms[cname].append((dname, 1.0))
            pairs.append(ComplementarityPair(
                name=f"ub[{cname}]", dual=dname,
                slack_terms=((cname, -1.0),), slack_const=hi,
                primal_m=float(hi - lo) if np.isfinite(lo) else np.inf))

    # stationarity: c_j - sum(coeff * dual) = 0, with bound duals folded in
    stationarity = tuple(
        (cname, float(lp.c[j]), tuple(terms[cname]))
        for j, cname in enumerate(lp.col_names)
    )
    return KktSystem(lp=lp, duals=tuple(duals), stationarity=stationarity,
                     pairs=tuple(pairs))


@dataclass(frozen=True)
class ComplementarityBlock:
    """Big-M disjunctions ready to append to a MILP builder.

    Each row is (name, terms over symbolic variable names, relation, rhs);
    binaries lists the switch variable of each pair (z = 1 keeps the
    constraint slack, z = 0 keeps the dual).
    """
    binaries: tuple[str, ...]
    rows: tuple[tuple[str, tuple[tuple[str, float], ...], str, float], ...]


def linearize_complementarity(kkt: KktSystem,
                              big_m: BigMConfig) -> ComplementarityBlock:
    """Fortuny-Amat/McCarl style big-M rows for every complementarity pair."""
    binaries = []
    rows = []
    for pair in kkt.pairs:
        mp = big_m.dual_overrides.get(("primal", pair.name), pair.primal_m)
        if not np.isfinite(mp):
            raise ValueError(
                f"pair {pair.name}: slack is unbounded; provide a big-M override")
        md = big_m.dual_overrides.get(pair.dual, big_m.dual_default)
        z = f"z[{pair.name}]"
        binaries.append(z)
        # slack <= Mp * z
        rows.append((f"cs_p[{pair.name}]",
                     tuple(pair.slack_terms) + ((z, -mp),),
                     "<=", -pair.slack_const))
        # dual <= Md * (1 - z)
        rows.append((f"cs_d[{pair.name}]", ((pair.dual, 1.0), (z, md)),
                     "<=", md))
    return ComplementarityBlock(binaries=tuple(binaries), rows=tuple(rows))


def _storage_q_columns(instance: MarketInstance) -> set[str]:
    cols = set()
    for s in instance.storage_units:
        for t in range(instance.horizon):
            cols.add(f"qc[{s.id},{t}]")
            cols.add(f"qd[{s.id},{t}]")
    return cols


def _bid_row_names(instance: MarketInstance) -> set[str]:
    rows = set()
    for s in instance.storage_units:
        for t in range(instance.horizon):
            rows.add(f"bid_c[{s.id},{t}]")
            rows.add(f"bid_d[{s.id},{t}]")
    return rows


def linearize_objective(kkt: KktSystem,
                        instance: MarketInstance) -> dict[str, float]:
    """Linear expression equal (at any KKT point) to the storage revenue
    ``sum_t lmp * (q_dis - q_chs)``.

    Combining lower-level strong duality with the complementarity of the
    bid-quantity rows cancels every bilinear term, leaving the non-storage
    objective terms minus the dual-objective terms of all other rows and
    bounds.
    """
    lp = kkt.lp
    qcols = _storage_q_columns(instance)
    bid_rows = _bid_row_names(instance)
    expr: dict[str, float] = {}

    def add(name, v):
        if v:
            expr[name] = expr.get(name, 0.0) + v

    for j, cname in enumerate(lp.col_names):
        if cname not in qcols:
            add(cname, float(lp.c[j]))
    row_rhs = {name: lp.rhs[i] for i, name in enumerate(lp.row_names)}
    for dname, kind in kkt.duals:
        inner = dname[dname.index("[") + 1:-1]
        if kind == "eq":
            add(dname, -float(row_rhs[inner]))
        elif kind == "ineq":
            if inner not in bid_rows:
                sgn = 1.0 if lp.relations[lp.row_names.index(inner)] == "<=" else -1.0
                add(dname, -sgn * float(row_rhs[inner]))
        else:
            j = lp.col_names.index(inner)
            if kind == "ub":
                add(dname, -float(lp.ub[j]))
            elif kind == "lb":
                add(dname, float(lp.lb[j]))
            else:  # fix
                add(dname, -float(lp.lb[j]))
    return expr


# ---------------------------------------------------------------------------
# single-level MILP assembly

def _auto_dual_overrides(kkt: KktSystem, instance: MarketInstance,
                         big_m: BigMConfig) -> dict:
    """Per-pair dual caps of the form dual_default + price scale.

    A bound dual equals the column's reduced cost, whose magnitude tracks
    the column's objective price plus the constraint-dual scale, so each
    pair gets dual_default plus that column's |price|.  The agent's own
    columns and bid rows carry the free bid price instead, hence the price
    cap.  The caps are heuristic; the saturation/doubling pass in
    solve_strategic restores validity if one turns out too small.
    """
    lp = kkt.lp
    qcols = _storage_q_columns(instance)
    bid_rows = _bid_row_names(instance)
    col_of = {n: j for j, n in enumerate(lp.col_names)}
    out = {}
    for pair in kkt.pairs:
        inner = pair.dual[pair.dual.index("[") + 1:-1]
        if inner in qcols or inner in bid_rows:
            base = big_m.price_cap
        elif inner in col_of:                      # variable bound pair
            base = abs(float(lp.c[col_of[inner]]))
        else:                                      # other inequality row
            base = 0.0
        out.setdefault(pair.dual, big_m.dual_default + base)
    return out


def _assemble(kkt: KktSystem, big_m: BigMConfig,
              objective: dict[str, float] | None = None,
              strategic: tuple[MarketInstance, StrategicBid] | None = None,
              ) -> tuple[MilpProblem, LpBuilder]:
    """Primal rows + stationarity + big-M complementarity in one builder.

    With `strategic` set, bid-quantity rhs and bid prices become upper-level
    decision variables and the commitment/state-of-charge constraints of the
    bidder are appended.
    """
    lp = kkt.lp
    b = LpBuilder()
    for j, cname in enumerate(lp.col_names):
        b.add_var(cname, lp.lb[j], lp.ub[j])
    for dname, kind in kkt.duals:
        if kind in ("eq", "fix"):
            b.add_var(dname, -np.inf, np.inf)
        else:
            md = big_m.dual_overrides.get(dname, big_m.dual_default)
            b.add_var(dname, 0.0, md)

    instance = bid_qty_col = rho_col = None
    qcols: set[str] = set()
    bid_rows: set[str] = set()
    binaries: list[int] = []
    if strategic is not None:
        instance, _bids = strategic
        qcols = _storage_q_columns(instance)
        bid_rows = _bid_row_names(instance)
        T = instance.horizon
        price_lo = -big_m.price_cap if big_m.allow_negative_prices else 0.0
        bid_qty_col = {}
        rho_col = {}
        for s in instance.storage_units:
            for t in range(T):
                rho_col[f"qd[{s.id},{t}]"] = b.add_var(
                    f"rho_d[{s.id},{t}]", price_lo, big_m.price_cap)
                rho_col[f"qc[{s.id},{t}]"] = b.add_var(
                    f"rho_c[{s.id},{t}]", price_lo, big_m.price_cap)
                bid_qty_col[f"bid_d[{s.id},{t}]"] = b.add_var(
                    f"bqd[{s.id},{t}]", 0.0, s.discharge_max)
                bid_qty_col[f"bid_c[{s.id},{t}]"] = b.add_var(
                    f"bqc[{s.id},{t}]", 0.0, s.charge_max)
                binaries.append(b.add_var(f"uxd[{s.id},{t}]", 0.0, 1.0))
                binaries.append(b.add_var(f"uxc[{s.id},{t}]", 0.0, 1.0))
                b.add_var(f"usoc[{s.id},{t}]", s.soc_min, s.soc_max)

    ci = b.col_index
    # primal feasibility of the clearing LP
    A = lp.matrix().tocoo()
    row_entries: dict[int, list[tuple[str, float]]] = {i: [] for i in range(lp.n_rows)}
    for i, j, v in zip(A.row, A.col, A.data):
        row_entries[int(i)].append((lp.col_names[int(j)], float(v)))
    for i, rname in enumerate(lp.row_names):
        coeffs = [(ci[n], v) for n, v in row_entries[i]]
        rhs = float(lp.rhs[i])
        if rname in bid_rows:
            coeffs.append((bid_qty_col[rname], -1.0))
            rhs = 0.0
        b.add_row(f"feas[{rname}]", coeffs, lp.relations[i], rhs)

    # stationarity
    for cname, cj, terms in kkt.stationarity:
        coeffs = [(ci[d], -v) for d, v in terms]
        rhs = -cj
        if cname in qcols:
            # objective coefficient is the (upper-level) bid price
            sgn = -1.0 if cname.startswith("qd[") else 1.0
            coeffs.append((rho_col[cname], sgn))
            rhs = 0.0
        b.add_row(f"stat[{cname}]", coeffs, "=", rhs)

    # complementarity disjunctions
    block = linearize_complementarity(kkt, big_m)
    for zname in block.binaries:
        binaries.append(b.add_var(zname, 0.0, 1.0))
    for rname, terms, rel, rhs in block.rows:
        coeffs = []
        for n, v in terms:
            coeffs.append((ci[n], v))
        if rname.startswith("cs_p[") and rname[5:-1] in bid_rows:
            # slack of a lifted bid row gains the bid-quantity variable
            coeffs.append((bid_qty_col[rname[5:-1]], 1.0))
            rhs = 0.0
        b.add_row(rname, coeffs, rel, rhs)

    # upper-level storage constraints on bids and cleared quantities
    if strategic is not None:
        T = instance.horizon
        for s in instance.storage_units:
            for t in range(T):
                b.add_row(f"up_dis[{s.id},{t}]",
                          [(ci[f"bqd[{s.id},{t}]"], 1.0),
                           (ci[f"uxd[{s.id},{t}]"], -s.discharge_max)], "<=", 0.0)
                b.add_row(f"up_chs[{s.id},{t}]",
                          [(ci[f"bqc[{s.id},{t}]"], 1.0),
                           (ci[f"uxc[{s.id},{t}]"], -s.charge_max)], "<=", 0.0)
                b.add_row(f"up_mutex[{s.id},{t}]",
                          [(ci[f"uxd[{s.id},{t}]"], 1.0),
                           (ci[f"uxc[{s.id},{t}]"], 1.0)], "<=", 1.0)
                coeffs = [(ci[f"usoc[{s.id},{t}]"], 1.0),
                          (ci[f"qc[{s.id},{t}]"], -s.eta_charge),
                          (ci[f"qd[{s.id},{t}]"], 1.0 / s.eta_discharge)]
                rhs = s.soc_init if t == 0 else 0.0
                if t > 0:
                    coeffs.append((ci[f"usoc[{s.id},{t - 1}]"], -1.0))
                b.add_row(f"up_soc[{s.id},{t}]", coeffs, "=", rhs)
            b.add_row(f"up_socT[{s.id}]",
                      [(ci[f"usoc[{s.id},{T - 1}]"], 1.0)], "=", s.soc_init)

    if objective:
        for name, v in objective.items():
            b.set_obj(ci[name], b._c[ci[name]] + v)
    return MilpProblem(lp=b.build(), binary_indices=tuple(binaries)), b


def assemble_kkt_milp(kkt: KktSystem,
                      big_m: BigMConfig = BigMConfig()) -> MilpProblem:
    """Feasibility MILP whose solutions are exactly the KKT points of the LP."""
    problem, _ = _assemble(kkt, big_m)
    return problem


# ---------------------------------------------------------------------------
# solve

def solve_strategic(instance: MarketInstance,
                    config: MpecConfig = MpecConfig()) -> StrategicSolution:
    """Optimal price/quantity bids of the storage agent.

    Profit is reported both as the MILP objective (via the strong-duality
    linearization) and as an ex-post recomputation from the binary-fixed
    model's prices; a large difference between the two indicates big-M
    artifacts.  Duals that approach their big-M cap trigger a doubling
    re-solve (bounded number of rounds).
    """
    problems = validate(instance)
    if problems:
        raise ValueError("invalid instance: " + "; ".join(problems))
    big_m = config.big_m
    last_err = None
    for round_idx in range(config.big_m_validation_rounds + 1):
        sol, saturated = _solve_strategic_once(instance, config, big_m)
        if sol is not None and not saturated:
            if round_idx:
                sol.diagnostics["big_m_rounds"] = round_idx
            return sol
        if sol is not None:
            last_err = sol
        log.warning("big-M %.0f too tight (infeasible or saturated dual); "
                    "doubling and re-solving", big_m.dual_default)
        big_m = dc_replace(big_m, dual_default=big_m.dual_default * 2.0)
    if last_err is not None:
        last_err.diagnostics["big_m_saturated"] = True
        return last_err
    raise RuntimeError("strategic MILP failed in every big-M round")


def _solve_strategic_once(instance, config, big_m):
    placeholder = truthful_bid(instance)
    lower = build_lower_level_lp(instance, placeholder,
                                 free_line_limits=redundant_line_limits(instance))
    kkt = derive_kkt(lower)
    revenue = linearize_objective(kkt, instance)
    # subtract the constant marginal dispatch costs of the agent
    objective = dict(revenue)
    for h, s in enumerate(instance.storage_units):
        for t in range(instance.horizon):
            objective[f"qd[{s.id},{t}]"] = objective.get(f"qd[{s.id},{t}]", 0.0) - s.cost_discharge
            objective[f"qc[{s.id},{t}]"] = objective.get(f"qc[{s.id},{t}]", 0.0) - s.cost_charge
    auto = _auto_dual_overrides(kkt, instance, big_m)
    big_m = dc_replace(big_m,
                       dual_overrides={**auto, **big_m.dual_overrides})
    problem, _builder = _assemble(kkt, big_m, objective=objective,
                                  strategic=(instance, placeholder))
    mip = solve_milp(problem, rel_gap=config.rel_gap,
                     time_limit=config.time_limit)
    if mip.status is MilpStatus.INFEASIBLE:
        # the KKT system always has a solution, so a too-small dual cap is
        # the only cause; signal the caller to widen and retry
        return None, True
    if mip.x is None:
        raise RuntimeError(f"strategic MILP failed: {mip.status.value}")

    # polish: fix all binaries, re-solve as an LP
    fixed = fix_binaries(problem, mip.x[list(problem.binary_indices)])
    lpsol = solve_lp(fixed)
    if lpsol.status is not LpStatus.OPTIMAL:
        raise RuntimeError("binary-fixed strategic LP not optimal")
    ci = {n: j for j, n in enumerate(problem.lp.col_names)}
    x = lpsol.x

    T = instance.horizon
    units = instance.storage_units

    def arr(fmt):
        return np.array([[x[ci[fmt.format(s.id, t)]] for t in range(T)]
                         for s in units]) if units else np.zeros((0, T))

    bids = StrategicBid(
        price_dis=arr("rho_d[{},{}]"), price_chs=arr("rho_c[{},{}]"),
        qty_dis=arr("bqd[{},{}]"), qty_chs=arr("bqc[{},{}]"),
        x_dis=np.round(arr("uxd[{},{}]")), x_chs=np.round(arr("uxc[{},{}]")),
    )
    bus_ids = [bus.id for bus in instance.buses]
    lmp = np.array([[x[ci[f"y[bal[{bid},{t}]]"]] for t in range(T)]
                    for bid in bus_ids])
    cleared = DispatchSolution(
        p_gen=np.array([[x[ci[f"pg[{g.id},{t}]"]] for t in range(T)]
                        for g in instance.generators]),
        p_wind=np.array([[x[ci[f"pw[{w.id},{t}]"]] for t in range(T)]
                         for w in instance.wind_farms]),
        load=np.array([[x[ci[f"d[{bid},{t}]"]] for t in range(T)]
                       for bid in bus_ids]),
        q_dis=arr("qd[{},{}]"), q_chs=arr("qc[{},{}]"),
        x_dis=np.round(arr("uxd[{},{}]")), x_chs=np.round(arr("uxc[{},{}]")),
        soc=arr("usoc[{},{}]"),
        flow=np.array([[x[ci[f"pf[{ln.id},{t}]"]] for t in range(T)]
                       for ln in instance.lines]),
        angle=np.array([[x[ci[f"th[{bid},{t}]"]] for t in range(T)]
                        for bid in bus_ids]),
        lmp=lmp, objective=0.0, gap=mip.rel_gap or 0.0,
    )
    cleared = dc_replace(cleared,
                         objective=social_welfare(instance, cleared))
    bus_pos = {bid: k for k, bid in enumerate(bus_ids)}
    profit_expost = 0.0
    for h, s in enumerate(units):
        lam = lmp[bus_pos[s.bus]]
        profit_expost += float(np.sum(
            lam * (cleared.q_dis[h] - cleared.q_chs[h])
            - s.cost_discharge * cleared.q_dis[h]
            - s.cost_charge * cleared.q_chs[h]))

    diag = _diagnostics(instance, kkt, bids, x, ci, big_m)
    profit = float(lpsol.objective)
    diag["profit_difference"] = abs(profit - profit_expost)
    saturated = diag["max_dual_over_m"] > 0.99
    sol = StrategicSolution(bids=bids, cleared=cleared, profit=profit,
                            profit_expost=profit_expost,
                            gap=mip.rel_gap or 0.0, diagnostics=diag)
    return sol, saturated


def _diagnostics(instance, kkt, bids, x, ci, big_m):
    lp = kkt.lp
    # lower-level objective with the optimized bid prices
    primal_obj = 0.0
    qcols = _storage_q_columns(instance)
    for j, cname in enumerate(lp.col_names):
        if cname not in qcols:
            primal_obj += lp.c[j] * x[ci[cname]]
    for s in instance.storage_units:
        for t in range(instance.horizon):
            primal_obj += x[ci[f"rho_c[{s.id},{t}]"]] * x[ci[f"qc[{s.id},{t}]"]]
            primal_obj -= x[ci[f"rho_d[{s.id},{t}]"]] * x[ci[f"qd[{s.id},{t}]"]]
    # dual objective: Phi_rest plus the lifted bid-row terms
    dual_obj = 0.0
    rest = linearize_objective(kkt, instance)
    for name, v in rest.items():
        if name.startswith(("y[", "mu[", "nu_")):
            dual_obj -= v * x[ci[name]]
    for s in instance.storage_units:
        for t in range(instance.horizon):
            dual_obj += x[ci[f"mu[bid_d[{s.id},{t}]]"]] * x[ci[f"bqd[{s.id},{t}]"]]
            dual_obj += x[ci[f"mu[bid_c[{s.id},{t}]]"]] * x[ci[f"bqc[{s.id},{t}]"]]

    sd_resid = abs(primal_obj - dual_obj) / (1.0 + abs(primal_obj))
    bid_rows = _bid_row_names(instance)
    cs_resid = 0.0
    max_dual_frac = 0.0
    for pair in kkt.pairs:
        if pair.name in bid_rows:
            # bid rows were lifted: the rhs is the bid-quantity variable
            which = "bqd" if pair.name.startswith("bid_d") else "bqc"
            inner = pair.name[pair.name.index("[") + 1:-1]
            slack = x[ci[f"{which}[{inner}]"]]
        else:
            slack = pair.slack_const
        for n, v in pair.slack_terms:
            slack += v * x[ci[n]]
        dual = x[ci[pair.dual]]
        scale = 1.0 + abs(pair.primal_m) if np.isfinite(pair.primal_m) else 1.0
        cs_resid = max(cs_resid, abs(slack * dual) / scale)
        md = big_m.dual_overrides.get(pair.dual, big_m.dual_default)
        max_dual_frac = max(max_dual_frac, dual / md)
    return {
        "strong_duality_residual": float(sd_resid),
        "max_complementarity_residual": float(cs_resid),
        "max_dual_over_m": float(max_dual_frac),
        "dual_big_m": float(big_m.dual_default),
    }
