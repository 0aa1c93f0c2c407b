"""MILP layer: brute-force enumeration oracle over random small problems,
gap reporting and binary fixing."""
import itertools

import numpy as np
import pytest

from gridarb.lp import LpBuilder, LpError, LpStatus, solve_lp
from gridarb.milp import (DEFAULT_REL_GAP, MilpProblem, MilpStatus,
                          fix_binaries, solve_milp)

from conftest import rng_for


def knapsack():
    b = LpBuilder()
    values = [6.0, 10.0, 12.0]
    weights = [1.0, 2.0, 3.0]
    idx = [b.add_var(f"x{j}", 0.0, 1.0, obj=values[j]) for j in range(3)]
    b.add_row("cap", [(j, w) for j, w in zip(idx, weights)], "<=", 4.0)
    return MilpProblem(lp=b.build(), binary_indices=tuple(idx))


def test_knapsack_optimum():
    sol = solve_milp(knapsack())
    assert sol.status is MilpStatus.OPTIMAL
    # items 1 and 3 fill the capacity exactly and pay 18; 2+3 exceed it
    assert sol.objective == pytest.approx(18.0)
    assert np.round(sol.x[:3]) == pytest.approx([1.0, 0.0, 1.0])
    assert sol.rel_gap <= DEFAULT_REL_GAP
    assert sol.node_count >= 1


def test_check_rejects_bad_binary():
    b = LpBuilder()
    b.add_var("x", 0.0, 2.0)
    with pytest.raises(LpError):
        MilpProblem(lp=b.build(), binary_indices=(0,)).check()
    with pytest.raises(LpError):
        MilpProblem(lp=b.build(), binary_indices=(5,)).check()


def test_infeasible_milp():
    b = LpBuilder()
    x = b.add_var("x", 0.0, 1.0)
    y = b.add_var("y", 0.0, 1.0)
    b.add_row("r", [(x, 1.0), (y, 1.0)], ">=", 3.0)
    sol = solve_milp(MilpProblem(lp=b.build(), binary_indices=(0, 1)))
    assert sol.status is MilpStatus.INFEASIBLE
    assert sol.x is None


def test_fix_binaries_roundtrip():
    prob = knapsack()
    sol = solve_milp(prob)
    lp = fix_binaries(prob, sol.x[:3])
    lps = solve_lp(lp)
    assert lps.status is LpStatus.OPTIMAL
    assert lps.objective == pytest.approx(sol.objective)
    with pytest.raises(ValueError):
        fix_binaries(prob, [0.5, 0.0, 1.0])


def random_milp(rng):
    n_bin = int(rng.integers(1, 13))
    n_rows = int(rng.integers(1, 5))
    b = LpBuilder()
    bins = [b.add_var(f"b{j}", 0.0, 1.0, obj=float(rng.normal()))
            for j in range(n_bin)]
    for i in range(n_rows):
        a = rng.normal(size=n_bin)
        # rhs centered near zero so some instances come out infeasible
        rhs = float(rng.uniform(-1.0, n_bin / 2.0))
        b.add_row(f"r{i}", list(enumerate(a)), "<=", rhs)
    return MilpProblem(lp=b.build(), binary_indices=tuple(bins))


def brute_force(problem: MilpProblem):
    """Enumerate every binary assignment of a pure-binary problem."""
    lp = problem.lp
    A = lp.matrix().toarray()
    best = None
    for assign in itertools.product((0.0, 1.0), repeat=lp.n_vars):
        x = np.asarray(assign)
        if np.all(A @ x <= lp.rhs + 1e-9):
            val = float(lp.c @ x)
            if best is None or val > best:
                best = val
    return best


def test_solve_milp_matches_brute_force():
    rng = rng_for("milp-oracle")
    solved = 0
    for case in range(200):
        prob = random_milp(rng)
        sol = solve_milp(prob, rel_gap=0.0)
        oracle = brute_force(prob)
        if oracle is None:
            assert sol.status is MilpStatus.INFEASIBLE, f"case {case}"
            continue
        assert sol.status is MilpStatus.OPTIMAL, f"case {case}"
        scale = max(1.0, abs(oracle))
        assert abs(sol.objective - oracle) / scale <= 1e-6, f"case {case}"
        solved += 1
    assert solved >= 150
