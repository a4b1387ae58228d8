"""Brute-force reference: enumeration, probes, consistency with the direct solve."""

import numpy as np
import pytest

from seqlevels.instances import random_mimlsf, toy_t1
from seqlevels.model import (
    CouplingBlock,
    LevelBlock,
    MatrixBlock,
    MimlsfProblem,
    SeqlevelsError,
    UpperBlock,
)
from seqlevels.oracle import (
    degeneracy_probe,
    enumerate_z,
    is_degenerate_instance,
    oracle_solve,
    solution_ambiguous_at,
)
from seqlevels.slp import build_slp, solve_direct


def test_t1_table_and_best():
    rep = oracle_solve(toy_t1())
    assert {r.z: r.objective for r in rep.table} == {(0,): pytest.approx(1.0),
                                                     (1,): pytest.approx(0.5)}
    assert rep.best_z == (1,)
    assert rep.best_objective == pytest.approx(0.5)


def test_t1_expensive_commitment():
    rep = oracle_solve(toy_t1(c_z=2.0))
    assert rep.best_z == (0,)
    assert rep.best_objective == pytest.approx(1.0)


def _t1_with_impossible_coupling() -> MimlsfProblem:
    p = toy_t1()
    blk = CouplingBlock(
        H=MatrixBlock(1, 1, ()),
        G=MatrixBlock.from_dense([[-1.0]]),
        b=(1.0,),  # -x1 >= 1: impossible for x1 >= 0
    )
    up = UpperBlock(m=1, c_z=p.upper.c_z, c_x=p.upper.c_x,
                    primal_coupling=(blk, None))
    return MimlsfProblem(2, up, p.levels)


def test_all_z_infeasible_direct_agrees():
    p = _t1_with_impossible_coupling()
    rep = oracle_solve(p)
    assert not rep.feasible
    assert all(not r.feasible for r in rep.table)
    sol = solve_direct(build_slp(p, 0.9999))
    assert sol.status == "infeasible"


def test_probe_clean_on_t1():
    assert not degeneracy_probe(toy_t1(), (0,))
    assert not solution_ambiguous_at(toy_t1(), (0,))


def _tied_cost_level() -> MimlsfProblem:
    # min x1 + x2 s.t. x1 + x2 >= 1: a whole edge of optima
    lvl1 = LevelBlock(
        c=(1.0, 1.0),
        A=MatrixBlock.from_dense([[1.0, 1.0]]),
        D=MatrixBlock(1, 1, ()),
        b=(1.0,),
    )
    lvl2 = LevelBlock(
        c=(1.0,),
        A=MatrixBlock.from_dense([[1.0]]),
        D=MatrixBlock(1, 1, ()),
        b=(0.0,),
        B=MatrixBlock.from_dense([[-1.0, 0.0]]),
    )
    up = UpperBlock(m=1, c_z=(0.5,), c_x=((1.0, 1.0), (0.0,)))
    return MimlsfProblem(2, up, (lvl1, lvl2))


def test_probe_flags_tied_costs():
    p = _tied_cost_level()
    assert degeneracy_probe(p, (0,))
    assert is_degenerate_instance(p)
    assert solution_ambiguous_at(p, (0,))


def test_enum_cap():
    p = random_mimlsf(0, n=2, m=3, case=1)
    with pytest.raises(SeqlevelsError, match="cap"):
        oracle_solve(p, enum_cap=2)


def test_unbounded_follower_aborts():
    lvl1 = LevelBlock(
        c=(-1.0,),  # pays to run away
        A=MatrixBlock.from_dense([[1.0]]),
        D=MatrixBlock.from_dense([[1.0]]),
        b=(1.0,),
    )
    p = toy_t1()
    bad = MimlsfProblem(2, p.upper, (lvl1, p.levels[1]))
    with pytest.raises(SeqlevelsError, match="unbounded"):
        oracle_solve(bad)


def test_z_enumeration_respects_upper_rows():
    p = random_mimlsf(12, n=2, m=3, case=1, z_rows_prob=1.0)
    assert p.upper.z_feasible is not None
    zs = list(enumerate_z(p))
    assert zs
    A = p.upper.z_feasible.A.dense()
    for z in zs:
        assert A @ np.asarray(z, dtype=float) >= np.asarray(p.upper.z_feasible.b) - 1e-12


def test_csv_dump_has_one_row_per_z():
    rep = oracle_solve(toy_t1())
    text = rep.to_csv()
    lines = text.strip().splitlines()
    assert lines[0].startswith("z,feasible,objective")
    assert len(lines) == 3


def test_direct_matches_oracle_on_fixed_suite():
    checked = 0
    for seed in range(10):
        p = random_mimlsf(seed, n=2, m=3, case=1 + seed % 3)
        try:
            rep = oracle_solve(p)
        except SeqlevelsError:
            continue
        sol = solve_direct(build_slp(p, 0.9999))
        if not rep.feasible:
            assert sol.status == "infeasible"
            checked += 1
            continue
        if is_degenerate_instance(p):
            continue
        assert sol.status == "optimal"
        assert sol.objective_descaled == pytest.approx(rep.best_objective, rel=1e-3, abs=1e-6)
        checked += 1
    assert checked >= 5
