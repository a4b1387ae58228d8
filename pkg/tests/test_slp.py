"""Single-level transform: scaling factors, envelopes, direct solve, duality gaps."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from seqlevels.instances import random_mimlsf, symmetric_chain, toy_t1
from seqlevels.model import SeqlevelsError
from seqlevels.lpkernel import SolveOptions
from seqlevels.oracle import oracle_solve, is_degenerate_instance
from seqlevels.slp import (
    build_mccormick,
    build_slp,
    scaling_factors,
    sdg,
    solve_direct,
)


def test_scaling_factors_paper_values():
    sf = scaling_factors(0.9999, 3)
    assert sf.factors == pytest.approx([0.9999, 9.999e-5, 1.0e-8], rel=1e-12)
    sf2 = scaling_factors(0.5, 2)
    assert sf2.factors == pytest.approx([0.5, 0.5], abs=0)


@settings(max_examples=60, deadline=None)
@given(st.floats(1e-6, 1 - 1e-6), st.integers(2, 6))
def test_scaling_factors_telescope(gamma, n):
    sf = scaling_factors(gamma, n)
    assert abs(float(np.sum(sf.factors)) - 1.0) <= 1e-12
    assert np.all(sf.factors > 0)


@pytest.mark.parametrize("gamma", [0.0, 1.0, -0.2, 1.5])
def test_scaling_factors_domain(gamma):
    with pytest.raises(ValueError):
        scaling_factors(gamma, 2)


def test_mccormick_empty_for_zero_block():
    mc = build_mccormick(np.zeros((3, 2)), 10.0, 0.5, 2)
    assert mc.n_s == 0
    assert mc.Y.shape == (0, 3)


def test_mccormick_envelope_rows():
    mc = build_mccormick(np.array([[2.0]]), 1.0, 0.5, 1)
    assert mc.pairs == [(0, 0)]
    assert mc.dvals == pytest.approx([2.0])
    assert mc.cap == pytest.approx(0.5)
    # rows: s <= cap z ; s <= y ; s >= y - cap(1-z), scaled form
    y, s_, z = 0.3, None, 1.0
    # at z=1 the envelopes pin s = y: row2 gives s <= y, row3 gives s >= y
    lhs2 = mc.Y[1] @ [y] + mc.K[1] @ [y]
    assert lhs2 == pytest.approx(0.0)
    rhs3 = 0.5 * (mc.e[2] + mc.E[2] @ [z])
    assert mc.Y[2] @ [y] + mc.K[2] @ [y] >= rhs3 - 1e-12
    # at z=0 row1 pins s = 0
    rhs1 = 0.5 * (mc.e[0] + mc.E[0] @ [0.0])
    assert mc.K[0] @ [0.0] >= rhs1 - 1e-12


def test_direct_solve_t1():
    sol = solve_direct(build_slp(toy_t1(), 0.9999))
    assert sol.status == "optimal"
    assert sol.z == pytest.approx([1.0])
    assert sol.objective_descaled == pytest.approx(0.5, abs=1e-8)
    assert [ls.primal[0] for ls in sol.levels] == pytest.approx([0.0, 0.0], abs=1e-9)


def test_direct_solve_t1_expensive_commitment():
    sol = solve_direct(build_slp(toy_t1(c_z=2.0), 0.9999))
    assert sol.z == pytest.approx([0.0])
    assert sol.objective_descaled == pytest.approx(1.0, abs=1e-8)


def test_direct_surfaces_infeasibility():
    from seqlevels.model import MimlsfProblem, MatrixBlock

    p = toy_t1()
    lvl = p.levels[0].__class__(
        c=p.levels[0].c,
        A=MatrixBlock.from_dense([[1.0], [-1.0]]),
        D=MatrixBlock(2, 1, ()),
        b=(1.0, 0.0),
    )
    sol = solve_direct(build_slp(MimlsfProblem(2, p.upper, (lvl, p.levels[1])), 0.9999))
    assert sol.status == "infeasible"


def test_gamma_underflow_guard():
    p = symmetric_chain(6)
    build_slp(p, 0.999)  # min factor 1e-15 still above the guard
    with pytest.raises(SeqlevelsError, match="Case-III"):
        build_slp(p, 0.9999)  # min factor 1e-20 underflows


def test_sdg_identity_and_percentage():
    from seqlevels.slp import LevelSolution

    mk = lambda p, d: LevelSolution(np.zeros(1), np.zeros(1), np.zeros(1), p, d)
    rep = sdg([mk(100.0, 100.0), mk(100.0, 99.0)])
    assert rep.per_level == pytest.approx([0.0, 1.0])
    assert rep.total == pytest.approx(1.0)
    rep0 = sdg([mk(0.0, 0.25)])
    assert rep0.absolute_flags == [True]
    assert rep0.per_level == pytest.approx([0.25])


def test_sdg_shrinks_with_gamma_on_t1():
    p = toy_t1(c_z=2.0)  # commitment too dear: followers run at nonzero levels
    totals = []
    for gamma in (0.9, 0.9999):
        sol = solve_direct(build_slp(p, gamma))
        totals.append(sdg(sol.levels).total)
    assert totals[1] < totals[0]
    assert totals[1] < 0.5


def test_feasibility_embedding():
    # the (z, x) block of an optimal SLP point satisfies every original
    # primal constraint
    for seed in (0, 3, 7, 11):
        p = random_mimlsf(seed, n=2, m=3, case=1)
        sol = solve_direct(build_slp(p, 0.9999))
        if sol.status != "optimal":
            continue
        z = sol.z
        for i, lvl in enumerate(p.levels):
            resid = lvl.A.dense() @ sol.levels[i].primal + lvl.D.dense() @ z \
                - np.asarray(lvl.b)
            if lvl.B is not None:
                resid += lvl.B.dense() @ sol.levels[i - 1].primal
            assert np.all(resid >= -1e-7)
            blk = p.primal_block(i)
            if blk is not None:
                r = blk.H.dense() @ z + blk.G.dense() @ sol.levels[i].primal \
                    - np.asarray(blk.b)
                assert np.all(r >= -1e-7)


def test_mccormick_exactness_at_solution():
    for seed in (2, 5, 9):
        p = random_mimlsf(seed, n=2, m=3, case=1)
        slp = build_slp(p, 0.9999)
        sol = solve_direct(slp, dual_polish=False)
        if sol.status != "optimal":
            continue
        ms = sol.milp
        for i, lvl in enumerate(slp.compiled.levels):
            if lvl.mc.n_s == 0:
                continue
            y = ms.x[slp.registry.y[i]]
            if np.any(y > 0.999 * lvl.mc.cap):
                continue  # exactness promised only with slack caps
            s = ms.x[slp.registry.s[i]]
            direct = sum(lvl.D[r, c] * y[r] * sol.z[c] for r, c in lvl.mc.pairs)
            assert float(lvl.mc.dvals @ s) == pytest.approx(direct, abs=1e-9)


def test_monotone_approximation_toward_oracle():
    from seqlevels.instances import trade_chain

    def sweep(p, best):
        errs = []
        for gamma in (0.9, 0.99, 0.999, 0.9999):
            sol = solve_direct(build_slp(p, gamma))
            errs.append(abs(sol.objective_descaled - best)
                        if sol.status == "optimal" else np.inf)
        return errs

    # instance with a steep cross-level trade: the drift is visible and
    # melts away as gamma -> 1
    p = trade_chain()
    rep = oracle_solve(p)
    errs = sweep(p, rep.best_objective)
    assert errs[0] > 1e-2
    assert all(b <= a + 1e-9 for a, b in zip(errs, errs[1:]))
    assert errs[-1] <= 1e-3

    # random instances without such trades sit at the float-noise floor for
    # every gamma; the final error must still be the sweep minimum up to noise
    for seed in (0, 3, 13):
        q = random_mimlsf(seed, n=2, m=3, case=1)
        rep = oracle_solve(q)
        if not rep.feasible or is_degenerate_instance(q):
            continue
        errs = sweep(q, rep.best_objective)
        assert errs[-1] <= min(errs) + 1e-9
        assert errs[-1] <= 1e-3


def test_dual_cap_warning_fires_when_bound_too_small():
    from seqlevels.model import LevelBlock, MatrixBlock, MimlsfProblem, UpperBlock

    # the level-1 dual must reach 1 + (1-gamma)/gamma; a cap of 1.00015
    # admits it with under 0.1% of slack, which is what the check flags
    lvl1 = LevelBlock(c=(1.0,), A=MatrixBlock.from_dense([[1.0]]),
                      D=MatrixBlock.from_dense([[1.0]]), b=(1.0,), dual_bound=1.00015)
    lvl2 = LevelBlock(c=(1.0,), A=MatrixBlock.from_dense([[1.0]]),
                      D=MatrixBlock(1, 1, ()), b=(0.0,),
                      B=MatrixBlock.from_dense([[-1.0]]), dual_bound=1.0)
    up = UpperBlock(m=1, c_z=(5.0,), c_x=((1.0,), (0.0,)))  # staying off is optimal
    p = MimlsfProblem(2, up, (lvl1, lvl2))
    sol = solve_direct(build_slp(p, 0.9999))
    assert sol.z == pytest.approx([0.0])
    assert sol.warnings


def test_slp_dump_roundtrip():
    from seqlevels.slp import slp_from_json, slp_to_json
    from seqlevels.lpkernel import milp_solve

    slp = build_slp(toy_t1(), 0.9999)
    obj = slp_to_json(slp)
    assert obj["kind"] == "single-level-milp"
    assert "z[0]" in obj["variables"]
    milp = slp_from_json(obj)
    a = milp_solve(slp.milp)
    b = milp_solve(milp)
    assert a.objective == pytest.approx(b.objective, abs=0)
