"""LP/MILP kernel tests: examples, oracle cross-checks, certificates, determinism."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from seqlevels.lpkernel import (
    GE,
    LE,
    INFEASIBLE,
    OPTIMAL,
    UNBOUNDED,
    LinearProgram,
    MilpProblem,
    SolveOptions,
    dump_lp,
    lp_dual_of,
    lp_solve,
    milp_solve,
)
from randlp import random_box_lp, vertex_enumeration_optimum


def test_single_constraint_identity():
    lp = LinearProgram.make("min", [1.0], [[1.0]], [GE], [3.0])
    s = lp_solve(lp)
    assert s.status == OPTIMAL
    assert s.x[0] == pytest.approx(3.0, abs=1e-9)
    assert s.y[0] == pytest.approx(1.0, abs=1e-9)


def test_contradictory_bounds_farkas():
    lp = LinearProgram.make("min", [1.0], [[1.0], [-1.0]], [GE, GE], [3.0, -2.0])
    s = lp_solve(lp)
    assert s.status == INFEASIBLE
    verify_farkas(lp, s.certificate)


def test_unbounded_recession():
    lp = LinearProgram.make("min", [-1.0, 0.0], [[0.0, 1.0]], [LE], [5.0])
    s = lp_solve(lp)
    assert s.status == UNBOUNDED
    verify_ray(lp, s.certificate)


def verify_farkas(lp: LinearProgram, y: np.ndarray, tol: float = 1e-9):
    """The aggregated row must have box-sup strictly below y.b."""
    scale = 1.0 + float(np.max(np.abs(lp.b))) if lp.n_rows else 1.0
    for i, s in enumerate(lp.row_senses):
        if s == GE:
            assert y[i] >= -tol * scale
        elif s == LE:
            assert y[i] <= tol * scale
    agg = y @ lp.A
    sup = 0.0
    for j in range(lp.n_vars):
        if agg[j] > tol * scale:
            assert np.isfinite(lp.ub[j]), "positive coefficient on unbounded-above var"
            sup += agg[j] * lp.ub[j]
        elif agg[j] < -tol * scale:
            assert np.isfinite(lp.lb[j]), "negative coefficient on unbounded-below var"
            sup += agg[j] * lp.lb[j]
        else:
            sup += agg[j] * np.clip(0.0, lp.lb[j], lp.ub[j])
    assert y @ lp.b > sup + tol * scale


def verify_ray(lp: LinearProgram, d: np.ndarray, tol: float = 1e-9):
    scale = 1.0 + float(np.max(np.abs(d)))
    r = lp.A @ d
    for i, s in enumerate(lp.row_senses):
        if s == GE:
            assert r[i] >= -tol * scale
        elif s == LE:
            assert r[i] <= tol * scale
        else:
            assert abs(r[i]) <= tol * scale
    for j in range(lp.n_vars):
        if d[j] > tol:
            assert not np.isfinite(lp.ub[j])
        if d[j] < -tol:
            assert not np.isfinite(lp.lb[j])
    drift = float(lp.c @ d)
    assert drift < -tol if lp.sense == "min" else drift > tol


def verify_optimal(lp: LinearProgram, sol, tol: float = 1e-7):
    scale = 1.0 + float(np.max(np.abs(lp.b))) if lp.n_rows else 1.0
    r = lp.A @ sol.x if lp.n_rows else np.zeros(0)
    for i, s in enumerate(lp.row_senses):
        if s == GE:
            assert r[i] >= lp.b[i] - tol * scale
        elif s == LE:
            assert r[i] <= lp.b[i] + tol * scale
        else:
            assert abs(r[i] - lp.b[i]) <= tol * scale
    assert np.all(sol.x >= lp.lb - tol * scale)
    assert np.all(sol.x <= lp.ub + tol * scale)
    sgn = 1.0 if lp.sense == "min" else -1.0
    for i, s in enumerate(lp.row_senses):
        if s == GE:
            assert sgn * sol.y[i] >= -tol * scale
        elif s == LE:
            assert sgn * sol.y[i] <= tol * scale
        # complementary slackness
        assert abs(sol.y[i]) * abs(r[i] - lp.b[i]) <= 1e-5 * scale * (1 + abs(sol.y[i]))


def test_random_lps_match_vertex_enumeration():
    rng = np.random.default_rng(1234)
    n_feas = n_inf = 0
    for _ in range(120):
        lp = random_box_lp(rng, n_max=4, m_max=5)
        sol = lp_solve(lp)
        status, best = vertex_enumeration_optimum(lp, tol=1e-8)
        assert sol.status == status, dump_lp(lp)
        if status == OPTIMAL:
            n_feas += 1
            assert sol.objective == pytest.approx(best, abs=1e-7)
            verify_optimal(lp, sol)
        else:
            n_inf += 1
            verify_farkas(lp, sol.certificate)
    assert n_feas > 20 and n_inf > 5  # the generator really mixes both


def test_textbook_dual_pair():
    lp = LinearProgram.make("min", [1.0], [[1.0]], [GE], [3.0])
    dual = lp_dual_of(lp)
    s, sd = lp_solve(lp), lp_solve(dual)
    assert s.objective == pytest.approx(sd.objective, abs=1e-9) == pytest.approx(3.0)


def test_infeasible_primal_unbounded_dual():
    lp = LinearProgram.make("min", [1.0], [[1.0], [-1.0]], [GE, GE], [3.0, -2.0])
    assert lp_solve(lp).status == INFEASIBLE
    dual = lp_dual_of(lp)
    sd = lp_solve(dual)
    assert sd.status == UNBOUNDED
    verify_ray(dual, sd.certificate)


def test_random_primal_dual_value_match():
    rng = np.random.default_rng(77)
    matched = 0
    for _ in range(100):
        n = int(rng.integers(2, 5))
        m = int(rng.integers(1, 5))
        A = np.round(rng.uniform(-1, 2, size=(m, n)), 2)
        c = np.round(rng.uniform(0.1, 3, size=n), 2)  # c > 0 keeps x>=0 problems bounded
        b = np.round(rng.uniform(-1, 2, size=m), 2)
        senses = [GE if rng.random() < 0.7 else LE for _ in range(m)]
        lp = LinearProgram.make("min", c, A, senses, b)
        s = lp_solve(lp)
        sd = lp_solve(lp_dual_of(lp))
        if s.status == OPTIMAL:
            assert sd.status == OPTIMAL
            assert s.objective == pytest.approx(sd.objective, abs=1e-7)
            matched += 1
        elif s.status == INFEASIBLE:
            assert sd.status in (UNBOUNDED, INFEASIBLE)
    assert matched > 40


def test_weak_duality_on_optimal_pairs():
    rng = np.random.default_rng(5150)
    for _ in range(40):
        lp = random_box_lp(rng, n_max=4, m_max=4)
        s = lp_solve(lp)
        if s.status != OPTIMAL:
            continue
        # duals priced against rows; add bound contributions for the lagrangian bound
        red = lp.c - s.y @ lp.A
        bound = float(s.y @ lp.b)
        bound += float(np.sum(np.where(red > 0, red * lp.lb, red * lp.ub)))
        assert bound <= s.objective + 1e-7 * (1 + abs(s.objective))


def test_determinism():
    rng = np.random.default_rng(9)
    for _ in range(20):
        lp = random_box_lp(rng)
        a, b = lp_solve(lp), lp_solve(lp)
        assert a.status == b.status
        if a.status == OPTIMAL:
            assert a.objective == b.objective
            assert np.array_equal(a.x, b.x)


def test_milp_integral_relaxation_solved_at_root():
    lp = LinearProgram.make("min", [1.0, 1.0], [[1.0, 0.0], [0.0, 1.0]], [GE, GE],
                            [1.0, 0.0], [0, 0], [1, 1])
    ms = milp_solve(MilpProblem(lp, [0, 1]))
    assert ms.status == OPTIMAL
    assert ms.nodes == 1
    assert ms.objective == pytest.approx(1.0)


def test_milp_knapsack():
    lp = LinearProgram.make("max", [3.0, 2.0], [[2.0, 2.0]], [LE], [3.0], [0, 0], [1, 1])
    ms = milp_solve(MilpProblem(lp, [0, 1]))
    assert ms.status == OPTIMAL
    assert ms.objective == pytest.approx(3.0)
    assert np.array_equal(ms.x, [1.0, 0.0])


def test_milp_infeasible_binary_system():
    lp = LinearProgram.make("min", [1.0], [[1.0], [1.0]], [GE, LE], [1.0, 0.0], [0], [1])
    ms = milp_solve(MilpProblem(lp, [0]))
    assert ms.status == INFEASIBLE


def test_milp_matches_enumeration():
    rng = np.random.default_rng(31337)
    for _ in range(40):
        n = int(rng.integers(2, 6))
        m = int(rng.integers(1, 4))
        A = np.round(rng.uniform(-2, 2, size=(m, n)), 2)
        c = np.round(rng.uniform(-2, 2, size=n), 2)
        b = np.round(rng.uniform(-1, n, size=m), 2)
        senses = [LE if rng.random() < 0.6 else GE for _ in range(m)]
        lp = LinearProgram.make("min", c, A, senses, b, np.zeros(n), np.ones(n))
        ms = milp_solve(MilpProblem(lp, list(range(n))))
        best, feas = np.inf, False
        for bits in range(2 ** n):
            x = np.array([(bits >> j) & 1 for j in range(n)], dtype=float)
            ok = all(
                (s == GE and A[i] @ x >= b[i] - 1e-9) or (s == LE and A[i] @ x <= b[i] + 1e-9)
                for i, s in enumerate(senses)
            )
            if ok:
                feas = True
                best = min(best, float(c @ x))
        if feas:
            assert ms.status == OPTIMAL
            assert ms.objective == pytest.approx(best, abs=1e-7)
            assert ms.gap <= 1e-6
            assert ms.bound <= ms.objective + 1e-9
        else:
            assert ms.status == INFEASIBLE


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_certificates_verify_fuzz(seed):
    rng = np.random.default_rng(seed)
    lp = random_box_lp(rng, n_max=4, m_max=5)
    s = lp_solve(lp)
    if s.status == INFEASIBLE:
        verify_farkas(lp, s.certificate)
    elif s.status == OPTIMAL:
        verify_optimal(lp, s)


def test_solve_options_reject_nonpositive_tols():
    with pytest.raises(ValueError):
        SolveOptions(feas_tol=0.0)


def test_dump_lp_roundtrippable_text():
    lp = LinearProgram.make("min", [1.0, -2.5], [[1.0, 3.0]], [LE], [4.0])
    text = dump_lp(lp)
    assert "min 2 vars 1 rows" in text
    assert "r0 le 4" in text
