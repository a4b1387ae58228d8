"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines as they complete.  Every tolerance is pinned here; nothing is left
to later calibration.

The random families are seeded and filtered the same way throughout:
instances whose followers have non-unique optima (perturbation probe),
whose best two binary choices tie within 1e-3 relative, or whose
disagreement points carry a fat optimal face (sharp face-width test) are
excluded, because the sequential simulation and the joint single-level
solve may legitimately differ there.  Three-level instances use the
special upper objective: with the scaling pinned at 0.9999 the deepest
level's weight is 1e-8, and no float64 solver can hold a general
objective on that level to the stated tolerance at desk scale.
"""

import time

import numpy as np
import pytest

from seqlevels.benders import (
    CASE2_OBJECTIVE,
    FINITE,
    TRUE_OBJECTIVE,
    Scheme,
    benders_loop,
    build_bsp,
    guard_ray,
    scheme_applicable,
    separate,
    solve_bsp,
    solve_bsp1,
    solve_bsp2_ind,
    solve_bsp2_seq,
    solve_bsp_case3,
    value_function,
)
from seqlevels.instances import random_mimlsf, toy_t1
from seqlevels.lpkernel import GE, LE, INFEASIBLE, OPTIMAL, UNBOUNDED, LinearProgram, SolveOptions, lp_solve
from seqlevels.model import SeqlevelsError, classify_case
from seqlevels.oracle import (
    enumerate_z,
    is_degenerate_instance,
    oracle_solve,
    solution_ambiguous_at,
)
from seqlevels.slp import build_slp, compile_problem, scaling_factors, sdg, solve_direct
from randlp import random_box_lp, vertex_enumeration_optimum

GAMMA = 0.9999
OPTS = SolveOptions()


def report(num: int, ok: bool, text: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {num}: {text}")
    assert ok, text


def _family(seed: int):
    """Shared random-instance policy for the acceptance families."""
    n = 2 + (seed % 2)
    case = [1, 2, 3][seed % 3] if n == 2 else [2, 3][seed % 2]
    m = 2 + (seed % 5)
    return random_mimlsf(seed, n=n, m=m, case=case)


def _tied(orep) -> bool:
    objs = sorted(r.objective for r in orep.table if r.feasible)
    return len(objs) > 1 and objs[1] - objs[0] < 1e-3 * max(1.0, abs(objs[0]))


def test_criterion_1_oracle_equivalence():
    t0 = time.monotonic()
    compared = skipped = excused = 0
    seed = 0
    while compared < 200 and seed < 500:
        p = _family(seed)
        seed += 1
        try:
            orep = oracle_solve(p)
        except SeqlevelsError:
            skipped += 1
            continue
        sol = solve_direct(build_slp(p, GAMMA), OPTS)
        if not orep.feasible:
            assert sol.status == INFEASIBLE, f"seed {seed - 1}: feasibility flip"
            compared += 1
            continue
        if _tied(orep) or is_degenerate_instance(p):
            skipped += 1
            continue
        assert sol.status == OPTIMAL, f"seed {seed - 1}: {sol.status}"
        rel = abs(sol.objective_descaled - orep.best_objective) \
            / max(1.0, abs(orep.best_objective))
        zmatch = tuple(int(v) for v in sol.z) == orep.best_z
        if rel > 1e-3 or not zmatch:
            if solution_ambiguous_at(p, orep.best_z) or \
                    solution_ambiguous_at(p, tuple(int(v) for v in sol.z)):
                excused += 1
                continue
            raise AssertionError(
                f"seed {seed - 1}: rel={rel:.2e} z={tuple(int(v) for v in sol.z)} "
                f"vs {orep.best_z}")
        compared += 1
    wall = time.monotonic() - t0
    report(1, compared >= 200 and wall < 300.0,
           f"direct solve matched the oracle on {compared} instances "
           f"(skipped {skipped}, ambiguity-excused {excused}) in {wall:.0f}s")


def test_criterion_2_scheme_equivalence():
    counts = {1: 0, 2: 0, 3: 0}
    audited_lps = []
    seed = 2000
    gamma_n3 = scaling_factors(GAMMA, 3).factors[-1]
    while min(counts.values()) < 50 and seed < 2400:
        p = _family(seed)
        seed += 1
        case = classify_case(p).value
        comp = compile_problem(p, GAMMA)
        for zh in list(enumerate_z(p))[:3]:
            mono = guard_ray(comp, solve_bsp(comp, zh, OPTS, TRUE_OBJECTIVE),
                             zh, TRUE_OBJECTIVE, OPTS)
            seq = guard_ray(comp, solve_bsp2_seq(comp, zh, solve_bsp1(comp, zh, OPTS), OPTS),
                            zh, TRUE_OBJECTIVE, OPTS)
            assert mono.status == seq.status, (seed - 1, zh)
            if mono.status == FINITE:
                assert abs(mono.value - seq.value) <= 1e-6 * max(1.0, abs(mono.value)), \
                    (seed - 1, zh, mono.value, seq.value)
                counts[1] += 1
            if case >= 2:
                mono2 = guard_ray(comp, solve_bsp(comp, zh, OPTS, CASE2_OBJECTIVE),
                                  zh, CASE2_OBJECTIVE, OPTS)
                ind = guard_ray(comp, solve_bsp2_ind(comp, zh, OPTS),
                                zh, CASE2_OBJECTIVE, OPTS)
                assert mono2.status == ind.status, (seed - 1, zh)
                if mono2.status == FINITE:
                    assert abs(mono2.value - ind.value) <= 1e-6 * max(1.0, abs(mono2.value))
                    counts[2] += 1
            if case == 3:
                c3 = guard_ray(comp, solve_bsp_case3(comp, zh, OPTS, audit=audited_lps),
                               zh, CASE2_OBJECTIVE, OPTS)
                assert mono2.status == c3.status, (seed - 1, zh)
                if mono2.status == FINITE:
                    assert abs(mono2.value - c3.value) <= 1e-6 * max(1.0, abs(mono2.value))
                    counts[3] += 1
    assert min(counts.values()) >= 50
    # structural: no separated-scheme LP carries a deepest-scale coefficient
    floor = 100.0 * gamma_n3
    assert audited_lps
    for lp in audited_lps:
        for arr in (lp.A, lp.c):
            nz = np.abs(arr[arr != 0.0])
            if nz.size:
                assert nz.min() > floor
    report(2, True,
           f"composite schemes matched the monolithic subproblem on "
           f"{counts} pairs; {len(audited_lps)} separated-scheme LPs carry "
           f"no deep-scale coefficients")


def test_criterion_3_benders_correctness():
    loops = 0
    cuts_checked = 0
    seed = 1000
    instances = 0
    while instances < 100 and seed < 1300:
        p = _family(seed)
        seed += 1
        instances += 1
        slp = build_slp(p, GAMMA)
        sol = solve_direct(slp, OPTS)
        zs = list(enumerate_z(p))
        for scheme in Scheme:
            if not scheme_applicable(scheme, classify_case(p)):
                continue
            rep = benders_loop(p, GAMMA, scheme, OPTS)
            loops += 1
            if sol.status == INFEASIBLE:
                assert rep.status == INFEASIBLE, (seed - 1, scheme)
            else:
                assert rep.status == OPTIMAL, (seed - 1, scheme, rep.status)
                diff = abs(rep.objective_descaled - sol.objective_descaled)
                assert diff <= 1e-5 * max(1.0, abs(sol.objective_descaled)), \
                    (seed - 1, scheme, diff)
            lbs = [it.lb for it in rep.state.log]
            assert all(b >= a - 1e-9 for a, b in zip(lbs, lbs[1:])), (seed - 1, scheme)
            assert all(np.isinf(it.ub)
                       or it.lb <= it.ub + OPTS.mip_gap * max(1.0, abs(it.ub))
                       for it in rep.state.log), (seed - 1, scheme)
            mode = scheme.objective_mode
            fvals = {z: value_function(slp, z, mode, OPTS) for z in zs}
            for cut in rep.state.cuts:
                for z, fv in fvals.items():
                    if not np.isfinite(fv):
                        continue
                    at = cut.affine.at(z)
                    cuts_checked += 1
                    if cut.kind == "optimality":
                        assert at <= fv + 1e-6 * max(1.0, abs(fv)), \
                            (seed - 1, scheme, z, at, fv)
                    else:
                        assert at <= 1e-6, (seed - 1, scheme, z, at)
    report(3, loops >= 150,
           f"{loops} decomposition runs on {instances} instances matched the "
           f"direct solve; {cuts_checked} cut evaluations stayed valid")


def test_criterion_4_scaling_factors():
    checked = 0
    for gamma in (0.5, 0.9, 0.99, 0.999, 0.9999):
        for n in range(2, 7):
            sf = scaling_factors(gamma, n)
            assert abs(float(np.sum(sf.factors)) - 1.0) <= 1e-12, (gamma, n)
            assert np.all(sf.factors > 0.0), (gamma, n)
            checked += 1
    report(4, checked == 25, f"{checked} (gamma, n) pairs telescope to one")


def test_criterion_5_lp_kernel():
    rng = np.random.default_rng(20260808)
    optimal = infeasible = 0
    for _ in range(500):
        lp = random_box_lp(rng, n_max=4, m_max=5)
        sol = lp_solve(lp, OPTS)
        status, best = vertex_enumeration_optimum(lp, tol=1e-8)
        assert sol.status == status
        if status == OPTIMAL:
            assert abs(sol.objective - best) <= 1e-7 * max(1.0, abs(best))
            optimal += 1
        else:
            _verify_farkas(lp, sol.certificate)
            infeasible += 1
    unbounded = 0
    for _ in range(60):
        lp = random_box_lp(rng, n_max=4, m_max=3)
        lp = LinearProgram(lp.sense, np.append(lp.c, -1.0),
                           np.hstack([lp.A, np.zeros((lp.n_rows, 1))]),
                           list(lp.row_senses), lp.b,
                           np.append(lp.lb, 0.0), np.append(lp.ub, np.inf))
        sol = lp_solve(lp, OPTS)
        if sol.status == UNBOUNDED:
            _verify_ray(lp, sol.certificate)
            unbounded += 1
    report(5, optimal > 300 and infeasible > 20 and unbounded > 30,
           f"{optimal} optima matched vertex enumeration; {infeasible} Farkas "
           f"and {unbounded} recession certificates verified at 1e-9")


def _verify_farkas(lp, y, tol=1e-9):
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
            assert np.isfinite(lp.ub[j])
            sup += agg[j] * lp.ub[j]
        elif agg[j] < -tol * scale:
            assert np.isfinite(lp.lb[j])
            sup += agg[j] * lp.lb[j]
    assert y @ lp.b > sup + tol * scale


def _verify_ray(lp, d, tol=1e-9):
    scale = 1.0 + float(np.max(np.abs(d)))
    r = lp.A @ d
    for i, s in enumerate(lp.row_senses):
        if s == GE:
            assert r[i] >= -tol * scale
        elif s == LE:
            assert r[i] <= tol * scale
        else:
            assert abs(r[i]) <= tol * scale
    assert (lp.c @ d) * (1.0 if lp.sense == "min" else -1.0) < 0


def test_criterion_6_slp_asymptotics():
    from seqlevels.ucgca import make_tne5, solve_ucgca

    sweeps = {}
    p = toy_t1(c_z=2.0)  # the default toy runs its followers at zero
    totals = []
    for gamma in (0.9, 0.99, 0.999, 0.9999):
        sol = solve_direct(build_slp(p, gamma), OPTS)
        totals.append(sdg(sol.levels).total)
    sweeps["toy"] = totals

    inst = make_tne5()
    totals = []
    for gamma in (0.9, 0.99, 0.999, 0.9999):
        res = solve_ucgca(inst, gamma, OPTS)
        totals.append(float(sum(res.sdg_per_level)))
    sweeps["case study"] = totals

    for name, ts in sweeps.items():
        assert all(b < a for a, b in zip(ts, ts[1:])), (name, ts)
        assert ts[-1] < 0.5, (name, ts)
    report(6, True,
           "total duality gap strictly decreases with gamma and ends below "
           f"0.5%: toy {['%.3g' % t for t in sweeps['toy']]}, case study "
           f"{['%.3g' % t for t in sweeps['case study']]}")


def test_criterion_7_ucgca_vs_benchmark():
    from seqlevels.ucgca import (
        compare_metrics,
        financial_losses,
        make_tne5,
        solve_bm,
        solve_ucgca,
        with_stress,
    )

    base = make_tne5()
    stressed_losses = []
    rows = []
    for eta_g in (1.0, 1.4, 1.8, 2.2):
        inst = with_stress(base, eta_g=eta_g)
        ucr = solve_ucgca(inst, GAMMA, OPTS)
        bmr = solve_bm(inst, OPTS)
        m = compare_metrics(inst, ucr, bmr)
        assert financial_losses(inst, ucr) == 0.0, eta_g
        assert m.total["ucgca"] <= m.total["bm"] * (1.0 + 1e-6), \
            (eta_g, m.total)
        stressed_losses.append(m.losses["bm"])
        rows.append((eta_g, round(m.losses["bm"], 1),
                     round(m.total["ucgca"], 1), round(m.total["bm"], 1)))
    assert max(stressed_losses) > 0.0
    report(7, True,
           "aware commitment books zero losses at every grid point and never "
           f"exceeds the benchmark's total: {rows}")


def test_criterion_8_determinism(tmp_path):
    from seqlevels.cli import main
    from seqlevels.model import save_instance
    from seqlevels.ucgca import make_tne5, save_ucgca

    t1 = tmp_path / "t1.json"
    save_instance(toy_t1(), t1)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    argv = ["gamma-sweep", str(t1), "--gammas", "0.99,0.9999", "--seed", "3"]
    assert main(argv + ["-o", str(a)]) == 0
    assert main(argv + ["-o", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()

    inst = tmp_path / "tne5.json"
    save_ucgca(make_tne5(), inst)
    c, d = tmp_path / "c.csv", tmp_path / "d.csv"
    argv = ["ucgca", "compare", str(inst), "--seed", "3"]
    assert main(argv + ["-o", str(c)]) == 0
    assert main(argv + ["-o", str(d)]) == 0
    assert c.read_bytes() == d.read_bytes()
    report(8, True, "seeded reruns reproduce byte-identical CSV reports")
