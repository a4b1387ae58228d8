"""Data model: validation, case classification, relaxation bound, (de)serialization."""

import json

import numpy as np
import pytest

from seqlevels.instances import random_mimlsf, toy_t1
from seqlevels.model import (
    AssumptionViolation,
    CaseClass,
    ComplicatingBlock,
    LevelBlock,
    MatrixBlock,
    MimlsfProblem,
    SchemaError,
    UpperBlock,
    classify_case,
    load_instance,
    problem_from_json,
    problem_to_json,
    relaxed_bound,
    save_instance,
    validate_problem,
)


def test_t1_is_valid_by_construction():
    assert validate_problem(toy_t1()).ok


def test_dimension_mismatch_reported():
    p = toy_t1()
    bad = p.levels[0].__class__(
        c=p.levels[0].c,
        A=p.levels[0].A,
        D=MatrixBlock(1, 2, ((0, 1, 1.0),)),  # m+1 columns
        b=p.levels[0].b,
    )
    rep = validate_problem(MimlsfProblem(2, p.upper, (bad, p.levels[1])))
    assert any("level[0].D" in msg for msg in rep.issues)
    assert len([m for m in rep.issues if "level[0].D" in m]) == 1


def test_nonfinite_entry_reported():
    p = toy_t1()
    bad = p.levels[0].__class__(
        c=p.levels[0].c,
        A=MatrixBlock(1, 1, ((0, 0, float("nan")),)),
        D=p.levels[0].D,
        b=p.levels[0].b,
    )
    rep = validate_problem(MimlsfProblem(2, p.upper, (bad, p.levels[1])))
    assert any("non-finite" in msg for msg in rep.issues)


def test_duplicate_entry_reported():
    mb = MatrixBlock(2, 2, ((0, 0, 1.0), (0, 0, 2.0)))
    assert any("duplicate" in msg for msg in mb.issues("M"))


def test_classify_case3_then_2_then_1():
    p = toy_t1()
    assert classify_case(p) == CaseClass.CASE_III
    dcomp = ComplicatingBlock(
        MatrixBlock.from_dense([[0.0]]),
        (MatrixBlock.from_dense([[1.0]]), MatrixBlock.from_dense([[1.0]])),
        (-100.0,),
    )
    up2 = UpperBlock(m=1, c_z=p.upper.c_z, c_x=p.upper.c_x, dual_complicating=dcomp)
    assert classify_case(MimlsfProblem(2, up2, p.levels)) == CaseClass.CASE_II
    up1 = UpperBlock(m=1, c_z=p.upper.c_z, c_x=((1.0,), (0.5,)))
    assert classify_case(MimlsfProblem(2, up1, p.levels)) == CaseClass.CASE_I


def test_classify_stable_under_roundtrip(tmp_path):
    for seed in range(6):
        p = random_mimlsf(seed, n=2, m=3, case=1 + seed % 3, calibrate=False)
        before = classify_case(p)
        path = tmp_path / f"i{seed}.json"
        save_instance(p, path)
        q = load_instance(path)
        assert classify_case(q) == before == classify_case(p)


def test_relaxed_bound_t1():
    assert relaxed_bound(toy_t1()) == pytest.approx(0.5, abs=1e-9)


def test_relaxed_bound_infeasible():
    p = toy_t1()
    lvl = p.levels[0].__class__(
        c=p.levels[0].c,
        A=MatrixBlock.from_dense([[1.0], [-1.0]]),
        D=MatrixBlock(2, 1, ()),
        b=(1.0, 0.0),  # x >= 1 and x <= 0
    )
    bad = MimlsfProblem(2, p.upper, (lvl, p.levels[1]))
    with pytest.raises(AssumptionViolation) as exc:
        relaxed_bound(bad)
    assert exc.value.status == "infeasible"


def test_relaxed_bound_unbounded():
    p = toy_t1()
    up = UpperBlock(m=1, c_z=p.upper.c_z, c_x=((1.0,), (-1.0,)))  # pays to inflate x2
    with pytest.raises(AssumptionViolation) as exc:
        relaxed_bound(MimlsfProblem(2, up, p.levels))
    assert exc.value.status == "unbounded"


def test_relaxed_bound_below_oracle_rows():
    from seqlevels.oracle import oracle_solve

    for seed in (1, 4, 8):
        p = random_mimlsf(seed, n=2, m=3, case=1)
        lo = relaxed_bound(p)
        rep = oracle_solve(p)
        for row in rep.table:
            if row.feasible:
                assert lo <= row.objective + 1e-7


def test_roundtrip_identity(tmp_path):
    for seed in range(8):
        p = random_mimlsf(seed, n=2 + seed % 2, m=3, case=1 + seed % 3, calibrate=False)
        path = tmp_path / "inst.json"
        save_instance(p, path)
        assert load_instance(path) == p


def test_missing_levels_field():
    obj = problem_to_json(toy_t1())
    del obj["levels"]
    with pytest.raises(SchemaError, match="levels"):
        problem_from_json(obj)


def test_n1_rejected():
    obj = problem_to_json(toy_t1())
    obj["n"] = 1
    with pytest.raises(SchemaError, match="n >= 2 required"):
        problem_from_json(obj)


def test_parse_error_carries_location(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{\n  \"version\": 1,\n")
    with pytest.raises(SchemaError, match="line"):
        load_instance(path)


def test_version_mismatch(tmp_path):
    obj = problem_to_json(toy_t1())
    obj["version"] = 99
    path = tmp_path / "v99.json"
    path.write_text(json.dumps(obj))
    with pytest.raises(SchemaError, match="version"):
        load_instance(path)
