"""MIMLSF problem data model, validation, case classification, (de)serialization.

An instance describes an upper-level binary problem over z coupled to n
sequential follower LPs.  Followers are chained: level i receives the
previous level's primal vector and the upper binaries through its rows
``A_i x_i + B_i x_{i-1} + D_i z >= b_i``.  The upper level may also carry
primal coupling rows (on z and one level's x), dual coupling rows (on z
and one level's duals), and dual complicating rows (on z and the duals of
every level at once).

All matrices are stored sparsely as (row, col, value) triplets and
expanded to dense numpy arrays on demand; instances are immutable by
convention after construction and safe to share across solves.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from .lpkernel import GE, LE, EQ, INFEASIBLE, UNBOUNDED, LinearProgram, SolveOptions, lp_solve

SCHEMA_VERSION = 1
DEFAULT_DUAL_BOUND = 1e4


class SeqlevelsError(Exception):
    """Base class for toolkit errors."""


class SchemaError(SeqlevelsError):
    """Instance file does not match the JSON schema."""


class AssumptionViolation(SeqlevelsError):
    """The primal relaxation is infeasible or unbounded; solver refuses to proceed."""

    def __init__(self, status: str):
        self.status = status
        super().__init__(f"primal relaxation is {status}")


class CaseClass(IntEnum):
    """Most specific structure class; higher values are more special."""

    CASE_I = 1
    CASE_II = 2
    CASE_III = 3


@dataclass(frozen=True)
class MatrixBlock:
    rows: int
    cols: int
    entries: tuple[tuple[int, int, float], ...]

    @staticmethod
    def from_dense(a) -> "MatrixBlock":
        a = np.asarray(a, dtype=float)
        if a.ndim != 2:
            raise ValueError("from_dense expects a 2-D array")
        ent = tuple(
            (int(i), int(j), float(a[i, j]))
            for i in range(a.shape[0])
            for j in range(a.shape[1])
            if a[i, j] != 0.0
        )
        return MatrixBlock(a.shape[0], a.shape[1], ent)

    def dense(self) -> np.ndarray:
        out = np.zeros((self.rows, self.cols))
        for i, j, v in self.entries:
            out[i, j] = v
        return out

    def issues(self, name: str) -> list[str]:
        seen = set()
        bad = []
        for i, j, v in self.entries:
            if not (0 <= i < self.rows and 0 <= j < self.cols):
                bad.append(f"{name}: entry ({i},{j}) out of range {self.rows}x{self.cols}")
            if (i, j) in seen:
                bad.append(f"{name}: duplicate entry at ({i},{j})")
            seen.add((i, j))
            if not np.isfinite(v):
                bad.append(f"{name}: non-finite value at ({i},{j})")
        return bad


@dataclass(frozen=True)
class CouplingBlock:
    """One block of upper rows  H z + G w >= b  on z and one level's vector w."""

    H: MatrixBlock
    G: MatrixBlock
    b: tuple[float, ...]


@dataclass(frozen=True)
class ComplicatingBlock:
    """Upper rows  R z + sum_i S_i y_i >= q  over the duals of every level."""

    R: MatrixBlock
    S: tuple[MatrixBlock, ...]
    q: tuple[float, ...]


@dataclass(frozen=True)
class LinearSystem:
    """Rows  A z (sense) b  restricting the binary vector z."""

    A: MatrixBlock
    b: tuple[float, ...]
    senses: tuple[str, ...]


@dataclass(frozen=True)
class LevelBlock:
    c: tuple[float, ...]
    A: MatrixBlock
    D: MatrixBlock
    b: tuple[float, ...]
    B: MatrixBlock | None = None
    dual_bound: float = DEFAULT_DUAL_BOUND

    @property
    def n_x(self) -> int:
        return len(self.c)

    @property
    def n_rows(self) -> int:
        return len(self.b)


@dataclass(frozen=True)
class UpperBlock:
    m: int
    c_z: tuple[float, ...]
    c_x: tuple[tuple[float, ...], ...]
    z_feasible: LinearSystem | None = None
    primal_coupling: tuple[CouplingBlock | None, ...] | None = None
    dual_coupling: tuple[CouplingBlock | None, ...] | None = None
    dual_complicating: ComplicatingBlock | None = None


@dataclass(frozen=True)
class MimlsfProblem:
    n: int
    upper: UpperBlock
    levels: tuple[LevelBlock, ...]

    @property
    def m(self) -> int:
        return self.upper.m

    def primal_block(self, i: int) -> CouplingBlock | None:
        pc = self.upper.primal_coupling
        return pc[i] if pc is not None else None

    def dual_block(self, i: int) -> CouplingBlock | None:
        dc = self.upper.dual_coupling
        return dc[i] if dc is not None else None


@dataclass
class ValidationReport:
    issues: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.issues


def _vec_issues(name: str, v, want_len: int | None = None) -> list[str]:
    out = []
    arr = np.asarray(v, dtype=float)
    if want_len is not None and arr.size != want_len:
        out.append(f"{name}: length {arr.size}, expected {want_len}")
    if arr.size and not np.all(np.isfinite(arr)):
        out.append(f"{name}: non-finite value")
    return out


def validate_problem(p: MimlsfProblem) -> ValidationReport:
    """Structural validation; every defect becomes one report entry."""
    rep = ValidationReport()
    add = rep.issues.extend
    m = p.upper.m
    if p.n < 2:
        rep.issues.append(f"n = {p.n}: at least two sequential levels required")
    if len(p.levels) != p.n:
        rep.issues.append(f"levels: got {len(p.levels)}, expected n = {p.n}")
    add(_vec_issues("upper.c_z", p.upper.c_z, m))
    if len(p.upper.c_x) != len(p.levels):
        rep.issues.append(f"upper.c_x: {len(p.upper.c_x)} blocks, expected {len(p.levels)}")
    zf = p.upper.z_feasible
    if zf is not None:
        add(zf.A.issues("z_feasible.A"))
        if zf.A.cols != m:
            rep.issues.append(f"z_feasible.A: {zf.A.cols} cols, expected m = {m}")
        add(_vec_issues("z_feasible.b", zf.b, zf.A.rows))
        if len(zf.senses) != zf.A.rows:
            rep.issues.append("z_feasible: senses length mismatch")
        if any(s not in (GE, LE, EQ) for s in zf.senses):
            rep.issues.append("z_feasible: bad sense")

    for i, lvl in enumerate(p.levels):
        tag = f"level[{i}]"
        add(_vec_issues(f"{tag}.c", lvl.c))
        add(_vec_issues(f"{tag}.b", lvl.b))
        add(lvl.A.issues(f"{tag}.A"))
        add(lvl.D.issues(f"{tag}.D"))
        if lvl.A.rows != lvl.n_rows or lvl.A.cols != lvl.n_x:
            rep.issues.append(
                f"{tag}.A: shape {lvl.A.rows}x{lvl.A.cols}, expected {lvl.n_rows}x{lvl.n_x}")
        if lvl.D.rows != lvl.n_rows or lvl.D.cols != m:
            rep.issues.append(
                f"{tag}.D: shape {lvl.D.rows}x{lvl.D.cols}, expected {lvl.n_rows}x{m}")
        if i == 0 and lvl.B is not None:
            rep.issues.append(f"{tag}.B: first level cannot chain backwards")
        if i >= 1:
            if lvl.B is None:
                rep.issues.append(f"{tag}.B: missing chain block")
            else:
                add(lvl.B.issues(f"{tag}.B"))
                prev = p.levels[i - 1].n_x if i - 1 < len(p.levels) else None
                if lvl.B.rows != lvl.n_rows or (prev is not None and lvl.B.cols != prev):
                    rep.issues.append(
                        f"{tag}.B: shape {lvl.B.rows}x{lvl.B.cols}, "
                        f"expected {lvl.n_rows}x{prev}")
        if not lvl.dual_bound > 0:
            rep.issues.append(f"{tag}.dual_bound: must be positive")
        if i < len(p.upper.c_x):
            add(_vec_issues(f"upper.c_x[{i}]", p.upper.c_x[i], lvl.n_x))

    for kind, blocks, dim_of in (
        ("primal_coupling", p.upper.primal_coupling, lambda lvl: lvl.n_x),
        ("dual_coupling", p.upper.dual_coupling, lambda lvl: lvl.n_rows),
    ):
        if blocks is None:
            continue
        if len(blocks) != len(p.levels):
            rep.issues.append(f"{kind}: {len(blocks)} blocks, expected {len(p.levels)}")
            continue
        for i, blk in enumerate(blocks):
            if blk is None:
                continue
            tag = f"{kind}[{i}]"
            add(blk.H.issues(f"{tag}.H"))
            add(blk.G.issues(f"{tag}.G"))
            add(_vec_issues(f"{tag}.b", blk.b, blk.G.rows))
            if blk.H.rows != blk.G.rows or blk.H.cols != m:
                rep.issues.append(f"{tag}.H: shape {blk.H.rows}x{blk.H.cols}, "
                                  f"expected {blk.G.rows}x{m}")
            if blk.G.cols != dim_of(p.levels[i]):
                rep.issues.append(f"{tag}.G: {blk.G.cols} cols, "
                                  f"expected {dim_of(p.levels[i])}")
    dcomp = p.upper.dual_complicating
    if dcomp is not None:
        add(dcomp.R.issues("dual_complicating.R"))
        rows = len(dcomp.q)
        add(_vec_issues("dual_complicating.q", dcomp.q))
        if dcomp.R.rows != rows or dcomp.R.cols != m:
            rep.issues.append(f"dual_complicating.R: shape {dcomp.R.rows}x{dcomp.R.cols}, "
                              f"expected {rows}x{m}")
        if len(dcomp.S) != len(p.levels):
            rep.issues.append(f"dual_complicating.S: {len(dcomp.S)} blocks, "
                              f"expected {len(p.levels)}")
        else:
            for i, S in enumerate(dcomp.S):
                add(S.issues(f"dual_complicating.S[{i}]"))
                if S.rows != rows or S.cols != p.levels[i].n_rows:
                    rep.issues.append(f"dual_complicating.S[{i}]: shape {S.rows}x{S.cols}, "
                                      f"expected {rows}x{p.levels[i].n_rows}")
    return rep


def classify_case(p: MimlsfProblem) -> CaseClass:
    """Most specific case: III (II without complicating rows) < II < I, structurally.

    Case II requires the upper objective to reuse level 1's cost vector and
    to ignore every later level exactly (coefficient-for-coefficient).
    """
    c1 = np.asarray(p.levels[0].c)
    cx0 = np.asarray(p.upper.c_x[0])
    case2 = cx0.shape == c1.shape and bool(np.all(cx0 == c1))
    for cx in p.upper.c_x[1:]:
        case2 = case2 and bool(np.all(np.asarray(cx) == 0.0))
    if not case2:
        return CaseClass.CASE_I
    if p.upper.dual_complicating is None:
        return CaseClass.CASE_III
    return CaseClass.CASE_II


def relaxation_lp(p: MimlsfProblem, x_weights=None) -> LinearProgram:
    """LP over all primal constraints with z relaxed to [0, 1].

    Objective c_z.z + sum_i w_i . x_i with w_i defaulting to the upper
    cost blocks c_x.
    """
    m = p.upper.m
    sizes = [lvl.n_x for lvl in p.levels]
    start = [m]
    for s in sizes[:-1]:
        start.append(start[-1] + s)
    nv = m + sum(sizes)
    c = np.zeros(nv)
    c[:m] = np.asarray(p.upper.c_z)
    weights = x_weights if x_weights is not None else [np.asarray(v) for v in p.upper.c_x]
    for i, w in enumerate(weights):
        c[start[i]:start[i] + sizes[i]] = w

    rows, senses, rhs = [], [], []

    def add_row(vec, sense, b):
        rows.append(vec)
        senses.append(sense)
        rhs.append(b)

    zf = p.upper.z_feasible
    if zf is not None:
        Az = zf.A.dense()
        for r in range(Az.shape[0]):
            vec = np.zeros(nv)
            vec[:m] = Az[r]
            add_row(vec, zf.senses[r], zf.b[r])
    for i, lvl in enumerate(p.levels):
        A, D = lvl.A.dense(), lvl.D.dense()
        Bv = lvl.B.dense() if lvl.B is not None else None
        for r in range(lvl.n_rows):
            vec = np.zeros(nv)
            vec[start[i]:start[i] + sizes[i]] = A[r]
            vec[:m] = D[r]
            if Bv is not None:
                vec[start[i - 1]:start[i - 1] + sizes[i - 1]] = Bv[r]
            add_row(vec, GE, lvl.b[r])
        blk = p.primal_block(i)
        if blk is not None:
            H, G = blk.H.dense(), blk.G.dense()
            for r in range(G.shape[0]):
                vec = np.zeros(nv)
                vec[:m] = H[r]
                vec[start[i]:start[i] + sizes[i]] = G[r]
                add_row(vec, GE, blk.b[r])

    lb = np.zeros(nv)
    ub = np.full(nv, np.inf)
    ub[:m] = 1.0
    A = np.array(rows) if rows else np.zeros((0, nv))
    return LinearProgram.make("min", c, A, senses, np.array(rhs), lb, ub)


def relaxed_bound(p: MimlsfProblem, opts: SolveOptions | None = None,
                  x_weights=None) -> float:
    """Finite lower bound on the MIMLSF optimum from the full primal relaxation.

    Raises AssumptionViolation when the relaxation is infeasible or
    unbounded (the instance then falls outside the feasible-and-bounded
    assumption every solver here relies on).
    """
    sol = lp_solve(relaxation_lp(p, x_weights), opts or SolveOptions())
    if sol.status in (INFEASIBLE, UNBOUNDED):
        raise AssumptionViolation(sol.status)
    if sol.status != "optimal":
        raise SeqlevelsError(f"relaxation solve hit {sol.status}")
    return float(sol.objective)


# -- JSON serialization -------------------------------------------------------


def _mat_to_json(mb: MatrixBlock) -> dict:
    return {"rows": mb.rows, "cols": mb.cols,
            "entries": [[i, j, v] for i, j, v in mb.entries]}


def _mat_from_json(obj, where: str) -> MatrixBlock:
    try:
        ent = tuple((int(i), int(j), float(v)) for i, j, v in obj["entries"])
        return MatrixBlock(int(obj["rows"]), int(obj["cols"]), ent)
    except (KeyError, TypeError, ValueError) as e:
        raise SchemaError(f"{where}: bad matrix encoding ({e})") from None


def _coupling_to_json(blocks) -> list | None:
    if blocks is None:
        return None
    out = []
    for blk in blocks:
        if blk is None:
            out.append(None)
        else:
            out.append({"H": _mat_to_json(blk.H), "G": _mat_to_json(blk.G),
                        "b": list(blk.b)})
    return out


def _coupling_from_json(obj, where: str):
    if obj is None:
        return None
    out = []
    for i, blk in enumerate(obj):
        if blk is None:
            out.append(None)
        else:
            out.append(CouplingBlock(
                _mat_from_json(blk["H"], f"{where}[{i}].H"),
                _mat_from_json(blk["G"], f"{where}[{i}].G"),
                tuple(float(v) for v in blk["b"]),
            ))
    return tuple(out)


def problem_to_json(p: MimlsfProblem) -> dict:
    up = p.upper
    zf = None
    if up.z_feasible is not None:
        zf = {"A": _mat_to_json(up.z_feasible.A), "b": list(up.z_feasible.b),
              "sense": list(up.z_feasible.senses)}
    dcomp = None
    if up.dual_complicating is not None:
        dcomp = {"R": _mat_to_json(up.dual_complicating.R),
                 "S": [_mat_to_json(S) for S in up.dual_complicating.S],
                 "q": list(up.dual_complicating.q)}
    levels = []
    for lvl in p.levels:
        obj = {"c": list(lvl.c), "A": _mat_to_json(lvl.A), "D": _mat_to_json(lvl.D),
               "b": list(lvl.b), "dual_bound": lvl.dual_bound}
        if lvl.B is not None:
            obj["B"] = _mat_to_json(lvl.B)
        levels.append(obj)
    return {
        "version": SCHEMA_VERSION,
        "n": p.n,
        "m": up.m,
        "upper": {
            "c_z": list(up.c_z),
            "z_feasible": zf,
            "c_x": [list(v) for v in up.c_x],
            "primal_coupling": _coupling_to_json(up.primal_coupling),
            "dual_coupling": _coupling_to_json(up.dual_coupling),
            "dual_complicating": dcomp,
        },
        "levels": levels,
    }


def problem_from_json(obj: dict) -> MimlsfProblem:
    for fieldname in ("version", "n", "m", "upper", "levels"):
        if fieldname not in obj:
            raise SchemaError(f"missing top-level field {fieldname!r}")
    if obj["version"] != SCHEMA_VERSION:
        raise SchemaError(f"schema version {obj['version']} unsupported "
                          f"(expected {SCHEMA_VERSION})")
    n = int(obj["n"])
    if n < 2:
        raise SchemaError("n >= 2 required")
    up = obj["upper"]
    for fieldname in ("c_z", "c_x"):
        if fieldname not in up:
            raise SchemaError(f"missing upper field {fieldname!r}")
    zf = None
    if up.get("z_feasible") is not None:
        z = up["z_feasible"]
        senses = z["sense"]
        if isinstance(senses, str):
            senses = [senses] * int(z["A"]["rows"])
        zf = LinearSystem(_mat_from_json(z["A"], "z_feasible.A"),
                          tuple(float(v) for v in z["b"]), tuple(senses))
    dcomp = None
    if up.get("dual_complicating") is not None:
        d = up["dual_complicating"]
        dcomp = ComplicatingBlock(
            _mat_from_json(d["R"], "dual_complicating.R"),
            tuple(_mat_from_json(S, f"dual_complicating.S[{i}]")
                  for i, S in enumerate(d["S"])),
            tuple(float(v) for v in d["q"]),
        )
    upper = UpperBlock(
        m=int(obj["m"]),
        c_z=tuple(float(v) for v in up["c_z"]),
        c_x=tuple(tuple(float(v) for v in row) for row in up["c_x"]),
        z_feasible=zf,
        primal_coupling=_coupling_from_json(up.get("primal_coupling"), "primal_coupling"),
        dual_coupling=_coupling_from_json(up.get("dual_coupling"), "dual_coupling"),
        dual_complicating=dcomp,
    )
    levels = []
    for i, lvl in enumerate(obj["levels"]):
        for fieldname in ("c", "A", "D", "b"):
            if fieldname not in lvl:
                raise SchemaError(f"levels[{i}]: missing field {fieldname!r}")
        levels.append(LevelBlock(
            c=tuple(float(v) for v in lvl["c"]),
            A=_mat_from_json(lvl["A"], f"levels[{i}].A"),
            D=_mat_from_json(lvl["D"], f"levels[{i}].D"),
            b=tuple(float(v) for v in lvl["b"]),
            B=_mat_from_json(lvl["B"], f"levels[{i}].B") if "B" in lvl and lvl["B"] is not None else None,
            dual_bound=float(lvl.get("dual_bound", DEFAULT_DUAL_BOUND)),
        ))
    return MimlsfProblem(n=n, upper=upper, levels=tuple(levels))


def save_instance(p: MimlsfProblem, path) -> None:
    with open(path, "w") as fh:
        json.dump(problem_to_json(p), fh, indent=1)
        fh.write("\n")


def load_instance(path) -> MimlsfProblem:
    try:
        with open(path) as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as e:
        raise SchemaError(f"parse error at line {e.lineno}, column {e.colno}: {e.msg}") from None
    if not isinstance(obj, dict):
        raise SchemaError("top level must be an object")
    return problem_from_json(obj)
