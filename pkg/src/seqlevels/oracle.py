"""Brute-force ground truth for small instances.

Enumerates every binary z allowed by the upper feasible set, simulates
the sequential followers exactly (each follower sees only z and its
predecessor's primal vector), checks the upper coupling rows at the
resulting primal/dual values, and reports the best feasible objective.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .lpkernel import (
    GE,
    LE,
    EQ,
    INFEASIBLE,
    OPTIMAL,
    UNBOUNDED,
    LinearProgram,
    SolveOptions,
    lp_dual_of,
    lp_solve,
)
from .model import MimlsfProblem, SeqlevelsError

COUPLING_TOL = 1e-7


@dataclass
class OracleRow:
    z: tuple[int, ...]
    feasible: bool
    objective: float | None
    reason: str = ""
    level_values: tuple[float, ...] = ()


@dataclass
class OracleReport:
    best_z: tuple[int, ...] | None
    best_objective: float | None
    table: list[OracleRow] = field(default_factory=list)
    degenerate: bool = False

    @property
    def feasible(self) -> bool:
        return self.best_z is not None

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("z,feasible,objective,reason\n")
        for row in self.table:
            zs = "".join(str(v) for v in row.z)
            obj = "" if row.objective is None else f"{row.objective:.12g}"
            buf.write(f"{zs},{int(row.feasible)},{obj},{row.reason}\n")
        return buf.getvalue()


def enumerate_z(p: MimlsfProblem, enum_cap: int = 16):
    """All binary vectors satisfying the upper feasible set, in numeric order."""
    m = p.upper.m
    if m > enum_cap:
        raise SeqlevelsError(f"enumeration cap exceeded: m = {m} > {enum_cap}")
    zf = p.upper.z_feasible
    A = zf.A.dense() if zf is not None else None
    for bits in range(2 ** m):
        z = np.array([(bits >> j) & 1 for j in range(m)], dtype=float)
        if A is not None:
            ok = True
            for r in range(A.shape[0]):
                v = float(A[r] @ z)
                s = zf.senses[r]
                if (s == GE and v < zf.b[r] - 1e-12) or (s == LE and v > zf.b[r] + 1e-12) \
                        or (s == EQ and abs(v - zf.b[r]) > 1e-12):
                    ok = False
                    break
            if not ok:
                continue
        yield tuple(int(v) for v in z)


def follower_lp(p: MimlsfProblem, i: int, z: np.ndarray, x_prev: np.ndarray | None,
                c_override: np.ndarray | None = None) -> LinearProgram:
    lvl = p.levels[i]
    rhs = np.asarray(lvl.b) - lvl.D.dense() @ z
    if lvl.B is not None:
        rhs = rhs - lvl.B.dense() @ x_prev
    c = np.asarray(lvl.c) if c_override is None else c_override
    return LinearProgram.make("min", c, lvl.A.dense(), [GE] * lvl.n_rows, rhs)


def simulate_followers(p: MimlsfProblem, z, opts: SolveOptions | None = None,
                       perturbations: list[np.ndarray] | None = None):
    """Solve the follower chain at z.  Returns (xs, ys, None) or (None, None, reason)."""
    opts = opts or SolveOptions()
    z = np.asarray(z, dtype=float)
    xs: list[np.ndarray] = []
    ys: list[np.ndarray] = []
    for i in range(p.n):
        c_over = None
        if perturbations is not None:
            c_over = np.asarray(p.levels[i].c) + perturbations[i]
        lp = follower_lp(p, i, z, xs[-1] if i else None, c_over)
        sol = lp_solve(lp, opts)
        if sol.status == INFEASIBLE:
            return None, None, f"level {i} infeasible"
        if sol.status == UNBOUNDED:
            raise SeqlevelsError(
                f"follower level {i} unbounded at z={tuple(int(v) for v in z)}: "
                "instance violates the boundedness assumption")
        if sol.status != OPTIMAL:
            raise SeqlevelsError(f"follower level {i} hit {sol.status}")
        xs.append(sol.x)
        ys.append(sol.y)
    return xs, ys, None


def coupling_violation(p: MimlsfProblem, z, xs, ys, tol: float = COUPLING_TOL) -> str:
    """Name of the first violated upper coupling row, or '' if all hold."""
    z = np.asarray(z, dtype=float)
    for i in range(p.n):
        blk = p.primal_block(i)
        if blk is not None:
            r = blk.H.dense() @ z + blk.G.dense() @ xs[i] - np.asarray(blk.b)
            if np.any(r < -tol):
                return f"primal coupling level {i}"
        blk = p.dual_block(i)
        if blk is not None:
            r = blk.H.dense() @ z + blk.G.dense() @ ys[i] - np.asarray(blk.b)
            if np.any(r < -tol):
                return f"dual coupling level {i}"
    dc = p.upper.dual_complicating
    if dc is not None:
        r = dc.R.dense() @ z - np.asarray(dc.q)
        for i in range(p.n):
            r = r + dc.S[i].dense() @ ys[i]
        if np.any(r < -tol):
            return "dual complicating rows"
    return ""


def oracle_solve(p: MimlsfProblem, opts: SolveOptions | None = None,
                 enum_cap: int = 16) -> OracleReport:
    opts = opts or SolveOptions()
    report = OracleReport(None, None)
    best = np.inf
    c_z = np.asarray(p.upper.c_z)
    for z in enumerate_z(p, enum_cap):
        zv = np.asarray(z, dtype=float)
        xs, ys, reason = simulate_followers(p, zv, opts)
        if xs is None:
            report.table.append(OracleRow(z, False, None, reason))
            continue
        bad = coupling_violation(p, zv, xs, ys)
        if bad:
            report.table.append(OracleRow(z, False, None, bad))
            continue
        obj = float(c_z @ zv)
        obj += sum(float(np.asarray(p.upper.c_x[i]) @ xs[i]) for i in range(p.n))
        lv = tuple(float(np.asarray(p.levels[i].c) @ xs[i]) for i in range(p.n))
        report.table.append(OracleRow(z, True, obj, "", lv))
        if obj < best:
            best = obj
            report.best_z = z
            report.best_objective = obj
    return report


def degeneracy_probe(p: MimlsfProblem, z, opts: SolveOptions | None = None,
                     noise: float = 1e-7, move_tol: float = 1e-4,
                     seed: int = 0) -> bool:
    """True when a tiny objective perturbation moves the follower solution.

    A flagged z signals non-unique follower optima, where the sequential
    simulation and the joint single-level solve may legitimately differ;
    strict-equality suites exclude flagged instances.
    """
    opts = opts or SolveOptions()
    zv = np.asarray(z, dtype=float)
    xs, ys, reason = simulate_followers(p, zv, opts)
    if xs is None:
        return False
    rng = np.random.default_rng(seed)
    perts = [noise * rng.uniform(-1.0, 1.0, size=p.levels[i].n_x) for i in range(p.n)]
    xs2, ys2, reason = simulate_followers(p, zv, opts, perturbations=perts)
    if xs2 is None:
        return True
    for a, b in zip(xs + ys, xs2 + ys2):
        if np.max(np.abs(a - b), initial=0.0) > move_tol:
            return True
    return False


def is_degenerate_instance(p: MimlsfProblem, opts: SolveOptions | None = None,
                           enum_cap: int = 16) -> bool:
    """Probe every feasible z; True if any of them is degenerate."""
    for z in enumerate_z(p, enum_cap):
        try:
            if degeneracy_probe(p, z, opts):
                return True
        except SeqlevelsError:
            return True
    return False


def _face_width(lp: LinearProgram, direction: np.ndarray,
                opts: SolveOptions) -> float:
    """Extent of the optimal face along ``direction`` (0 when unique)."""
    base = lp_solve(lp, opts)
    if base.status != OPTIMAL:
        return 0.0
    pin = 1e-7 * (1.0 + abs(base.objective))
    sgn = 1.0 if lp.sense == "min" else -1.0
    A2 = np.vstack([lp.A, sgn * lp.c])
    b2 = np.append(lp.b, sgn * base.objective + pin)
    senses2 = list(lp.row_senses) + [LE]
    lo = lp_solve(LinearProgram("min", direction, A2, senses2, b2, lp.lb, lp.ub), opts)
    hi = lp_solve(LinearProgram("max", direction, A2, senses2, b2, lp.lb, lp.ub), opts)
    if lo.status != OPTIMAL or hi.status != OPTIMAL:
        return np.inf
    return float(hi.objective - lo.objective)


def solution_ambiguous_at(p: MimlsfProblem, z, opts: SolveOptions | None = None,
                          seed: int = 0, width_tol: float = 1e-5) -> bool:
    """Sharp multiplicity test: fat primal or dual optimal face at some level.

    Measures the optimal-face width along one seeded random direction for
    both the follower LP and its dual.  Complements the perturbation
    probe, which can miss flat faces the pivot rule happens to sit on.
    """
    opts = opts or SolveOptions()
    rng = np.random.default_rng(seed)
    zv = np.asarray(z, dtype=float)
    xs, _, reason = simulate_followers(p, zv, opts)
    if xs is None:
        return False
    for i in range(p.n):
        lp = follower_lp(p, i, zv, xs[i - 1] if i else None)
        d = rng.uniform(0.5, 1.5, size=lp.n_vars)
        if _face_width(lp, d, opts) > width_tol:
            return True
        dual = lp_dual_of(lp)
        dd = rng.uniform(0.5, 1.5, size=dual.n_vars)
        if _face_width(dual, dd, opts) > width_tol:
            return True
    return False
