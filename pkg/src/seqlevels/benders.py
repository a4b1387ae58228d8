"""Dedicated Benders decomposition for the single-level reformulation.

The master works on the binaries z plus one epigraph variable; the
subproblem side offers four interchangeable separation schemes:

* ``monolithic``      - the full dual subproblem as one LP;
* ``sequential_case1``- primal-side problem first, then the dual-side
                        problem with the primal optimum on its price
                        (valid for any upper objective);
* ``independent_case2``- the two sides solved independently and merged by
                        value comparison (needs the special upper
                        objective that reuses level 1's costs);
* ``separated_case3`` - per-level forward primal chain plus per-level
                        backward dual composition (needs, additionally,
                        the absence of cross-level dual rows); none of
                        its LPs carries a deep gamma-power coefficient.

Case-2/3 schemes optimize the companion objective that weights every
level's own cost by its scaling factor (exact at level 1, vanishing at
the rest as gamma -> 1); reported objectives are always re-evaluated
against the true upper objective at the returned binaries.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .lpkernel import (
    GE,
    LE,
    INFEASIBLE,
    LIMIT,
    OPTIMAL,
    UNBOUNDED,
    LinearProgram,
    MilpProblem,
    SolveOptions,
    lp_solve,
    lp_solve_boxed,
    milp_solve,
)
from .model import CaseClass, MimlsfProblem, SeqlevelsError, classify_case, relaxed_bound
from .slp import Compiled, SlpModel, build_slp, compile_problem

TRUE_OBJECTIVE = "true"
CASE2_OBJECTIVE = "case2"


class Scheme(str, Enum):
    MONOLITHIC = "monolithic"
    SEQUENTIAL_CASE1 = "sequential_case1"
    INDEPENDENT_CASE2 = "independent_case2"
    SEPARATED_CASE3 = "separated_case3"

    @property
    def objective_mode(self) -> str:
        if self in (Scheme.INDEPENDENT_CASE2, Scheme.SEPARATED_CASE3):
            return CASE2_OBJECTIVE
        return TRUE_OBJECTIVE


def scheme_applicable(scheme: Scheme, case: CaseClass) -> bool:
    if scheme == Scheme.INDEPENDENT_CASE2:
        return case >= CaseClass.CASE_II
    if scheme == Scheme.SEPARATED_CASE3:
        return case == CaseClass.CASE_III
    return True


FINITE = "finite"
UNBOUNDED_RAY = "unbounded_ray"
SUB_INFEASIBLE = "sub_infeasible"


@dataclass
class Affine:
    const: float
    coef: np.ndarray

    def at(self, z) -> float:
        return self.const + float(self.coef @ np.asarray(z, dtype=float))


@dataclass
class Components:
    """One point (or ray) of the dual subproblem, split by symbol."""

    y: list[np.ndarray]
    u_x: list[np.ndarray]
    u_y: list[np.ndarray]
    v_y: list[np.ndarray]
    u: np.ndarray
    x: list[np.ndarray]
    w: float

    @staticmethod
    def zeros(comp: Compiled) -> "Components":
        return Components(
            y=[np.zeros(l.n_y) for l in comp.levels],
            u_x=[np.zeros(l.Gx.shape[0]) for l in comp.levels],
            u_y=[np.zeros(l.Gy.shape[0]) for l in comp.levels],
            v_y=[np.zeros(3 * l.mc.n_s) for l in comp.levels],
            u=np.zeros(comp.R.shape[0] if comp.R is not None else 0),
            x=[np.zeros(l.n_x) for l in comp.levels],
            w=0.0,
        )

    def norm1(self) -> float:
        total = abs(self.w) + float(np.sum(np.abs(self.u)))
        for group in (self.y, self.u_x, self.u_y, self.v_y, self.x):
            total += sum(float(np.sum(np.abs(v))) for v in group)
        return total

    def scaled(self, t: float) -> "Components":
        return Components(
            y=[v * t for v in self.y],
            u_x=[v * t for v in self.u_x],
            u_y=[v * t for v in self.u_y],
            v_y=[v * t for v in self.v_y],
            u=self.u * t,
            x=[v * t for v in self.x],
            w=self.w * t,
        )


@dataclass
class BspOutcome:
    status: str
    value: float
    affine: Affine | None
    components: Components | None
    d6: float | None = None


@dataclass
class Cut:
    kind: str  # "optimality" | "feasibility"
    affine: Affine
    scheme: str
    iteration: int


@dataclass
class IterationLog:
    iteration: int
    lb: float
    ub: float
    rel_gap: float
    cut_kind: str
    scheme: str
    wall_ms: float


@dataclass
class RmpState:
    cuts: list[Cut] = field(default_factory=list)
    incumbent_z: np.ndarray | None = None
    lb: float = -np.inf
    ub: float = np.inf
    log: list[IterationLog] = field(default_factory=list)


@dataclass
class BendersReport:
    status: str
    z: np.ndarray | None
    objective_descaled: float | None
    scheme_objective: float | None
    lb: float
    ub: float
    iterations: int
    state: RmpState
    warnings: list[str] = field(default_factory=list)

    def log_csv(self, timings: bool = True) -> str:
        lines = ["iteration,LB,UB,rel_gap,cut_kind,scheme,wall_ms"]
        for it in self.state.log:
            ms = f"{it.wall_ms:.3f}" if timings else "0"
            lines.append(f"{it.iteration},{it.lb:.12g},{it.ub:.12g},"
                         f"{it.rel_gap:.6g},{it.cut_kind},{it.scheme},{ms}")
        return "\n".join(lines) + "\n"


def bsp_objective_affine(comp: Compiled, pt: Components) -> Affine:
    """The dual subproblem objective at ``pt`` as an affine function of z."""
    sc = comp.scaling
    const = 0.0
    coef = np.zeros(comp.m)
    for i, lvl in enumerate(comp.levels):
        gi = sc[i]
        const += float(pt.y[i] @ lvl.b) + float(pt.u_x[i] @ lvl.bx)
        const += gi * float(pt.u_y[i] @ lvl.by) + gi * float(pt.v_y[i] @ lvl.mc.e)
        const -= gi * float(lvl.c @ pt.x[i])
        coef -= lvl.D.T @ pt.y[i]
        if lvl.Gx.shape[0]:
            coef -= lvl.Hx.T @ pt.u_x[i]
        if lvl.Gy.shape[0]:
            coef -= gi * (lvl.Hy.T @ pt.u_y[i])
        if lvl.mc.n_s:
            coef += gi * (lvl.mc.E.T @ pt.v_y[i])
    if comp.R is not None:
        const += float(pt.u @ comp.q)
        coef -= comp.R.T @ pt.u
    return Affine(const, coef)


def _x_column_rhs(comp: Compiled, mode: str) -> list[np.ndarray]:
    """Right-hand sides of the dual rows attached to each x_i column."""
    out = []
    for i, lvl in enumerate(comp.levels):
        if mode == CASE2_OBJECTIVE:
            out.append(comp.scaling[i] * lvl.c)
        else:
            out.append(comp.gamma * np.asarray(comp.p.upper.c_x[i]))
    return out


class _Stack:
    """Variable stacker for the subproblem LPs."""

    def __init__(self):
        self.slices: dict[tuple, slice] = {}
        self.cursor = 0

    def add(self, key, size) -> slice:
        sl = slice(self.cursor, self.cursor + size)
        self.slices[key] = sl
        self.cursor += size
        return sl

    def get(self, key) -> slice:
        return self.slices[key]


def build_bsp(comp: Compiled, zhat, mode: str = TRUE_OBJECTIVE) -> tuple[LinearProgram, _Stack]:
    """Monolithic dual subproblem at a fixed binary guess (one LP)."""
    z = np.asarray(zhat, dtype=float)
    sc = comp.scaling
    n = comp.n
    st = _Stack()
    for i, lvl in enumerate(comp.levels):
        st.add(("y", i), lvl.n_y)
    for i, lvl in enumerate(comp.levels):
        st.add(("ux", i), lvl.Gx.shape[0])
    for i, lvl in enumerate(comp.levels):
        st.add(("uy", i), lvl.Gy.shape[0])
    for i, lvl in enumerate(comp.levels):
        st.add(("vy", i), 3 * lvl.mc.n_s)
    st.add(("u",), comp.R.shape[0] if comp.R is not None else 0)
    for i, lvl in enumerate(comp.levels):
        st.add(("x", i), lvl.n_x)
    st.add(("w",), 1)
    nv = st.cursor

    c = np.zeros(nv)
    for i, lvl in enumerate(comp.levels):
        gi = sc[i]
        c[st.get(("y", i))] = lvl.b - lvl.D @ z
        c[st.get(("ux", i))] = lvl.bx - lvl.Hx @ z
        c[st.get(("uy", i))] = gi * (lvl.by - lvl.Hy @ z)
        c[st.get(("vy", i))] = gi * (lvl.mc.e + lvl.mc.E @ z)
        c[st.get(("x", i))] = -gi * lvl.c
    if comp.R is not None:
        c[st.get(("u",))] = comp.q - comp.R @ z

    rows, senses, rhs = [], [], []
    xrhs = _x_column_rhs(comp, mode)
    for i, lvl in enumerate(comp.levels):
        nxt = comp.levels[i + 1] if i + 1 < n else None
        for j in range(lvl.n_x):               # dual rows of x_i columns (<=)
            vec = np.zeros(nv)
            vec[st.get(("y", i))] = lvl.A[:, j]
            if nxt is not None and nxt.B is not None:
                vec[st.get(("y", i + 1))] = nxt.B[:, j]
            if lvl.Gx.shape[0]:
                vec[st.get(("ux", i))] = lvl.Gx[:, j]
            vec[st.get(("w",))] = -sc[i] * lvl.c[j]
            rows.append(vec)
            senses.append(LE)
            rhs.append(xrhs[i][j])
        for r in range(lvl.n_y):               # rows of y_i variables (>=)
            vec = np.zeros(nv)
            vec[st.get(("x", i))] = lvl.A[r]
            if lvl.B is not None:
                vec[st.get(("x", i - 1))] = lvl.B[r]
            if lvl.Gy.shape[0]:
                vec[st.get(("uy", i))] = -lvl.Gy[:, r]
            if lvl.mc.n_s:
                vec[st.get(("vy", i))] = -lvl.mc.Y[:, r]
            if comp.R is not None:
                vec[st.get(("u",))] = -comp.S[i][:, r] / sc[i]
            vec[st.get(("w",))] = -lvl.b[r]
            rows.append(vec)
            senses.append(GE)
            rhs.append(0.0)
        for pidx in range(lvl.mc.n_s):         # rows of s variables (<=)
            vec = np.zeros(nv)
            vec[st.get(("vy", i))] = lvl.mc.K[:, pidx]
            vec[st.get(("w",))] = -lvl.mc.dvals[pidx]
            rows.append(vec)
            senses.append(LE)
            rhs.append(0.0)

    A = np.array(rows) if rows else np.zeros((0, nv))
    lp = LinearProgram.make("max", c, A, senses, np.array(rhs))
    return lp, st


def _components_from(comp: Compiled, st: _Stack, vec: np.ndarray) -> Components:
    return Components(
        y=[vec[st.get(("y", i))] for i in range(comp.n)],
        u_x=[vec[st.get(("ux", i))] for i in range(comp.n)],
        u_y=[vec[st.get(("uy", i))] for i in range(comp.n)],
        v_y=[vec[st.get(("vy", i))] for i in range(comp.n)],
        u=vec[st.get(("u",))],
        x=[vec[st.get(("x", i))] for i in range(comp.n)],
        w=float(vec[st.get(("w",))][0]),
    )


def solve_bsp(comp: Compiled, zhat, opts: SolveOptions,
              mode: str = TRUE_OBJECTIVE) -> BspOutcome:
    lp, st = build_bsp(comp, zhat, mode)
    sol = lp_solve(lp, opts)
    if sol.status == OPTIMAL:
        pt = _components_from(comp, st, sol.x)
        return BspOutcome(FINITE, float(sol.objective), bsp_objective_affine(comp, pt), pt)
    if sol.status == UNBOUNDED:
        ray = _components_from(comp, st, sol.certificate)
        return BspOutcome(UNBOUNDED_RAY, np.inf, bsp_objective_affine(comp, ray), ray)
    if sol.status == INFEASIBLE:
        raise SeqlevelsError(
            "dual subproblem infeasible: the value function is unbounded below, "
            "which contradicts the boundedness assumption")
    raise SeqlevelsError(f"dual subproblem hit {sol.status}")


def _bsp1_lp(comp: Compiled, zhat) -> tuple[LinearProgram, _Stack]:
    """Primal-side separated problem (x, u_y, v_y, u); value prices w."""
    z = np.asarray(zhat, dtype=float)
    sc = comp.scaling
    st = _Stack()
    for i, lvl in enumerate(comp.levels):
        st.add(("x", i), lvl.n_x)
    for i, lvl in enumerate(comp.levels):
        st.add(("uy", i), lvl.Gy.shape[0])
    for i, lvl in enumerate(comp.levels):
        st.add(("vy", i), 3 * lvl.mc.n_s)
    st.add(("u",), comp.R.shape[0] if comp.R is not None else 0)
    nv = st.cursor

    c = np.zeros(nv)
    for i, lvl in enumerate(comp.levels):
        gi = sc[i]
        c[st.get(("x", i))] = gi * lvl.c
        c[st.get(("uy", i))] = -gi * (lvl.by - lvl.Hy @ z)
        c[st.get(("vy", i))] = -gi * (lvl.mc.e + lvl.mc.E @ z)
    if comp.R is not None:
        c[st.get(("u",))] = -(comp.q - comp.R @ z)

    rows, senses, rhs = [], [], []
    for i, lvl in enumerate(comp.levels):
        for r in range(lvl.n_y):
            vec = np.zeros(nv)
            vec[st.get(("x", i))] = lvl.A[r]
            if lvl.B is not None:
                vec[st.get(("x", i - 1))] = lvl.B[r]
            if lvl.Gy.shape[0]:
                vec[st.get(("uy", i))] = -lvl.Gy[:, r]
            if lvl.mc.n_s:
                vec[st.get(("vy", i))] = -lvl.mc.Y[:, r]
            if comp.R is not None:
                vec[st.get(("u",))] = -comp.S[i][:, r] / sc[i]
            rows.append(vec)
            senses.append(GE)
            rhs.append(lvl.b[r])
        for pidx in range(lvl.mc.n_s):
            vec = np.zeros(nv)
            vec[st.get(("vy", i))] = lvl.mc.K[:, pidx]
            rows.append(vec)
            senses.append(LE)
            rhs.append(lvl.mc.dvals[pidx])
    A = np.array(rows) if rows else np.zeros((0, nv))
    return LinearProgram.make("min", c, A, senses, np.array(rhs)), st


def _bsp1_components(comp: Compiled, st: _Stack, vec: np.ndarray, w: float) -> Components:
    pt = Components.zeros(comp)
    pt.w = w
    for i in range(comp.n):
        pt.x[i] = vec[st.get(("x", i))]
        pt.u_y[i] = vec[st.get(("uy", i))]
        pt.v_y[i] = vec[st.get(("vy", i))]
    pt.u = vec[st.get(("u",))]
    return pt


def solve_bsp1(comp: Compiled, zhat, opts: SolveOptions) -> BspOutcome:
    """Primal-side value D6; infeasible means +inf (w then pins to zero)."""
    lp, st = _bsp1_lp(comp, zhat)
    sol = lp_solve(lp, opts)
    if sol.status == OPTIMAL:
        pt = _bsp1_components(comp, st, sol.x, 1.0)
        return BspOutcome(FINITE, float(sol.objective), None, pt, d6=float(sol.objective))
    if sol.status == INFEASIBLE:
        return BspOutcome(SUB_INFEASIBLE, np.inf, None, None, d6=np.inf)
    if sol.status == UNBOUNDED:
        # recession of the primal side drives the dual subproblem to +inf
        ray = _bsp1_components(comp, st, sol.certificate, 0.0)
        return BspOutcome(UNBOUNDED_RAY, np.inf, bsp_objective_affine(comp, ray), ray, d6=-np.inf)
    raise SeqlevelsError(f"BSP1 hit {sol.status}")


def _bsp2_lp(comp: Compiled, zhat, mode: str, d6: float | None) -> tuple[LinearProgram, _Stack]:
    """Dual-side problem; with d6 it carries the scalar w, without it w is absent."""
    z = np.asarray(zhat, dtype=float)
    sc = comp.scaling
    n = comp.n
    st = _Stack()
    for i, lvl in enumerate(comp.levels):
        st.add(("y", i), lvl.n_y)
    for i, lvl in enumerate(comp.levels):
        st.add(("ux", i), lvl.Gx.shape[0])
    with_w = d6 is not None
    if with_w:
        st.add(("w",), 1)
    nv = st.cursor

    c = np.zeros(nv)
    for i, lvl in enumerate(comp.levels):
        c[st.get(("y", i))] = lvl.b - lvl.D @ z
        c[st.get(("ux", i))] = lvl.bx - lvl.Hx @ z
    ub = np.full(nv, np.inf)
    if with_w:
        if np.isfinite(d6):
            c[st.get(("w",))] = -d6
        else:
            ub[st.get(("w",))] = 0.0

    rows, senses, rhs = [], [], []
    xrhs = _x_column_rhs(comp, mode)
    for i, lvl in enumerate(comp.levels):
        nxt = comp.levels[i + 1] if i + 1 < n else None
        for j in range(lvl.n_x):
            vec = np.zeros(nv)
            vec[st.get(("y", i))] = lvl.A[:, j]
            if nxt is not None and nxt.B is not None:
                vec[st.get(("y", i + 1))] = nxt.B[:, j]
            if lvl.Gx.shape[0]:
                vec[st.get(("ux", i))] = lvl.Gx[:, j]
            if with_w:
                vec[st.get(("w",))] = -sc[i] * lvl.c[j]
            rows.append(vec)
            senses.append(LE)
            rhs.append(xrhs[i][j])
    A = np.array(rows) if rows else np.zeros((0, nv))
    return LinearProgram.make("max", c, A, senses, np.array(rhs),
                              np.zeros(nv), ub), st


def solve_bsp2_seq(comp: Compiled, zhat, bsp1: BspOutcome,
                   opts: SolveOptions) -> BspOutcome:
    """Dual-side problem priced by D6; composite equals the monolithic value."""
    if bsp1.status == UNBOUNDED_RAY:
        return bsp1
    d6 = bsp1.d6
    lp, st = _bsp2_lp(comp, zhat, TRUE_OBJECTIVE, d6)
    sol = lp_solve(lp, opts)
    if sol.status == INFEASIBLE:
        raise SeqlevelsError(
            "BSP2 infeasible: the value function is unbounded below, "
            "which contradicts the boundedness assumption")
    if sol.status == LIMIT:
        raise SeqlevelsError("BSP2 hit the solver limit")

    def assemble(vec: np.ndarray) -> Components:
        w = float(vec[st.get(("w",))][0])
        pt = bsp1.components.scaled(w) if bsp1.components is not None \
            else Components.zeros(comp)
        pt.w = w
        for i in range(comp.n):
            pt.y[i] = vec[st.get(("y", i))]
            pt.u_x[i] = vec[st.get(("ux", i))]
        return pt

    if sol.status == OPTIMAL:
        pt = assemble(sol.x)
        return BspOutcome(FINITE, float(sol.objective), bsp_objective_affine(comp, pt),
                          pt, d6=d6)
    ray = assemble(sol.certificate)
    return BspOutcome(UNBOUNDED_RAY, np.inf, bsp_objective_affine(comp, ray), ray, d6=d6)


def solve_bsp2_ind(comp: Compiled, zhat, opts: SolveOptions,
                   bsp1: BspOutcome | None = None) -> BspOutcome:
    """Independent dual-side solve plus value comparison (special objective).

    D8 <= D6 certifies the composite optimum at value D8; D8 > D6 exposes a
    recession direction (the two sides paired at unit w), so the binary
    point is cut away by a feasibility cut.
    """
    if bsp1 is None:
        bsp1 = solve_bsp1(comp, zhat, opts)
    if bsp1.status == UNBOUNDED_RAY:
        return bsp1
    d6 = bsp1.d6
    lp, st = _bsp2_lp(comp, zhat, CASE2_OBJECTIVE, None)
    sol = lp_solve(lp, opts)
    if sol.status == INFEASIBLE:
        raise SeqlevelsError(
            "BSP2 infeasible: the companion value function is unbounded below")
    if sol.status == LIMIT:
        raise SeqlevelsError("BSP2 hit the solver limit")

    def dual_side(vec: np.ndarray) -> Components:
        pt = Components.zeros(comp)
        for i in range(comp.n):
            pt.y[i] = vec[st.get(("y", i))]
            pt.u_x[i] = vec[st.get(("ux", i))]
        return pt

    if sol.status == UNBOUNDED:
        ray = dual_side(sol.certificate)
        return BspOutcome(UNBOUNDED_RAY, np.inf, bsp_objective_affine(comp, ray), ray, d6=d6)
    d8 = float(sol.objective)
    gate = opts.comp_tol * max(1.0, abs(d8))
    if d8 <= d6 + gate:
        pt = dual_side(sol.x)
        return BspOutcome(FINITE, d8, bsp_objective_affine(comp, pt), pt, d6=d6)
    ray = dual_side(sol.x)
    if bsp1.components is not None:
        b1 = bsp1.components
        ray.x = [v.copy() for v in b1.x]
        ray.u_y = [v.copy() for v in b1.u_y]
        ray.v_y = [v.copy() for v in b1.v_y]
        ray.u = b1.u.copy()
    ray.w = 1.0
    return BspOutcome(UNBOUNDED_RAY, np.inf, bsp_objective_affine(comp, ray), ray, d6=d6)


# -- Case III: per-level separation -------------------------------------------


def _forward_level_lp(comp: Compiled, i: int, zhat, x_prev) -> tuple[LinearProgram, _Stack]:
    """Level i primal-side block, gamma-free: min c x - u_y(by - Hy z) - v_y(e + E z)."""
    z = np.asarray(zhat, dtype=float)
    lvl = comp.levels[i]
    st = _Stack()
    st.add(("x",), lvl.n_x)
    st.add(("uy",), lvl.Gy.shape[0])
    st.add(("vy",), 3 * lvl.mc.n_s)
    nv = st.cursor
    c = np.zeros(nv)
    c[st.get(("x",))] = lvl.c
    c[st.get(("uy",))] = -(lvl.by - lvl.Hy @ z)
    c[st.get(("vy",))] = -(lvl.mc.e + lvl.mc.E @ z)
    rows, senses, rhs = [], [], []
    base = lvl.b.copy()
    if lvl.B is not None:
        base = base - lvl.B @ x_prev
    for r in range(lvl.n_y):
        vec = np.zeros(nv)
        vec[st.get(("x",))] = lvl.A[r]
        if lvl.Gy.shape[0]:
            vec[st.get(("uy",))] = -lvl.Gy[:, r]
        if lvl.mc.n_s:
            vec[st.get(("vy",))] = -lvl.mc.Y[:, r]
        rows.append(vec)
        senses.append(GE)
        rhs.append(base[r])
    for pidx in range(lvl.mc.n_s):
        vec = np.zeros(nv)
        vec[st.get(("vy",))] = lvl.mc.K[:, pidx]
        rows.append(vec)
        senses.append(LE)
        rhs.append(lvl.mc.dvals[pidx])
    A = np.array(rows) if rows else np.zeros((0, nv))
    return LinearProgram.make("min", c, A, senses, np.array(rhs)), st


def _backward_level_lp(comp: Compiled, i: int, zhat, x_prev,
                       carry: np.ndarray | None) -> LinearProgram:
    """Level i dual-side block in descaled units.

    ``carry`` is (gamma_{i+1}/gamma_i) B_{i+1}' y~_{i+1}: the downstream
    correction that makes the merged point feasible for the joint dual
    rows.  Only this single gamma ratio ever touches a coefficient.
    """
    z = np.asarray(zhat, dtype=float)
    lvl = comp.levels[i]
    n_ux = lvl.Gx.shape[0]
    nv = lvl.n_y + n_ux
    c = np.zeros(nv)
    resid = lvl.b - lvl.D @ z
    if lvl.B is not None:
        resid = resid - lvl.B @ x_prev
    c[:lvl.n_y] = resid
    c[lvl.n_y:] = lvl.bx - lvl.Hx @ z
    rows, senses, rhs = [], [], []
    cost = lvl.c.copy() if carry is None else lvl.c - carry
    for j in range(lvl.n_x):
        vec = np.zeros(nv)
        vec[:lvl.n_y] = lvl.A[:, j]
        if n_ux:
            vec[lvl.n_y:] = lvl.Gx[:, j]
        rows.append(vec)
        senses.append(LE)
        rhs.append(cost[j])
    A = np.array(rows) if rows else np.zeros((0, nv))
    return LinearProgram.make("max", c, A, senses, np.array(rhs))


def _subchain_farkas(comp: Compiled, upto: int, zhat,
                     opts: SolveOptions) -> Components | None:
    """Joint ray certifying infeasibility of follower levels 0..upto at zhat.

    The chain LP carries only raw level data (no gamma anywhere); its
    Farkas vector lifts to a valid joint recession direction by padding
    deeper levels with zeros.
    """
    z = np.asarray(zhat, dtype=float)
    st = _Stack()
    for i in range(upto + 1):
        st.add(("x", i), comp.levels[i].n_x)
    nv = st.cursor
    rows, senses, rhs, tags = [], [], [], []
    for i in range(upto + 1):
        lvl = comp.levels[i]
        base = lvl.b - lvl.D @ z
        for r in range(lvl.n_y):
            vec = np.zeros(nv)
            vec[st.get(("x", i))] = lvl.A[r]
            if i and lvl.B is not None:
                vec[st.get(("x", i - 1))] = lvl.B[r]
            rows.append(vec)
            senses.append(GE)
            rhs.append(base[r])
            tags.append(("y", i, r))
        for r in range(lvl.Gx.shape[0]):
            vec = np.zeros(nv)
            vec[st.get(("x", i))] = lvl.Gx[r]
            rows.append(vec)
            senses.append(GE)
            rhs.append(lvl.bx[r] - lvl.Hx[r] @ z)
            tags.append(("ux", i, r))
    lp = LinearProgram.make("min", np.zeros(nv), np.array(rows), senses, np.array(rhs))
    sol = lp_solve(lp, opts)
    if sol.status != INFEASIBLE:
        return None
    ray = Components.zeros(comp)
    for t, (kind, i, r) in enumerate(tags):
        val = max(float(sol.certificate[t]), 0.0)
        if kind == "y":
            ray.y[i][r] = val
        else:
            ray.u_x[i][r] = val
    return ray


def solve_bsp_case3(comp: Compiled, zhat, opts: SolveOptions,
                    audit: list[LinearProgram] | None = None) -> BspOutcome:
    """Per-level separation: forward primal chain, backward dual composition.

    Every LP solved here is built from raw level data; the only scaling
    ever applied to a coefficient is a single ratio gamma_{i+1}/gamma_i,
    so no coefficient shrinks with the compounded factor of the deepest
    level.  Values are recombined in plain arithmetic.
    """
    if classify_case(comp.p) != CaseClass.CASE_III:
        raise SeqlevelsError("separated scheme requires a Case III instance")
    sc = comp.scaling
    n = comp.n
    z = np.asarray(zhat, dtype=float)

    # forward pass: primal-side chain
    xs: list[np.ndarray] = []
    fwd_pts = []
    d6 = 0.0
    infeasible_at = None
    for i in range(n):
        lp, st = _forward_level_lp(comp, i, z, xs[-1] if i else None)
        if audit is not None:
            audit.append(lp)
        sol = lp_solve(lp, opts)
        if sol.status == INFEASIBLE:
            infeasible_at = i
            break
        if sol.status == UNBOUNDED:
            ray = Components.zeros(comp)
            ray.x[i] = sol.certificate[st.get(("x",))]
            ray.u_y[i] = sol.certificate[st.get(("uy",))]
            ray.v_y[i] = sol.certificate[st.get(("vy",))]
            return BspOutcome(UNBOUNDED_RAY, np.inf,
                              bsp_objective_affine(comp, ray), ray, d6=-np.inf)
        if sol.status != OPTIMAL:
            raise SeqlevelsError(f"level {i} forward solve hit {sol.status}")
        xs.append(sol.x[st.get(("x",))])
        fwd_pts.append((sol.x[st.get(("uy",))], sol.x[st.get(("vy",))]))
        d6 += sc[i] * float(sol.objective)
    if infeasible_at is not None:
        d6 = np.inf

    # backward pass: dual-side chain with downstream cost corrections
    ys: list[np.ndarray | None] = [None] * n
    uxs: list[np.ndarray | None] = [None] * n
    depth = (infeasible_at if infeasible_at is not None else n) - 1
    carry = None
    for i in range(depth, -1, -1):
        lvl = comp.levels[i]
        lp = _backward_level_lp(comp, i, z, xs[i - 1] if i else None, carry)
        if audit is not None:
            audit.append(lp)
        sol = lp_solve(lp, opts)
        if sol.status == UNBOUNDED:
            ray = _subchain_farkas(comp, i, z, opts)
            if ray is None:
                raise SeqlevelsError(
                    f"level {i} dual unbounded but its chain is feasible; "
                    "giving up rather than emitting an unsound cut")
            return BspOutcome(UNBOUNDED_RAY, np.inf,
                              bsp_objective_affine(comp, ray), ray, d6=d6)
        if sol.status == INFEASIBLE:
            raise SeqlevelsError(
                "backward dual block infeasible: companion value function "
                "unbounded below")
        if sol.status != OPTIMAL:
            raise SeqlevelsError(f"level {i} backward solve hit {sol.status}")
        ys[i] = sol.x[:lvl.n_y]
        uxs[i] = sol.x[lvl.n_y:]
        if i:
            ratio = sc[i] / sc[i - 1]
            Bi = lvl.B
            carry = ratio * (Bi.T @ ys[i]) if Bi is not None else None

    if infeasible_at is not None:
        # levels past the break contribute nothing; check the chain itself
        ray = _subchain_farkas(comp, infeasible_at, z, opts)
        if ray is not None:
            return BspOutcome(UNBOUNDED_RAY, np.inf,
                              bsp_objective_affine(comp, ray), ray, d6=d6)
        # chain feasible: infeasibility came from the dual-coupling side; the
        # joint primal-side problem decides (rare, solved once, still small)
        b1 = solve_bsp1(comp, z, opts)
        return solve_bsp2_ind(comp, z, opts, bsp1=b1)

    merged = Components.zeros(comp)
    for i in range(n):
        merged.y[i] = sc[i] * ys[i]
        merged.u_x[i] = sc[i] * uxs[i]
    affine = bsp_objective_affine(comp, merged)
    d8 = affine.at(z)
    gate = opts.comp_tol * max(1.0, abs(d8))
    if d8 <= d6 + gate:
        return BspOutcome(FINITE, d8, affine, merged, d6=d6)
    ray = merged
    for i in range(n):
        ray.u_y[i] = fwd_pts[i][0].copy()
        ray.v_y[i] = fwd_pts[i][1].copy()
        ray.x[i] = xs[i].copy()
    ray.w = 1.0
    return BspOutcome(UNBOUNDED_RAY, np.inf, bsp_objective_affine(comp, ray), ray, d6=d6)


def _slp_of(comp: Compiled) -> SlpModel:
    slp = getattr(comp, "_slp_cache", None)
    if slp is None:
        slp = build_slp(comp.p, comp.gamma, comp)
        object.__setattr__(comp, "_slp_cache", slp)
    return slp


def _value_lp_outcome(comp: Compiled, zhat, mode: str,
                      opts: SolveOptions) -> BspOutcome | None:
    """Solve the value function's primal at zhat and map its row duals back.

    Returns a finite outcome (tight by strong duality of the one solve), or
    None when the primal is genuinely infeasible.  Used when the dual-side
    LP reports an unbounded ray whose drift is at coefficient-noise level:
    the primal side does not suffer the scaled-coefficient cancellation.
    """
    slp = _slp_of(comp)
    lp = slp.milp.lp
    z = np.asarray(zhat, dtype=float)
    lb = lp.lb.copy()
    ub = lp.ub.copy()
    lb[:comp.m] = z
    ub[:comp.m] = z
    c = lp.c.copy()
    if mode == CASE2_OBJECTIVE:
        for i, lvl in enumerate(comp.levels):
            c[slp.registry.x[i]] = comp.scaling[i] * lvl.c
    sol = lp_solve_boxed(replace(lp, c=c, lb=lb, ub=ub), opts)
    if sol.status == INFEASIBLE:
        return None
    if sol.status != OPTIMAL:
        raise SeqlevelsError(f"value-function fallback hit {sol.status}")
    pt = Components.zeros(comp)
    for t, (kind, i, r) in enumerate(slp.row_tags):
        d = float(sol.y[t])
        if kind == "p":
            pt.y[i][r] = max(d, 0.0)
        elif kind == "u2":
            pt.u_x[i][r] = max(d, 0.0)
        elif kind == "u3":
            pt.u_y[i][r] = max(d, 0.0)
        elif kind == "u4":
            pt.u[r] = max(d, 0.0)
        elif kind == "d":
            pt.x[i][r] = max(-d, 0.0)
        elif kind == "sd":
            pt.w = max(d, 0.0)
        elif kind == "lin":
            pt.v_y[i][r] = max(d, 0.0)
    affine = bsp_objective_affine(comp, pt)
    gz = comp.gamma * float(np.asarray(comp.p.upper.c_z) @ z)
    value = float(sol.objective) - gz
    # anchor the cut at the exactly-known value (duals may carry tol noise)
    affine = Affine(affine.const + (value - affine.at(z)), affine.coef)
    return BspOutcome(FINITE, value, affine, pt)


def guard_ray(comp: Compiled, outcome: BspOutcome, zhat, mode: str,
              opts: SolveOptions) -> BspOutcome:
    """Replace phantom recession directions by the primal-side outcome.

    The dual subproblems mix unit-scale data with deep gamma-scaled terms,
    and coefficient rounding can open cone directions with a tiny positive
    drift that scaling then inflates arbitrarily; no drift threshold can
    tell those from real certificates.  The primal value LP is the
    arbiter: when it is feasible the claimed ray is a rounding artifact
    and the (tight) outcome built from the primal row duals replaces it.
    """
    if outcome.status != UNBOUNDED_RAY:
        return outcome
    fallback = _value_lp_outcome(comp, zhat, mode, opts)
    if fallback is None:
        return outcome
    fallback.d6 = outcome.d6
    return fallback


def make_cut(outcome: BspOutcome, scheme: str = "", iteration: int = 0,
             norm_tol: float = 1e-10) -> Cut:
    """Optimality cut from a finite point, feasibility cut from a ray."""
    if outcome.affine is None:
        raise SeqlevelsError("outcome carries no affine form")
    if outcome.status == FINITE:
        return Cut("optimality", outcome.affine, scheme, iteration)
    if outcome.status != UNBOUNDED_RAY:
        raise SeqlevelsError(f"no cut from status {outcome.status}")
    cut = Cut("feasibility", outcome.affine, scheme, iteration)
    if outcome.components is not None:
        norm = outcome.components.norm1()
        if norm < norm_tol:
            raise SeqlevelsError("degenerate near-zero ray rejected")
        cut = Cut("feasibility",
                  Affine(outcome.affine.const / norm, outcome.affine.coef / norm),
                  scheme, iteration)
    return cut


def separate(comp: Compiled, scheme: Scheme, zhat, opts: SolveOptions,
             audit: list[LinearProgram] | None = None) -> BspOutcome:
    if scheme == Scheme.MONOLITHIC:
        out = solve_bsp(comp, zhat, opts, TRUE_OBJECTIVE)
    elif scheme == Scheme.SEQUENTIAL_CASE1:
        b1 = solve_bsp1(comp, zhat, opts)
        out = solve_bsp2_seq(comp, zhat, b1, opts)
    elif scheme == Scheme.INDEPENDENT_CASE2:
        out = solve_bsp2_ind(comp, zhat, opts)
    elif scheme == Scheme.SEPARATED_CASE3:
        out = solve_bsp_case3(comp, zhat, opts, audit)
    else:
        raise SeqlevelsError(f"unknown scheme {scheme}")
    return guard_ray(comp, out, zhat, scheme.objective_mode, opts)


def value_function(slp: SlpModel, zhat, mode: str = TRUE_OBJECTIVE,
                   opts: SolveOptions | None = None) -> float:
    """f(zhat): the continuous part of the single-level problem at fixed binaries.

    Returns +inf when infeasible.  The case-2 mode swaps the upper cost
    blocks for the gamma-weighted level costs.
    """
    opts = opts or SolveOptions()
    comp = slp.compiled
    lp = slp.milp.lp
    z = np.asarray(zhat, dtype=float)
    m = comp.m
    lb = lp.lb.copy()
    ub = lp.ub.copy()
    lb[:m] = z
    ub[:m] = z
    c = lp.c.copy()
    if mode == CASE2_OBJECTIVE:
        for i, lvl in enumerate(comp.levels):
            c[slp.registry.x[i]] = comp.scaling[i] * lvl.c
    sol = lp_solve_boxed(replace(lp, c=c, lb=lb, ub=ub), opts)
    if sol.status == INFEASIBLE:
        return np.inf
    if sol.status == UNBOUNDED:
        raise SeqlevelsError("value function unbounded below")
    if sol.status != OPTIMAL:
        raise SeqlevelsError(f"value function solve hit {sol.status}")
    gz = comp.gamma * float(np.asarray(comp.p.upper.c_z) @ z)
    return float(sol.objective) - gz


def _master_lp(comp: Compiled, cuts: list[Cut], theta_floor: Affine) -> MilpProblem:
    p = comp.p
    m = comp.m
    nv = m + 1
    c = np.zeros(nv)
    c[:m] = comp.gamma * np.asarray(p.upper.c_z)
    c[m] = 1.0
    rows, senses, rhs = [], [], []
    zf = p.upper.z_feasible
    if zf is not None:
        Az = zf.A.dense()
        for r in range(Az.shape[0]):
            vec = np.zeros(nv)
            vec[:m] = Az[r]
            rows.append(vec)
            senses.append(zf.senses[r])
            rhs.append(zf.b[r])
    for cut in [Cut("optimality", theta_floor, "floor", 0)] + cuts:
        vec = np.zeros(nv)
        vec[:m] = -cut.affine.coef
        if cut.kind == "optimality":
            vec[m] = 1.0
            rows.append(vec)
            senses.append(GE)
            rhs.append(cut.affine.const)
        else:
            rows.append(-vec)
            senses.append(LE)
            rhs.append(-cut.affine.const)
    lb = np.zeros(nv)
    ub = np.full(nv, np.inf)
    ub[:m] = 1.0
    lb[m] = -np.inf
    lp = LinearProgram.make("min", c, np.array(rows), senses, np.array(rhs), lb, ub)
    return MilpProblem(lp, list(range(m)))


def benders_loop(
    p: MimlsfProblem,
    gamma: float,
    scheme: Scheme,
    opts: SolveOptions | None = None,
    max_iterations: int = 300,
    stabilize: bool = False,
    stabilize_weight: float = 0.5,
    seed: int = 0,
    audit: list[LinearProgram] | None = None,
) -> BendersReport:
    """Master/subproblem loop; terminates when the relative gap closes.

    The reported descaled objective is re-evaluated against the true upper
    objective at the returned binaries, so every scheme's report is
    comparable with the direct solve.
    """
    opts = opts or SolveOptions()
    case = classify_case(p)
    if not scheme_applicable(scheme, case):
        raise SeqlevelsError(
            f"scheme {scheme.value} requires case >= "
            f"{'III' if scheme == Scheme.SEPARATED_CASE3 else 'II'}; "
            f"instance is {case.name}")
    comp = compile_problem(p, gamma)
    slp = build_slp(p, gamma, comp)
    object.__setattr__(comp, "_slp_cache", slp)  # guards reuse this model
    mode = scheme.objective_mode

    if mode == CASE2_OBJECTIVE:
        weights = [comp.scaling[i] / gamma * lvl.c for i, lvl in enumerate(comp.levels)]
        vrel = relaxed_bound(p, opts, x_weights=weights)
    else:
        vrel = relaxed_bound(p, opts)
    theta_floor = Affine(gamma * vrel, -gamma * np.asarray(p.upper.c_z))

    rng = np.random.default_rng(seed)
    state = RmpState()
    warnings: list[str] = []
    t0 = time.monotonic()
    best_z = None
    best_val = np.inf
    status = LIMIT
    it = 0
    for it in range(1, max_iterations + 1):
        it_t0 = time.monotonic()
        master = _master_lp(comp, state.cuts, theta_floor)
        ms = milp_solve(master, opts)
        if ms.status == INFEASIBLE:
            status = INFEASIBLE
            break
        if ms.status not in (OPTIMAL, LIMIT) or ms.x is None:
            raise SeqlevelsError(f"master solve hit {ms.status}")
        zhat = np.round(ms.x[:comp.m]) + 0.0
        lb = float(ms.bound)
        state.lb = max(state.lb, lb)

        outcome = separate(comp, scheme, zhat, opts, audit)
        cut_kind = "optimality"
        if outcome.status == FINITE:
            cand = gamma * float(np.asarray(p.upper.c_z) @ zhat) + outcome.value
            if cand < best_val:
                best_val, best_z = cand, zhat.copy()
            state.ub = min(state.ub, cand)
        else:
            cut_kind = "feasibility"
        try:
            state.cuts.append(make_cut(outcome, scheme.value, it))
        except SeqlevelsError as e:
            warnings.append(f"iteration {it}: {e}")
            if outcome.status != FINITE:
                raise

        if stabilize and best_z is not None:
            z_sep = stabilize_weight * zhat + (1 - stabilize_weight) * best_z
            z_sep = z_sep + rng.uniform(0.0, 1e-4, size=comp.m)
            try:
                extra = separate(comp, scheme, z_sep, opts, audit)
                if extra.status == FINITE:
                    state.cuts.append(make_cut(extra, scheme.value + "+inout", it))
            except SeqlevelsError as e:
                warnings.append(f"iteration {it}: stabilized separation skipped ({e})")

        gap = (state.ub - state.lb) / max(1.0, abs(state.ub))
        state.log.append(IterationLog(
            it, state.lb, state.ub, gap, cut_kind, scheme.value,
            1000.0 * (time.monotonic() - it_t0)))
        if gap <= opts.mip_gap:
            status = OPTIMAL
            break
        if opts.time_limit is not None and time.monotonic() - t0 > opts.time_limit:
            status = LIMIT
            break

    if status == INFEASIBLE or best_z is None:
        final_status = INFEASIBLE if status == INFEASIBLE else LIMIT
        return BendersReport(final_status, None, None, None, state.lb, state.ub,
                             it, state, warnings)
    f_true = value_function(slp, best_z, TRUE_OBJECTIVE, opts)
    if np.isfinite(f_true):
        descaled = float(np.asarray(p.upper.c_z) @ best_z) + f_true / gamma
    else:
        descaled = None
        warnings.append("incumbent infeasible for the true value function")
    state.incumbent_z = best_z
    return BendersReport(status, best_z, descaled, best_val, state.lb, state.ub,
                         it, state, warnings)
