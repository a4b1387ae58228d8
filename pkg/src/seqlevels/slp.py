"""Single-level reformulation of a sequential multi-level instance.

The n-level chain collapses to one MILP: follower optimality is enforced
through scaled dual-feasibility rows and one aggregated strong-duality
row, and the bilinear products between follower duals and upper binaries
are expanded exactly with McCormick envelopes (exact because one factor
is binary and the other is capped).

Scaling factors gamma_i = gamma (1-gamma)^(i-1) (last level:
(1-gamma)^(n-1)) weight the follower objectives so the weighted sum
approaches the lexicographic/sequential solution as gamma -> 1.

Dual caps are deliberately emitted as rows of the dual-coupling family
rather than variable bounds: the Benders subproblem construction then
remains the exact LP dual of the value function solved here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lpkernel import (
    GE,
    LE,
    INFEASIBLE,
    OPTIMAL,
    LinearProgram,
    MilpProblem,
    MilpSolution,
    SolveOptions,
    lp_solve_boxed,
    milp_solve,
)
from .model import MimlsfProblem, SeqlevelsError

GAMMA_GUARD = 1e-16


@dataclass(frozen=True)
class ScalingFactors:
    gamma: float
    factors: np.ndarray

    def __getitem__(self, i: int) -> float:
        return float(self.factors[i])


def scaling_factors(gamma: float, n: int) -> ScalingFactors:
    """Weights gamma_i for the lexicographic-to-weighted-sum collapse."""
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    if n < 2:
        raise ValueError("n >= 2 required")
    f = np.empty(n)
    for i in range(n - 1):
        f[i] = gamma * (1.0 - gamma) ** i
    f[n - 1] = (1.0 - gamma) ** (n - 1)
    return ScalingFactors(gamma, f)


@dataclass
class McCormickBlock:
    """Exact product expansion for one level's dual-vs-binary bilinears.

    For each nonzero D[r, c] an auxiliary s approximates y_r * z_c through
    three envelope rows; in generic form the rows read
    Y y + K s >= gamma_i (e + E z).  ``dvals`` carries the D weights used
    when the aggregate sum replaces y' D z.
    """

    pairs: list[tuple[int, int]]
    dvals: np.ndarray
    Y: np.ndarray
    K: np.ndarray
    e: np.ndarray
    E: np.ndarray
    cap: float

    @property
    def n_s(self) -> int:
        return len(self.pairs)


def build_mccormick(D: np.ndarray, dual_bound: float, gamma_i: float, m: int) -> McCormickBlock:
    if dual_bound <= 0:
        raise ValueError("dual bound must be positive")
    n_rows = D.shape[0]
    pairs = [(r, c) for r in range(n_rows) for c in range(m) if D[r, c] != 0.0]
    k = len(pairs)
    Y = np.zeros((3 * k, n_rows))
    K = np.zeros((3 * k, k))
    e = np.zeros(3 * k)
    E = np.zeros((3 * k, m))
    for p, (r, c) in enumerate(pairs):
        t = 3 * p
        K[t, p] = -1.0            # s <= cap z_c
        E[t, c] = -dual_bound
        Y[t + 1, r] = 1.0         # s <= y_r
        K[t + 1, p] = -1.0
        Y[t + 2, r] = -1.0        # s >= y_r - cap (1 - z_c)
        K[t + 2, p] = 1.0
        e[t + 2] = -dual_bound
        E[t + 2, c] = dual_bound
    dvals = np.array([D[r, c] for r, c in pairs])
    return McCormickBlock(pairs, dvals, Y, K, e, E, gamma_i * dual_bound)


@dataclass
class CompiledLevel:
    c: np.ndarray
    A: np.ndarray
    B: np.ndarray | None
    D: np.ndarray
    b: np.ndarray
    # primal coupling rows H z + Gx x >= bx (may be empty)
    Hx: np.ndarray
    Gx: np.ndarray
    bx: np.ndarray
    # dual coupling rows (instance rows plus cap rows -y >= -Ybar)
    Hy: np.ndarray
    Gy: np.ndarray
    by: np.ndarray
    mc: McCormickBlock
    dual_bound: float

    @property
    def n_x(self) -> int:
        return self.c.size

    @property
    def n_y(self) -> int:
        return self.b.size


@dataclass
class Compiled:
    """Dense, bounds-augmented view of an instance at a fixed gamma."""

    p: MimlsfProblem
    gamma: float
    scaling: ScalingFactors
    levels: list[CompiledLevel]
    R: np.ndarray | None
    S: list[np.ndarray] | None
    q: np.ndarray | None

    @property
    def n(self) -> int:
        return self.p.n

    @property
    def m(self) -> int:
        return self.p.upper.m


def compile_problem(p: MimlsfProblem, gamma: float) -> Compiled:
    sc = scaling_factors(gamma, p.n)
    if np.min(sc.factors) < GAMMA_GUARD:
        raise SeqlevelsError(
            f"scaling factor underflow: min gamma_i = {np.min(sc.factors):.3g} < "
            f"{GAMMA_GUARD:.0e}; use the Case-III Benders scheme, which never "
            "scales LP coefficients by deep gamma powers")
    m = p.upper.m
    levels = []
    for i, lvl in enumerate(p.levels):
        A, D = lvl.A.dense(), lvl.D.dense()
        B = lvl.B.dense() if lvl.B is not None else None
        n_rows = lvl.n_rows
        pb = p.primal_block(i)
        if pb is not None:
            Hx, Gx, bx = pb.H.dense(), pb.G.dense(), np.asarray(pb.b)
        else:
            Hx, Gx, bx = np.zeros((0, m)), np.zeros((0, lvl.n_x)), np.zeros(0)
        db = p.dual_block(i)
        if db is not None:
            Hy, Gy, by = db.H.dense(), db.G.dense(), np.asarray(db.b)
        else:
            Hy, Gy, by = np.zeros((0, m)), np.zeros((0, n_rows)), np.zeros(0)
        # dual caps as extra coupling rows: -y >= -Ybar
        Hy = np.vstack([Hy, np.zeros((n_rows, m))])
        Gy = np.vstack([Gy, -np.eye(n_rows)])
        by = np.concatenate([by, -np.full(n_rows, lvl.dual_bound)])
        mc = build_mccormick(D, lvl.dual_bound, sc[i], m)
        levels.append(CompiledLevel(
            c=np.asarray(lvl.c), A=A, B=B, D=D, b=np.asarray(lvl.b),
            Hx=Hx, Gx=Gx, bx=bx, Hy=Hy, Gy=Gy, by=by, mc=mc,
            dual_bound=lvl.dual_bound,
        ))
    dc = p.upper.dual_complicating
    R = S = q = None
    if dc is not None:
        R = dc.R.dense()
        S = [Sb.dense() for Sb in dc.S]
        q = np.asarray(dc.q)
    return Compiled(p, gamma, sc, levels, R, S, q)


@dataclass
class Registry:
    """Flat-index map for the assembled single-level MILP."""

    m: int
    z: slice
    x: list[slice]
    y: list[slice]
    s: list[slice]
    n_vars: int

    def describe(self, j: int) -> str:
        if self.z.start <= j < self.z.stop:
            return f"z[{j - self.z.start}]"
        for name, slices in (("x", self.x), ("y", self.y), ("s", self.s)):
            for i, sl in enumerate(slices):
                if sl.start <= j < sl.stop:
                    return f"{name}{i}[{j - sl.start}]"
        return f"var[{j}]"


@dataclass
class SlpModel:
    milp: MilpProblem
    registry: Registry
    scaling: ScalingFactors
    compiled: Compiled
    # one (kind, level, index) tag per MILP row, kinds: zf/u2/u3/u4/p/d/sd/lin
    row_tags: list[tuple[str, int | None, int]] = field(default_factory=list)


@dataclass
class LevelSolution:
    primal: np.ndarray
    dual_raw: np.ndarray
    dual_descaled: np.ndarray
    primal_objective: float
    dual_objective: float


@dataclass
class SlpSolution:
    status: str
    z: np.ndarray | None = None
    levels: list[LevelSolution] = field(default_factory=list)
    objective_scaled: float | None = None
    objective_descaled: float | None = None
    milp: MilpSolution | None = None
    warnings: list[str] = field(default_factory=list)


def build_slp(p: MimlsfProblem, gamma: float, compiled: Compiled | None = None) -> SlpModel:
    comp = compiled if compiled is not None else compile_problem(p, gamma)
    sc = comp.scaling
    m, n = comp.m, comp.n

    cursor = m
    x_sl, y_sl, s_sl = [], [], []
    for lvl in comp.levels:
        x_sl.append(slice(cursor, cursor + lvl.n_x))
        cursor += lvl.n_x
    for lvl in comp.levels:
        y_sl.append(slice(cursor, cursor + lvl.n_y))
        cursor += lvl.n_y
    for lvl in comp.levels:
        s_sl.append(slice(cursor, cursor + lvl.mc.n_s))
        cursor += lvl.mc.n_s
    nv = cursor
    reg = Registry(m, slice(0, m), x_sl, y_sl, s_sl, nv)

    rows, senses, rhs, tags = [], [], [], []

    def add(vec, sense, b, tag):
        rows.append(vec)
        senses.append(sense)
        rhs.append(b)
        tags.append(tag)

    zf = p.upper.z_feasible
    if zf is not None:
        Az = zf.A.dense()
        for r in range(Az.shape[0]):
            vec = np.zeros(nv)
            vec[:m] = Az[r]
            add(vec, zf.senses[r], zf.b[r], ("zf", None, r))

    for i, lvl in enumerate(comp.levels):
        gi = sc[i]
        for r in range(lvl.Gx.shape[0]):          # upper primal coupling
            vec = np.zeros(nv)
            vec[:m] = lvl.Hx[r]
            vec[x_sl[i]] = lvl.Gx[r]
            add(vec, GE, lvl.bx[r], ("u2", i, r))
        for r in range(lvl.Gy.shape[0]):          # upper dual coupling, gamma-scaled
            vec = np.zeros(nv)
            vec[:m] = gi * lvl.Hy[r]
            vec[y_sl[i]] = lvl.Gy[r]
            add(vec, GE, gi * lvl.by[r], ("u3", i, r))
        for r in range(lvl.n_y):                  # follower primal rows
            vec = np.zeros(nv)
            vec[x_sl[i]] = lvl.A[r]
            vec[:m] = lvl.D[r]
            if lvl.B is not None:
                vec[x_sl[i - 1]] = lvl.B[r]
            add(vec, GE, lvl.b[r], ("p", i, r))

    if comp.R is not None:                        # upper dual complicating rows
        for r in range(comp.R.shape[0]):
            vec = np.zeros(nv)
            vec[:m] = comp.R[r]
            for i in range(n):
                vec[y_sl[i]] = comp.S[i][r] / sc[i]
            add(vec, GE, comp.q[r], ("u4", None, r))

    for i, lvl in enumerate(comp.levels):         # scaled dual feasibility
        gi = sc[i]
        nxt = comp.levels[i + 1] if i + 1 < n else None
        for j in range(lvl.n_x):
            vec = np.zeros(nv)
            vec[y_sl[i]] = lvl.A[:, j]
            if nxt is not None and nxt.B is not None:
                vec[y_sl[i + 1]] = nxt.B[:, j]
            add(vec, LE, gi * lvl.c[j], ("d", i, j))

    sd = np.zeros(nv)                             # aggregated strong duality
    for i, lvl in enumerate(comp.levels):
        sd[y_sl[i]] = lvl.b
        sd[s_sl[i]] = -lvl.mc.dvals
        sd[x_sl[i]] = -sc[i] * lvl.c
    add(sd, GE, 0.0, ("sd", None, 0))

    for i, lvl in enumerate(comp.levels):         # McCormick envelopes
        gi = sc[i]
        mc = lvl.mc
        for r in range(3 * mc.n_s):
            vec = np.zeros(nv)
            vec[y_sl[i]] = mc.Y[r]
            vec[s_sl[i]] = mc.K[r]
            vec[:m] = -gi * mc.E[r]
            add(vec, GE, gi * mc.e[r], ("lin", i, r))

    c = np.zeros(nv)
    c[:m] = gamma * np.asarray(p.upper.c_z)
    for i in range(n):
        c[x_sl[i]] = gamma * np.asarray(p.upper.c_x[i])

    lb = np.zeros(nv)
    ub = np.full(nv, np.inf)
    ub[:m] = 1.0
    A = np.array(rows) if rows else np.zeros((0, nv))
    lp = LinearProgram.make("min", c, A, senses, np.array(rhs), lb, ub)
    return SlpModel(MilpProblem(lp, list(range(m))), reg, sc, comp, tags)


def _polish_duals(slp: SlpModel, z: np.ndarray, xs: list[np.ndarray],
                  opts: SolveOptions) -> list[np.ndarray] | None:
    """Among alternate optimal dual blocks, pick the per-level tightest one.

    With z and the follower primals frozen, the remaining (y, s) feasible
    set is an LP; maximizing the sum of descaled per-level dual objectives
    selects the vertex closest to the true sequential duals, which keeps
    reported duality gaps meaningful instead of arbitrary within the
    optimal face.
    """
    comp = slp.compiled
    sc = slp.scaling
    n, m = comp.n, comp.m
    cursor = 0
    y_sl, s_sl = [], []
    for lvl in comp.levels:
        y_sl.append(slice(cursor, cursor + lvl.n_y))
        cursor += lvl.n_y
    for lvl in comp.levels:
        s_sl.append(slice(cursor, cursor + lvl.mc.n_s))
        cursor += lvl.mc.n_s
    nv = cursor

    rows, senses, rhs = [], [], []

    def add(vec, sense, b):
        rows.append(vec)
        senses.append(sense)
        rhs.append(b)

    for i, lvl in enumerate(comp.levels):
        gi = sc[i]
        for r in range(lvl.Gy.shape[0]):
            vec = np.zeros(nv)
            vec[y_sl[i]] = lvl.Gy[r]
            add(vec, GE, gi * (lvl.by[r] - lvl.Hy[r] @ z))
        nxt = comp.levels[i + 1] if i + 1 < n else None
        for j in range(lvl.n_x):
            vec = np.zeros(nv)
            vec[y_sl[i]] = lvl.A[:, j]
            if nxt is not None and nxt.B is not None:
                vec[y_sl[i + 1]] = nxt.B[:, j]
            add(vec, LE, gi * lvl.c[j])
        mc = lvl.mc
        for r in range(3 * mc.n_s):
            vec = np.zeros(nv)
            vec[y_sl[i]] = mc.Y[r]
            vec[s_sl[i]] = mc.K[r]
            add(vec, GE, gi * (mc.e[r] + mc.E[r] @ z))
    if comp.R is not None:
        for r in range(comp.R.shape[0]):
            vec = np.zeros(nv)
            for i in range(n):
                vec[y_sl[i]] = comp.S[i][r] / sc[i]
            add(vec, GE, comp.q[r] - comp.R[r] @ z)
    sd = np.zeros(nv)
    sd_rhs = 0.0
    for i, lvl in enumerate(comp.levels):
        sd[y_sl[i]] = lvl.b
        sd[s_sl[i]] = -lvl.mc.dvals
        sd_rhs += sc[i] * float(lvl.c @ xs[i])
    add(sd, GE, sd_rhs)

    c = np.zeros(nv)
    for i, lvl in enumerate(comp.levels):
        resid = lvl.b - lvl.D @ z
        if lvl.B is not None:
            resid = resid - lvl.B @ xs[i - 1]
        # the tiny pull toward zero settles components that the dual
        # objective leaves free, instead of letting them drift to a cap
        pull = 1e-6 * (1.0 + float(np.max(np.abs(resid), initial=0.0)))
        c[y_sl[i]] = (resid - pull) / sc[i]
    lb = np.zeros(nv)
    ub = np.full(nv, np.inf)
    for i, lvl in enumerate(comp.levels):
        ub[s_sl[i]] = lvl.mc.cap
    lp = LinearProgram.make("max", c, np.array(rows) if rows else np.zeros((0, nv)),
                            senses, np.array(rhs), lb, ub)
    sol = lp_solve_boxed(lp, opts)
    if sol.status != OPTIMAL:
        return None
    return [sol.x[y_sl[i]] for i in range(n)]


def extract_solution(slp: SlpModel, ms: MilpSolution, opts: SolveOptions,
                     dual_polish: bool = True) -> SlpSolution:
    comp, reg, sc = slp.compiled, slp.registry, slp.scaling
    p = comp.p
    if ms.status == INFEASIBLE or ms.x is None:
        return SlpSolution(ms.status, milp=ms)
    z = ms.x[reg.z]
    xs = [ms.x[sl] for sl in reg.x]
    ys = [ms.x[sl] for sl in reg.y]
    if dual_polish:
        polished = _polish_duals(slp, z, xs, opts)
        if polished is not None:
            ys = polished
    warnings = []
    levels = []
    for i, lvl in enumerate(comp.levels):
        gi = sc[i]
        cap = gi * lvl.dual_bound
        if np.any(ys[i] > 0.999 * cap):
            warnings.append(
                f"level {i}: dual within 0.1% of its cap {cap:.3g}; the product "
                f"envelopes may be binding, consider raising dual_bound")
        resid = lvl.b - lvl.D @ z
        if lvl.B is not None:
            resid = resid - lvl.B @ xs[i - 1]
        descaled = ys[i] / gi
        levels.append(LevelSolution(
            primal=xs[i],
            dual_raw=ys[i],
            dual_descaled=descaled,
            primal_objective=float(lvl.c @ xs[i]),
            dual_objective=float(descaled @ resid),
        ))
    descaled_obj = float(np.asarray(p.upper.c_z) @ z)
    descaled_obj += sum(float(np.asarray(p.upper.c_x[i]) @ xs[i]) for i in range(comp.n))
    return SlpSolution(
        status=ms.status,
        z=z,
        levels=levels,
        objective_scaled=ms.objective,
        objective_descaled=descaled_obj,
        milp=ms,
        warnings=warnings,
    )


def solve_direct(slp: SlpModel, opts: SolveOptions | None = None,
                 dual_polish: bool = True) -> SlpSolution:
    """Solve the assembled single-level MILP and map the solution back."""
    opts = opts or SolveOptions()
    ms = milp_solve(slp.milp, opts)
    return extract_solution(slp, ms, opts, dual_polish)


def slp_to_json(slp: SlpModel) -> dict:
    """Debug dump of the assembled MILP in the instance matrix format."""
    from .model import MatrixBlock, _mat_to_json

    lp = slp.milp.lp
    return {
        "version": 1,
        "kind": "single-level-milp",
        "gamma": slp.scaling.gamma,
        "c": list(lp.c),
        "A": _mat_to_json(MatrixBlock.from_dense(lp.A)),
        "senses": list(lp.row_senses),
        "b": list(lp.b),
        "lb": [None if not np.isfinite(v) else v for v in lp.lb],
        "ub": [None if not np.isfinite(v) else v for v in lp.ub],
        "binary": list(slp.milp.binary),
        "variables": [slp.registry.describe(j) for j in range(lp.n_vars)],
    }


def slp_from_json(obj: dict) -> MilpProblem:
    """Reload a dumped single-level MILP (for debugging round trips)."""
    from .model import SchemaError, _mat_from_json

    if obj.get("kind") != "single-level-milp":
        raise SchemaError("not a single-level MILP dump")
    A = _mat_from_json(obj["A"], "A").dense()
    lb = np.array([(-np.inf if v is None else v) for v in obj["lb"]])
    ub = np.array([(np.inf if v is None else v) for v in obj["ub"]])
    lp = LinearProgram.make("min", np.asarray(obj["c"], dtype=float), A,
                            list(obj["senses"]), np.asarray(obj["b"], dtype=float),
                            lb, ub)
    return MilpProblem(lp, [int(j) for j in obj["binary"]])


@dataclass
class SdgReport:
    per_level: list[float]
    absolute_flags: list[bool]
    total: float


def sdg(levels: list[LevelSolution]) -> SdgReport:
    """Per-level strong-duality gaps as percentages of the primal objective.

    Levels whose primal objective is zero report the absolute gap instead,
    with a flag marking the changed denominator.
    """
    per, flags = [], []
    for ls in levels:
        gap = abs(ls.primal_objective - ls.dual_objective)
        if ls.primal_objective != 0.0:
            per.append(100.0 * gap / abs(ls.primal_objective))
            flags.append(False)
        else:
            per.append(gap)
            flags.append(True)
    return SdgReport(per, flags, float(sum(per)))
