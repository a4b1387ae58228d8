"""Self-contained LP and MILP kernel.

Bounded-variable revised primal simplex with dual values and
infeasibility/unboundedness certificates, plus a best-bound
branch-and-bound layer for problems with binary variables.

Conventions
-----------
* Rows carry a sense in {"ge", "le", "eq"}.
* Reported duals are shadow prices d(objective)/d(rhs).  For a ``min``
  problem this means duals of "ge" rows are nonnegative and duals of
  "le" rows are nonpositive.
* An infeasible solve returns a Farkas vector ``y`` over the rows: the
  aggregated row ``sum_i y_i a_i`` has a box-supremum (over the variable
  bounds) strictly below ``y . b``, with ``y_i >= 0`` on "ge" rows and
  ``y_i <= 0`` on "le" rows.
* An unbounded solve returns a recession direction ``d`` with ``A d``
  respecting the row senses at zero rhs, ``d`` respecting the bound
  directions, and a strictly improving objective drift.

Pivot ties are always broken by lowest index; after a run of degenerate
pivots the pricing falls back to Bland's rule, which keeps every solve
deterministic and cycle-free.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, replace

import numpy as np

GE, LE, EQ = "ge", "le", "eq"

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
LIMIT = "limit"

# nonbasic variable states
_BASIC, _AT_LO, _AT_UP, _FREE = 0, 1, 2, 3

_REFRESH_EVERY = 32
_STALL_LIMIT = 60


@dataclass
class SolveOptions:
    """Tolerances and limits shared by the LP and MILP solvers."""

    feas_tol: float = 1e-9
    opt_tol: float = 1e-9
    int_tol: float = 1e-6
    comp_tol: float = 1e-7
    time_limit: float | None = None
    node_limit: int | None = None
    iter_limit: int = 50000
    mip_gap: float = 1e-6

    def __post_init__(self) -> None:
        for name in ("feas_tol", "opt_tol", "int_tol", "comp_tol", "mip_gap"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass
class LinearProgram:
    """Dense LP: optimize c.x subject to row senses and variable bounds."""

    sense: str
    c: np.ndarray
    A: np.ndarray
    row_senses: list[str]
    b: np.ndarray
    lb: np.ndarray
    ub: np.ndarray

    @staticmethod
    def make(sense, c, A, row_senses, b, lb=None, ub=None) -> "LinearProgram":
        c = np.asarray(c, dtype=float)
        b = np.asarray(b, dtype=float)
        n, m = c.size, b.size
        A = np.asarray(A, dtype=float).reshape(m, n) if m else np.zeros((0, n))
        lb = np.zeros(n) if lb is None else np.asarray(lb, dtype=float)
        ub = np.full(n, np.inf) if ub is None else np.asarray(ub, dtype=float)
        lp = LinearProgram(sense, c, A, list(row_senses), b, lb, ub)
        lp.validate()
        return lp

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def n_rows(self) -> int:
        return self.b.size

    def validate(self) -> None:
        m, n = self.n_rows, self.n_vars
        if self.sense not in ("min", "max"):
            raise ValueError(f"bad sense {self.sense!r}")
        if self.A.shape != (m, n):
            raise ValueError(f"A shape {self.A.shape} != ({m}, {n})")
        if len(self.row_senses) != m:
            raise ValueError("row_senses length mismatch")
        if any(s not in (GE, LE, EQ) for s in self.row_senses):
            raise ValueError("row senses must be ge/le/eq")
        if not (np.all(np.isfinite(self.c)) and np.all(np.isfinite(self.b))):
            raise ValueError("costs and rhs must be finite")
        if not np.all(np.isfinite(self.A)):
            raise ValueError("matrix entries must be finite")
        if np.any(self.lb > self.ub):
            raise ValueError("lb > ub")


@dataclass
class LpSolution:
    status: str
    x: np.ndarray | None = None
    y: np.ndarray | None = None
    objective: float | None = None
    certificate: np.ndarray | None = None
    iterations: int = 0


@dataclass
class MilpProblem:
    lp: LinearProgram
    binary: list[int]
    # optional per-binary branching weight, added to fractionality when
    # choosing the branch variable (drivers first, consequences later)
    priority: list[float] | None = None

    def validate(self) -> None:
        self.lp.validate()
        n = self.lp.n_vars
        if any(j < 0 or j >= n for j in self.binary):
            raise ValueError("binary index out of range")
        if len(set(self.binary)) != len(self.binary):
            raise ValueError("duplicate binary index")
        if self.priority is not None and len(self.priority) != len(self.binary):
            raise ValueError("priority length mismatch")


@dataclass
class MilpSolution:
    status: str
    x: np.ndarray | None = None
    objective: float | None = None
    bound: float | None = None
    gap: float | None = None
    nodes: int = 0


def dump_lp(lp: LinearProgram) -> str:
    """Plain-text fixed-format listing of an LP, for bug reports."""
    out = [f"{lp.sense} {lp.n_vars} vars {lp.n_rows} rows"]
    out.append("c " + " ".join(f"{v:.17g}" for v in lp.c))
    for i in range(lp.n_rows):
        coeffs = " ".join(f"{v:.17g}" for v in lp.A[i])
        out.append(f"r{i} {lp.row_senses[i]} {lp.b[i]:.17g} : {coeffs}")
    out.append("bounds " + " ".join(f"[{lo:.17g},{hi:.17g}]" for lo, hi in zip(lp.lb, lp.ub)))
    return "\n".join(out)


def lp_dual_of(lp: LinearProgram) -> LinearProgram:
    """Mechanical dual of a pure-inequality/equality LP with x >= 0.

    min c.x s.t. A x {ge,le,eq} b, x >= 0   <->
    max b.y s.t. A'.y <= c, y_ge >= 0, y_le <= 0, y_eq free
    (and symmetrically for a max primal).
    """
    if np.any(lp.lb != 0.0) or np.any(np.isfinite(lp.ub)):
        raise ValueError("lp_dual_of expects default bounds x >= 0")
    m = lp.n_rows
    lo = np.zeros(m)
    hi = np.full(m, np.inf)
    for i, s in enumerate(lp.row_senses):
        if s == LE:
            lo[i], hi[i] = -np.inf, 0.0
        elif s == EQ:
            lo[i], hi[i] = -np.inf, np.inf
    if lp.sense == "min":
        return LinearProgram.make("max", lp.b, lp.A.T, [LE] * lp.n_vars, lp.c, lo, hi)
    return LinearProgram.make("min", lp.b, lp.A.T, [GE] * lp.n_vars, lp.c, -hi, -lo)


class _Tableau:
    """Equality-form working problem: min c.x, A x = b, l <= x <= u.

    Columns 0..n-1 are the user's variables, then one slack per
    inequality row, then one artificial per row (used in phase 1 and
    pinned to zero afterwards).
    """

    def __init__(self, lp: LinearProgram, opts: SolveOptions):
        self.opts = opts
        m, n = lp.n_rows, lp.n_vars
        self.m, self.n_struct = m, n
        self.obj_sign = 1.0 if lp.sense == "min" else -1.0

        n_slack = sum(1 for s in lp.row_senses if s != EQ)
        N = n + n_slack + m
        A = np.zeros((m, N))
        A[:, :n] = lp.A
        lb = np.zeros(N)
        ub = np.full(N, np.inf)
        lb[:n], ub[:n] = lp.lb, lp.ub
        k = n
        for i, s in enumerate(lp.row_senses):
            if s == EQ:
                continue
            A[i, k] = -1.0 if s == GE else 1.0
            k += 1
        self.art0 = k
        self.A, self.b = A, lp.b.copy()
        self.lb, self.ub = lb, ub
        self.c_user = np.zeros(N)
        self.c_user[:n] = self.obj_sign * lp.c
        self.N = N

        # nonbasic start at the finite bound nearest zero, free vars at 0
        self.vstat = np.full(N, _AT_LO, dtype=np.int8)
        self.xval = np.zeros(N)
        for j in range(self.art0):
            if np.isfinite(lb[j]):
                self.vstat[j], self.xval[j] = _AT_LO, lb[j]
            elif np.isfinite(ub[j]):
                self.vstat[j], self.xval[j] = _AT_UP, ub[j]
            else:
                self.vstat[j], self.xval[j] = _FREE, 0.0

        resid = self.b - A[:, : self.art0] @ self.xval[: self.art0]
        signs = np.where(resid >= 0, 1.0, -1.0)
        for i in range(m):
            A[i, self.art0 + i] = signs[i]
            self.xval[self.art0 + i] = abs(resid[i])
            self.vstat[self.art0 + i] = _BASIC
        self.basis = np.arange(self.art0, self.art0 + m)
        self.binv = np.diag(signs) if m else np.zeros((0, 0))
        self.iters = 0
        self.ray: np.ndarray | None = None
        self.banned = np.zeros(N, dtype=bool)

    def _refresh(self) -> None:
        B = self.A[:, self.basis]
        try:
            self.binv = np.linalg.inv(B)
        except np.linalg.LinAlgError:
            self.binv = np.linalg.pinv(B)
        self._sync_rvec()

    def _sync_rvec(self) -> None:
        nb = np.flatnonzero(self.vstat != _BASIC)
        self.rvec = self.b - self.A[:, nb] @ self.xval[nb]

    def _xb(self) -> np.ndarray:
        return self.binv @ self.rvec

    def run(self, c: np.ndarray, iter_budget: int, tol_factor: float = 1.0) -> str:
        """Minimize c.x from the current basis.  Returns a status string."""
        tol_vec = max(self.opts.opt_tol * tol_factor, 1e-13) * (1.0 + np.abs(c))
        stall = 0
        bland = False  # sticky anti-cycling mode: engaged on long stalls,
        #                released only by a strictly improving step
        self.banned[:] = False
        self._sync_rvec()
        self.xval[self.basis] = self._xb()
        for _ in range(iter_budget):
            self.iters += 1
            y = c[self.basis] @ self.binv
            d = c - y @ self.A
            bland = bland or stall >= _STALL_LIMIT
            enter, direction = self._price(d, tol_vec, bland)
            if enter < 0:
                self.xval[self.basis] = self._xb()
                return OPTIMAL
            col = self.binv @ self.A[:, enter] * direction
            leave, t, bound_flip = self._ratio(enter, direction, col, bland)
            if leave == -2:
                # a recession claim is only as good as the arithmetic that
                # produced it: accept the ray when raw data confirms it,
                # otherwise ban the column at this basis and keep going
                self._store_ray(enter, direction, col)
                if self._ray_checks(c):
                    return UNBOUNDED
                self._refresh()
                self.xval[self.basis] = self._xb()
                self.banned[enter] = True
                continue
            self._pivot(enter, direction, col, leave, t, bound_flip)
            self.banned[:] = False
            if t > self.opts.feas_tol:
                stall = 0
                bland = False
            else:
                stall += 1
            if self.iters % _REFRESH_EVERY == 0:
                self._refresh()
                self.xval[self.basis] = self._xb()
        return LIMIT

    def _ray_checks(self, c: np.ndarray) -> bool:
        """Raw-arithmetic validation of a stored recession direction."""
        ray = self.ray
        scale = 1.0 + float(np.max(np.abs(ray)))
        if self.m:
            if float(np.max(np.abs(self.A @ ray))) > 1e-7 * scale:
                return False
        lo_bad = (ray < -1e-9 * scale) & np.isfinite(self.lb)
        up_bad = (ray > 1e-9 * scale) & np.isfinite(self.ub)
        if bool(np.any(lo_bad | up_bad)):
            return False
        drift = float(c @ ray)
        mass = float(np.abs(c) @ np.abs(ray))
        return drift < -1e-9 * (1.0 + mass)

    def _price(self, d: np.ndarray, tol_vec: np.ndarray, bland: bool) -> tuple[int, float]:
        stat = self.vstat
        movable = self.ub - self.lb > 0.0
        can_inc = ((stat == _AT_LO) | (stat == _FREE)) & movable
        can_dec = ((stat == _AT_UP) | (stat == _FREE)) & movable
        attract_inc = np.where(can_inc, -d, -np.inf)
        attract_dec = np.where(can_dec, d, -np.inf)
        attract = np.maximum(attract_inc, attract_dec)
        if self.m:
            attract[self.basis] = -np.inf
        attract[self.banned] = -np.inf
        elig = attract > tol_vec
        if not elig.any():
            return -1, 0.0
        if bland:
            j = int(np.flatnonzero(elig)[0])
        else:
            j = int(np.argmax(np.where(elig, attract, -np.inf)))
        direction = 1.0 if attract_inc[j] >= attract_dec[j] else -1.0
        return j, direction

    def _ratio(self, enter: int, direction: float, col: np.ndarray,
               bland: bool = False):
        """Smallest step blocking a basic variable or the entering bound.

        Returns (leave_pos, step, bound_flip); leave_pos -2 flags an
        unbounded direction, -1 a bound flip without basis change.  In
        anti-cycling mode ties among blocking rows are broken by the
        smallest basic-variable index (the full textbook rule; breaking by
        row position alone can still cycle).
        """
        ftol = self.opts.feas_tol
        span = (self.ub[enter] - self.xval[enter]) if direction > 0 \
            else (self.xval[enter] - self.lb[enter])
        t_best = span if np.isfinite(span) else np.inf

        if self.m:
            xb = self.xval[self.basis]
            lo_b, up_b = self.lb[self.basis], self.ub[self.basis]
            dec = col > ftol
            inc = col < -ftol
            with np.errstate(invalid="ignore"):
                t_lo = np.where(dec & np.isfinite(lo_b), (xb - lo_b) / np.where(dec, col, 1.0), np.inf)
                t_up = np.where(inc & np.isfinite(up_b), (xb - up_b) / np.where(inc, col, 1.0), np.inf)
            t_row = np.maximum(np.minimum(t_lo, t_up), 0.0)
            i = int(np.argmin(t_row))
            if np.isfinite(t_row[i]) and bland:
                near = np.flatnonzero(t_row <= t_row[i] + ftol)
                i = int(near[np.argmin(self.basis[near])])
            if t_row[i] < t_best - ftol:
                return i, float(t_row[i]), False
        if not np.isfinite(t_best):
            return -2, np.inf, False
        return -1, float(t_best), True

    def _pivot(self, enter, direction, col, leave, t, bound_flip) -> None:
        self.xval[self.basis] -= t * col
        self.xval[enter] += t * direction
        self.rvec -= self.A[:, enter] * (t * direction)
        if bound_flip:
            self.vstat[enter] = _AT_UP if direction > 0 else _AT_LO
            return
        out = self.basis[leave]
        to_lower = col[leave] > 0
        bnd = self.lb[out] if to_lower else self.ub[out]
        self.xval[out] = bnd if np.isfinite(bnd) else 0.0
        self.vstat[out] = _AT_LO if to_lower else _AT_UP
        self.basis[leave] = enter
        self.vstat[enter] = _BASIC
        # the residual tracks nonbasic contributions only: the entering
        # column's share leaves it, the leaving variable's share joins
        self.rvec += self.A[:, enter] * self.xval[enter]
        self.rvec -= self.A[:, out] * self.xval[out]
        piv_col = self.binv @ self.A[:, enter]
        piv = piv_col[leave]
        if abs(piv) < 1e-9:
            # a small pivot would amplify update error; refactorize instead
            self._refresh()
        else:
            row = self.binv[leave] / piv
            self.binv -= np.outer(piv_col, row)
            self.binv[leave] = row
        # recompute basic values exactly: ratio tests on drifted values
        # walk the iteration through infeasible space and poison both the
        # stop decisions and the reported point
        self.xval[self.basis] = self._xb()

    def _store_ray(self, enter, direction, col) -> None:
        ray = np.zeros(self.N)
        ray[enter] = direction
        if self.m:
            ray[self.basis] = -col
        self.ray = ray


def _scaled(lp: LinearProgram) -> tuple[LinearProgram, np.ndarray, np.ndarray]:
    """Power-of-two row/column equilibration (exact in floating point)."""
    A = lp.A
    m, n = A.shape
    r = np.ones(m)
    cs = np.ones(n)
    if m and n:
        with np.errstate(divide="ignore"):
            rmax = np.max(np.abs(A), axis=1)
            r = np.where(rmax > 0, np.exp2(-np.round(np.log2(np.where(rmax > 0, rmax, 1.0)))), 1.0)
            A2 = A * r[:, None]
            cmax = np.max(np.abs(A2), axis=0)
            cs = np.where(cmax > 0, np.exp2(-np.round(np.log2(np.where(cmax > 0, cmax, 1.0)))), 1.0)
    scaled = LinearProgram(
        lp.sense,
        lp.c * cs,
        (A * r[:, None]) * cs[None, :],
        list(lp.row_senses),
        lp.b * r,
        lp.lb / cs,
        lp.ub / cs,
    )
    return scaled, r, cs


def lp_solve(lp: LinearProgram, opts: SolveOptions | None = None) -> LpSolution:
    """Solve an LP; statuses are optimal/infeasible/unbounded/limit."""
    opts = opts or SolveOptions()
    lp.validate()
    if lp.n_vars == 0:
        ok = all(
            (s == GE and 0 >= bi - opts.feas_tol)
            or (s == LE and 0 <= bi + opts.feas_tol)
            or (s == EQ and abs(bi) <= opts.feas_tol)
            for s, bi in zip(lp.row_senses, lp.b)
        )
        if ok:
            return LpSolution(OPTIMAL, np.zeros(0), np.zeros(lp.n_rows), 0.0)
        farkas = np.array([np.sign(bi) if s == EQ else (1.0 if s == GE else -1.0)
                           for s, bi in zip(lp.row_senses, lp.b)])
        return LpSolution(INFEASIBLE, certificate=farkas)

    work, rscale, cscale = _scaled(lp)
    tab = _Tableau(work, opts)

    def run_confirmed(c: np.ndarray, tol_factor: float) -> str:
        """Run to a terminal claim, then refactorize and confirm it.

        Terminal claims reached through long product-form update chains can
        be artifacts of a stale basis inverse; a fresh factorization either
        reproduces the claim or the run simply continues from better data.
        """
        status = tab.run(c, opts.iter_limit, tol_factor)
        for _ in range(3):
            if status != OPTIMAL:
                return status
            prev = float(c @ tab.xval)
            tab._refresh()
            tab.xval[tab.basis] = tab._xb()
            status = tab.run(c, opts.iter_limit, tol_factor)
            if status == OPTIMAL and \
                    abs(float(c @ tab.xval) - prev) <= opts.opt_tol * (1.0 + abs(prev)):
                return status
        return status

    c1 = np.zeros(tab.N)
    c1[tab.art0:] = 1.0
    # phase 1 prices with a much tighter tolerance: leftover artificial mass
    # would otherwise leak scaled-row violations into the reported solution
    status = run_confirmed(c1, 1e-3)
    if status == LIMIT:
        return LpSolution(LIMIT, iterations=tab.iters)
    bmax = float(np.max(np.abs(work.b))) if tab.m else 0.0
    if float(c1 @ tab.xval) > opts.feas_tol * (10.0 + 0.01 * bmax):
        y = c1[tab.basis] @ tab.binv
        return LpSolution(INFEASIBLE, certificate=y * rscale, iterations=tab.iters)

    tab.ub[tab.art0:] = 0.0
    tab.xval[tab.art0:] = 0.0
    status = run_confirmed(tab.c_user, 1.0)
    if status == LIMIT:
        return LpSolution(LIMIT, iterations=tab.iters)
    if status == UNBOUNDED:
        ray = tab.ray[: tab.n_struct] * cscale
        return LpSolution(UNBOUNDED, certificate=ray, iterations=tab.iters)

    x = tab.xval[: tab.n_struct] * cscale
    y = (tab.c_user[tab.basis] @ tab.binv) * rscale * tab.obj_sign
    return LpSolution(OPTIMAL, x, y, float(lp.c @ x), iterations=tab.iters)


def _is_integral(x: np.ndarray, binary: list[int], tol: float) -> bool:
    v = x[binary]
    return bool(np.all(np.abs(v - np.round(v)) <= tol))


_BOX_FALLBACK = 1e8


def lp_solve_boxed(lp: LinearProgram, opts: SolveOptions) -> LpSolution:
    """lp_solve with an arbiter for dubious recession claims.

    Near-null directions whose drift sign is at rounding level can be
    declared unbounded; re-solving inside a huge artificial box settles
    the question: a solution pressed against the box is genuinely
    divergent, anything else is the real optimum.
    """
    sol = lp_solve(lp, opts)
    if sol.status != UNBOUNDED:
        return sol
    ub = np.where(np.isfinite(lp.ub), lp.ub, _BOX_FALLBACK)
    lb = np.where(np.isfinite(lp.lb), lp.lb, -_BOX_FALLBACK)
    boxed = lp_solve(replace(lp, lb=lb, ub=ub), opts)
    if boxed.status == OPTIMAL and np.max(np.abs(boxed.x)) < 0.9 * _BOX_FALLBACK:
        return boxed
    return sol


def milp_solve(milp: MilpProblem, opts: SolveOptions | None = None) -> MilpSolution:
    """Branch and bound on binaries: most-fractional branching, best-bound order."""
    import time as _time

    opts = opts or SolveOptions()
    milp.validate()
    lp = milp.lp
    t0 = _time.monotonic()
    minsign = 1.0 if lp.sense == "min" else -1.0

    lb0 = lp.lb.copy()
    ub0 = lp.ub.copy()
    for j in milp.binary:
        lb0[j] = max(lb0[j], 0.0)
        ub0[j] = min(ub0[j], 1.0)

    heap: list[tuple[float, int, np.ndarray, np.ndarray]] = []
    counter = 0
    incumbent: np.ndarray | None = None
    inc_obj = np.inf  # in min-sign units
    nodes = 0
    hit_limit = False
    unbounded = False

    heapq.heappush(heap, (-np.inf, counter, lb0, ub0))
    while heap:
        bound_key, _, nlb, nub = heapq.heappop(heap)
        if bound_key >= inc_obj - opts.mip_gap * max(1.0, abs(inc_obj)):
            heapq.heappush(heap, (bound_key, -1, nlb, nub))
            break  # best-bound order: every remaining node is pruned too
        if opts.node_limit is not None and nodes >= opts.node_limit:
            heapq.heappush(heap, (bound_key, -1, nlb, nub))
            hit_limit = True
            break
        if opts.time_limit is not None and _time.monotonic() - t0 > opts.time_limit:
            heapq.heappush(heap, (bound_key, -1, nlb, nub))
            hit_limit = True
            break
        nodes += 1
        sol = lp_solve_boxed(replace(lp, lb=nlb, ub=nub), opts)
        if sol.status == INFEASIBLE:
            continue
        if sol.status == UNBOUNDED:
            unbounded = True
            break
        if sol.status == LIMIT:
            heapq.heappush(heap, (bound_key, -1, nlb, nub))
            hit_limit = True
            break
        relax = minsign * sol.objective
        if relax >= inc_obj - opts.mip_gap * max(1.0, abs(inc_obj)):
            continue
        if _is_integral(sol.x, milp.binary, opts.int_tol):
            # cleanup solve with binaries pinned to their rounded values:
            # residual fractionality must not leak into the continuous part
            rounded = np.round(sol.x[milp.binary]) + 0.0
            clb, cub = nlb.copy(), nub.copy()
            clb[milp.binary] = rounded
            cub[milp.binary] = rounded
            cs = lp_solve_boxed(replace(lp, lb=clb, ub=cub), opts)
            if cs.status == OPTIMAL:
                fixed = minsign * cs.objective
                if fixed < inc_obj:
                    inc_obj = fixed
                    incumbent = cs.x.copy()
                    incumbent[milp.binary] = rounded
                if fixed - relax <= opts.mip_gap * max(1.0, abs(fixed)):
                    continue  # rounding lost nothing: node fathomed
            # rounding mattered (or failed): branch to settle it exactly
        frac = np.abs(sol.x[milp.binary] - np.round(sol.x[milp.binary]))
        score = frac.copy()
        if milp.priority is not None:
            score = np.where(frac > opts.int_tol, frac + np.asarray(milp.priority), 0.0)
        j = milp.binary[int(np.argmax(score))]
        for fix in (0.0, 1.0):
            clb, cub = nlb.copy(), nub.copy()
            clb[j] = cub[j] = fix
            counter += 1
            heapq.heappush(heap, (relax, counter, clb, cub))

    if unbounded:
        return MilpSolution(UNBOUNDED, nodes=nodes)
    if incumbent is None:
        if hit_limit:
            bound = min((k for k, _, _, _ in heap), default=np.inf)
            return MilpSolution(LIMIT, bound=minsign * bound if np.isfinite(bound) else None,
                                nodes=nodes)
        return MilpSolution(INFEASIBLE, nodes=nodes)
    bound = min([k for k, _, _, _ in heap] + [inc_obj])
    gap = max(float((inc_obj - bound) / max(1.0, abs(inc_obj))), 0.0)
    status = LIMIT if hit_limit and gap > opts.mip_gap else OPTIMAL
    return MilpSolution(status, incumbent, minsign * inc_obj, minsign * bound, gap, nodes)
