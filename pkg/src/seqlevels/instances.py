"""Instance builders: hand toys, symmetric chains, and a seeded random family.

The random family is constructed to respect the feasible-and-bounded
assumption by design: every level carries box rows that keep its
variables compact, and every random row's right-hand side is chosen so
the row is satisfiable for any binary z and any chained predecessor
inside its box.  Upper coupling rows are allowed to prune z values (and
occasionally all of them); tests that need a solvable instance filter on
the oracle.
"""

from __future__ import annotations

import numpy as np

from .model import (
    ComplicatingBlock,
    CouplingBlock,
    LevelBlock,
    LinearSystem,
    MatrixBlock,
    MimlsfProblem,
    UpperBlock,
)


def toy_t1(c_z: float = 0.5) -> MimlsfProblem:
    """Two levels, one binary: upper pays c_z for z plus the first level's cost.

    Level 1 needs x1 >= 1 - z, level 2 must cover x2 >= x1.  With the
    default price the optimum commits z and both followers sit at zero.
    """
    lvl1 = LevelBlock(
        c=(1.0,),
        A=MatrixBlock.from_dense([[1.0]]),
        D=MatrixBlock.from_dense([[1.0]]),
        b=(1.0,),
    )
    lvl2 = LevelBlock(
        c=(1.0,),
        A=MatrixBlock.from_dense([[1.0]]),
        D=MatrixBlock(1, 1, ()),
        b=(0.0,),
        B=MatrixBlock.from_dense([[-1.0]]),
    )
    upper = UpperBlock(m=1, c_z=(c_z,), c_x=((1.0,), (0.0,)))
    return MimlsfProblem(n=2, upper=upper, levels=(lvl1, lvl2))


def symmetric_chain(n: int, size: int = 2) -> MimlsfProblem:
    """n identical levels passing a floor downstream; exercises deep scaling.

    Level i must keep its vector above the previous level's (component
    wise) and above 1 - z_mean at the first level.
    """
    m = size
    first = LevelBlock(
        c=tuple([1.0] * size),
        A=MatrixBlock.from_dense(np.eye(size)),
        D=MatrixBlock.from_dense(np.eye(size) / size),
        b=tuple([1.0] * size),
    )
    levels = [first]
    for _ in range(1, n):
        levels.append(LevelBlock(
            c=tuple([1.0] * size),
            A=MatrixBlock.from_dense(np.eye(size)),
            D=MatrixBlock(size, m, ()),
            b=tuple([0.0] * size),
            B=MatrixBlock.from_dense(-np.eye(size)),
        ))
    c_x = tuple(tuple(levels[0].c) if i == 0 else tuple([0.0] * size) for i in range(n))
    upper = UpperBlock(m=m, c_z=tuple([0.25] * m), c_x=c_x)
    return MimlsfProblem(n=n, upper=upper, levels=tuple(levels))


def trade_chain() -> MimlsfProblem:
    """Two levels with a steep cross-level trade.

    At small gamma the weighted collapse overshoots the first level
    (paying 1 there saves 20 downstream), so the single-level optimum
    drifts visibly from the sequential one and converges back as
    gamma -> 1; handy for observing the approximation trend.
    """
    lvl1 = LevelBlock(
        c=(1.0,),
        A=MatrixBlock.from_dense([[1.0], [-1.0]]),
        D=MatrixBlock.from_dense([[1.0], [0.0]]),
        b=(1.0, -3.0),
    )
    lvl2 = LevelBlock(
        c=(1.0,),
        A=MatrixBlock.from_dense([[1.0]]),
        D=MatrixBlock(1, 1, ()),
        b=(24.0,),
        B=MatrixBlock.from_dense([[20.0]]),
    )
    upper = UpperBlock(m=1, c_z=(30.0,), c_x=((1.0,), (1.0,)))
    return MimlsfProblem(n=2, upper=upper, levels=(lvl1, lvl2))


def _sparse(rng, rows, cols, density, lo, hi, decimals=3) -> np.ndarray:
    a = np.zeros((rows, cols))
    if rows and cols:
        mask = rng.random((rows, cols)) < density
        a[mask] = np.round(rng.uniform(lo, hi, size=int(mask.sum())), decimals)
    return a


def _row_rhs(a_row, witness, chain_row, chain_box, d_row, margin) -> float:
    """Largest rhs keeping  a.x + chain.x_prev + d.z >= rhs  satisfiable for
    the witness x, any chained point in its box, and any binary z."""
    val = float(a_row @ witness)
    if chain_row is not None:
        val += float(np.minimum(chain_row * chain_box, 0.0).sum())
    val += float(np.minimum(d_row, 0.0).sum())
    return round(val - margin, 3)


def random_mimlsf(
    seed: int,
    n: int = 2,
    m: int = 3,
    case: int = 1,
    max_vars: int = 4,
    extra_rows: int = 3,
    coupling_prob: float = 0.5,
    z_rows_prob: float = 0.3,
    calibrate: bool = True,
) -> MimlsfProblem:
    """Seeded random instance of the requested case (1, 2 or 3).

    Coupling rows are restricted to the first two levels: with the default
    scaling near one, deeper levels carry so small a weight that their
    coupling rows fall below any realistic solver tolerance, which makes
    knife-edge instances undecidable in floating point rather than hard.
    When ``calibrate`` is set the coupling right-hand sides are moved into
    decisive gaps of the per-z margin distribution (computed from the
    simulated follower chains), so every row either clearly holds or
    clearly prunes each z.
    """
    rng = np.random.default_rng(seed)
    sizes = [int(rng.integers(2, max_vars + 1)) for _ in range(n)]
    boxes = [np.round(rng.uniform(1.0, 3.0, size=s), 3) for s in sizes]
    witnesses = [np.round(rng.uniform(0.2, 0.9, size=s), 3) * boxes[i]
                 for i, s in enumerate(sizes)]

    levels: list[LevelBlock] = []
    for i in range(n):
        s = sizes[i]
        k = int(rng.integers(1, extra_rows + 1))
        A_rand = _sparse(rng, k, s, 0.7, -1.5, 2.0)
        A_rand[np.abs(A_rand).sum(axis=1) == 0, 0] = 1.0
        B_rand = _sparse(rng, k, sizes[i - 1], 0.4, -1.0, 1.0) if i else None
        D_rand = _sparse(rng, k, m, 0.5, -1.5, 1.5)
        rhs = [
            _row_rhs(A_rand[r], witnesses[i],
                     None if B_rand is None else B_rand[r],
                     None if i == 0 else boxes[i - 1],
                     D_rand[r], rng.uniform(0.05, 0.8))
            for r in range(k)
        ]
        # box rows -x_j >= -U_j keep the level compact
        A = np.vstack([A_rand, -np.eye(s)])
        D = np.vstack([D_rand, np.zeros((s, m))])
        b = np.array(rhs + [-u for u in boxes[i]])
        B = np.vstack([B_rand, np.zeros((s, sizes[i - 1]))]) if i else None
        levels.append(LevelBlock(
            c=tuple(np.round(rng.uniform(0.2, 3.0, size=s), 3)),
            A=MatrixBlock.from_dense(A),
            D=MatrixBlock.from_dense(D),
            b=tuple(b),
            B=MatrixBlock.from_dense(B) if B is not None else None,
            dual_bound=50.0,
        ))

    if case >= 2:
        c_x = tuple(tuple(levels[0].c) if i == 0 else tuple([0.0] * sizes[i])
                    for i in range(n))
    else:
        c_x = tuple(tuple(np.round(rng.uniform(-0.5, 2.0, size=sizes[i]), 3))
                    for i in range(n))

    z_feasible = None
    if rng.random() < z_rows_prob and m >= 2:
        A_z = np.ones((1, m))
        z_feasible = LinearSystem(MatrixBlock.from_dense(A_z), (1.0,), ("ge",))

    def coupling(i: int, on_duals: bool) -> CouplingBlock | None:
        if i > 1 or rng.random() > coupling_prob:
            return None
        dim = levels[i].n_rows if on_duals else sizes[i]
        g = _sparse(rng, 1, dim, 0.8, 0.1, 1.2)
        if np.abs(g).sum() == 0:
            g[0, 0] = 1.0
        h = _sparse(rng, 1, m, 0.5, -1.0, 1.0)
        if on_duals:
            rhs = round(float(0.15 * g.sum()) + float(np.minimum(h, 0.0).sum())
                        - rng.uniform(0.2, 1.0), 3)
        else:
            rhs = _row_rhs(g[0], witnesses[i], None, None, h[0], rng.uniform(0.3, 1.2))
        return CouplingBlock(MatrixBlock.from_dense(h), MatrixBlock.from_dense(g), (rhs,))

    primal = tuple(coupling(i, False) for i in range(n))
    dual = tuple(coupling(i, True) for i in range(n))
    if all(b is None for b in primal):
        primal = None
    if all(b is None for b in dual):
        dual = None

    dual_complicating = None
    if case != 3 and (case == 2 or rng.random() < coupling_prob):
        S = []
        for i in range(n):
            s = _sparse(rng, 1, levels[i].n_rows, 0.6, 0.1, 1.0) if i <= 1 \
                else np.zeros((1, levels[i].n_rows))
            S.append(MatrixBlock.from_dense(s))
        R = _sparse(rng, 1, m, 0.5, -1.0, 1.0)
        q = round(0.1 + float(np.minimum(R, 0.0).sum()) - rng.uniform(0.3, 1.5), 3)
        dual_complicating = ComplicatingBlock(MatrixBlock.from_dense(R), tuple(S), (q,))

    upper = UpperBlock(
        m=m,
        c_z=tuple(np.round(rng.uniform(0.1, 2.0, size=m), 3)),
        c_x=c_x,
        z_feasible=z_feasible,
        primal_coupling=primal,
        dual_coupling=dual,
        dual_complicating=dual_complicating,
    )
    p = MimlsfProblem(n=n, upper=upper, levels=tuple(levels))
    if calibrate:
        p = calibrate_coupling(p, rng)
    return p


def _decisive_threshold(values: np.ndarray, rng, want_separation: bool,
                        keep_mask: np.ndarray) -> tuple[float, np.ndarray]:
    """Pick a >=-row rhs so every value clears it by a decisive margin.

    Returns (rhs, satisfied mask).  ``keep_mask`` marks z values that must
    stay satisfied so the instance keeps at least one feasible binary.
    """
    delta = 0.05 * (1.0 + float(np.median(np.abs(values))))
    floor = float(values.min()) - delta
    if not want_separation or values.size < 2:
        return floor, np.ones(values.size, dtype=bool)
    order = np.argsort(values)
    sorted_vals = values[order]
    best_gap, best_at = 0.0, None
    for k in range(values.size - 1):
        gap = sorted_vals[k + 1] - sorted_vals[k]
        if gap > best_gap:
            best_gap, best_at = gap, k
    if best_at is None or best_gap < 2 * delta:
        return floor, np.ones(values.size, dtype=bool)
    rhs = float(0.5 * (sorted_vals[best_at] + sorted_vals[best_at + 1]))
    sat = values >= rhs
    if not np.any(sat & keep_mask):
        return floor, np.ones(values.size, dtype=bool)
    return rhs, sat


def calibrate_coupling(p: MimlsfProblem, rng) -> MimlsfProblem:
    """Move coupling right-hand sides into decisive margin gaps.

    Simulates the follower chain at every binary z, evaluates each upper
    coupling row there, and re-chooses its rhs so the row either clearly
    holds or clearly prunes each z; the feasible set is kept nonempty
    whenever any chain is feasible.
    """
    from .oracle import enumerate_z, simulate_followers

    chains = []
    for z in enumerate_z(p, enum_cap=12):
        zv = np.asarray(z, dtype=float)
        xs, ys, _ = simulate_followers(p, zv)
        if xs is not None:
            chains.append((zv, xs, ys))
    if not chains:
        return p
    # one chain is protected: separating rows must leave it feasible
    keep = np.zeros(len(chains), dtype=bool)
    keep[int(rng.integers(0, len(chains)))] = True

    def fix_block(blk: CouplingBlock | None, i: int, on_duals: bool):
        if blk is None:
            return None
        H, G = blk.H.dense(), blk.G.dense()
        new_b = []
        for r in range(G.shape[0]):
            vals = np.array([
                float(H[r] @ zv + G[r] @ (ys[i] if on_duals else xs[i]))
                for zv, xs, ys in chains
            ])
            rhs, _ = _decisive_threshold(vals, rng, rng.random() < 0.6, keep)
            new_b.append(rhs)
        return CouplingBlock(blk.H, blk.G, tuple(new_b))

    n = p.n
    primal = p.upper.primal_coupling
    dual = p.upper.dual_coupling
    if primal is not None:
        primal = tuple(fix_block(primal[i], i, False) for i in range(n))
    if dual is not None:
        dual = tuple(fix_block(dual[i], i, True) for i in range(n))
    dcomp = p.upper.dual_complicating
    if dcomp is not None:
        R = dcomp.R.dense()
        Ss = [S.dense() for S in dcomp.S]
        new_q = []
        for r in range(R.shape[0]):
            vals = np.array([
                float(R[r] @ zv + sum(Ss[i][r] @ ys[i] for i in range(n)))
                for zv, xs, ys in chains
            ])
            rhs, _ = _decisive_threshold(vals, rng, rng.random() < 0.6, keep)
            new_q.append(rhs)
        dcomp = ComplicatingBlock(dcomp.R, dcomp.S, tuple(new_q))

    upper = UpperBlock(
        m=p.upper.m,
        c_z=p.upper.c_z,
        c_x=p.upper.c_x,
        z_feasible=p.upper.z_feasible,
        primal_coupling=primal,
        dual_coupling=dual,
        dual_complicating=dcomp,
    )
    return MimlsfProblem(n=p.n, upper=upper, levels=p.levels)
