"""Command-line front end.

Commands: ``validate``, ``solve``, ``gamma-sweep``, and the case-study
family ``ucgca gen`` / ``ucgca compare`` / ``ucgca sweep``.  Solve output
is a JSON report; sweeps and comparisons write plot-ready CSV and, with
``--figures``, render the matching matplotlib panels next to the CSV.

Exit codes: 0 solved to the gap, 2 gap not reached, 3 infeasible,
4 invalid instance or incompatible options, 1 internal error.

All randomness is seeded through the flags, and timing columns are
written as zero unless ``--timings`` is passed, so identical invocations
produce byte-identical reports.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time


from .benders import Scheme, benders_loop
from .lpkernel import INFEASIBLE, LIMIT, OPTIMAL, SolveOptions
from .model import (
    AssumptionViolation,
    SchemaError,
    SeqlevelsError,
    classify_case,
    load_instance,
    validate_problem,
)
from .oracle import oracle_solve
from .slp import build_slp, sdg, solve_direct
from . import ucgca as uc

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_GAP = 2
EXIT_INFEASIBLE = 3
EXIT_INVALID = 4

log = logging.getLogger("seqlevels")

METHODS = ("direct", "benders:mono", "benders:case1", "benders:case2",
           "benders:case3", "oracle")
_SCHEME_OF = {
    "benders:mono": Scheme.MONOLITHIC,
    "benders:case1": Scheme.SEQUENTIAL_CASE1,
    "benders:case2": Scheme.INDEPENDENT_CASE2,
    "benders:case3": Scheme.SEPARATED_CASE3,
}


def _setup_logging() -> None:
    level = os.environ.get("SEQLEVELS_LOG", "error").lower()
    logging.basicConfig(
        stream=sys.stderr,
        level={"debug": logging.DEBUG, "info": logging.INFO}.get(level, logging.ERROR),
        format="%(levelname)s %(name)s: %(message)s",
    )


def _solve_options(args) -> SolveOptions:
    return SolveOptions(mip_gap=args.gap, time_limit=args.time_limit)


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def cmd_validate(args) -> int:
    try:
        p = load_instance(args.instance)
    except SchemaError as e:
        print(f"invalid instance: {e}", file=sys.stderr)
        return EXIT_INVALID
    rep = validate_problem(p)
    if rep.ok:
        print(f"ok: n={p.n} m={p.m} case={classify_case(p).name}")
        return EXIT_OK
    for issue in rep.issues:
        print(issue, file=sys.stderr)
    return EXIT_INVALID


def cmd_solve(args) -> int:
    try:
        p = load_instance(args.instance)
    except SchemaError as e:
        print(f"invalid instance: {e}", file=sys.stderr)
        return EXIT_INVALID
    rep = validate_problem(p)
    if not rep.ok:
        for issue in rep.issues:
            print(issue, file=sys.stderr)
        return EXIT_INVALID
    opts = _solve_options(args)
    report: dict = {"instance": args.instance, "method": args.method,
                    "gamma": args.gamma}
    t0 = time.monotonic()
    try:
        if args.method == "oracle":
            orep = oracle_solve(p, opts, enum_cap=args.enum_cap)
            if not orep.feasible:
                report.update(status="infeasible")
                _write(args.output, json.dumps(report, indent=1) + "\n")
                return EXIT_INFEASIBLE
            report.update(
                status="optimal",
                objective_descaled=orep.best_objective,
                z=list(orep.best_z),
            )
        elif args.method == "direct":
            slp = build_slp(p, args.gamma)
            sol = solve_direct(slp, opts)
            if sol.status == INFEASIBLE:
                report.update(status="infeasible")
                _write(args.output, json.dumps(report, indent=1) + "\n")
                return EXIT_INFEASIBLE
            report.update(
                status=sol.status,
                objective_descaled=sol.objective_descaled,
                z=None if sol.z is None else [int(v) for v in sol.z],
            )
            if sol.z is not None:
                gaps = sdg(sol.levels)
                report.update(sdg_per_level=gaps.per_level, sdg_total=gaps.total,
                              mip_gap=sol.milp.gap, warnings=sol.warnings)
            if sol.status == LIMIT:
                report["bounds"] = [sol.milp.bound, sol.milp.objective]
                _finish(report, args, t0)
                return EXIT_GAP
        else:
            scheme = _SCHEME_OF[args.method]
            brep = benders_loop(p, args.gamma, scheme, opts, seed=args.seed,
                                stabilize=args.stabilize)
            report.update(
                status=brep.status,
                objective_descaled=brep.objective_descaled,
                z=None if brep.z is None else [int(v) for v in brep.z],
                bounds=[brep.lb, brep.ub],
                iterations=brep.iterations,
                warnings=brep.warnings,
            )
            if args.iteration_log:
                _write(args.iteration_log, brep.log_csv(timings=args.timings))
            if brep.status == INFEASIBLE:
                _finish(report, args, t0)
                return EXIT_INFEASIBLE
            if brep.status == LIMIT:
                _finish(report, args, t0)
                return EXIT_GAP
    except AssumptionViolation as e:
        report.update(status=e.status)
        _finish(report, args, t0)
        return EXIT_INFEASIBLE if e.status == "infeasible" else EXIT_INVALID
    except SeqlevelsError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    _finish(report, args, t0)
    return EXIT_OK


def _finish(report: dict, args, t0: float) -> None:
    report["wall_ms"] = round(1000.0 * (time.monotonic() - t0), 3) if args.timings else 0
    _write(args.output, json.dumps(report, indent=1) + "\n")


def cmd_gamma_sweep(args) -> int:
    try:
        p = load_instance(args.instance)
    except SchemaError as e:
        print(f"invalid instance: {e}", file=sys.stderr)
        return EXIT_INVALID
    opts = _solve_options(args)
    gammas = [float(v) for v in args.gammas.split(",")]
    oracle_obj = None
    if p.m <= args.enum_cap:
        try:
            orep = oracle_solve(p, opts, enum_cap=args.enum_cap)
            oracle_obj = orep.best_objective if orep.feasible else None
        except SeqlevelsError:
            oracle_obj = None
    rows = ["gamma,status,objective_descaled,sdg_per_level,sdg_total,"
            "objective_vs_oracle_pct,wall_ms"]
    results = []
    for gamma in gammas:
        t0 = time.monotonic()
        try:
            sol = solve_direct(build_slp(p, gamma), opts)
            status = sol.status
        except SeqlevelsError as e:
            log.info("gamma %s failed: %s", gamma, e)
            rows.append(f"{gamma},error,,,,,0")
            continue
        ms = 1000.0 * (time.monotonic() - t0) if args.timings else 0.0
        if status != OPTIMAL:
            rows.append(f"{gamma},{status},,,,,{ms:.3f}")
            continue
        gaps = sdg(sol.levels)
        vs = ""
        if oracle_obj not in (None, 0.0):
            vs = f"{abs(sol.objective_descaled - oracle_obj) / abs(oracle_obj) * 100.0:.10g}"
        per = ";".join(f"{v:.10g}" for v in gaps.per_level)
        rows.append(f"{gamma},{status},{sol.objective_descaled:.12g},{per},"
                    f"{gaps.total:.10g},{vs},{ms:.3f}")
        results.append((gamma, gaps.total))
    _write(args.output, "\n".join(rows) + "\n")
    if args.figures and results:
        _render_gamma_figure(results, args.output)
    return EXIT_OK


def _figure_path(output: str | None, suffix: str) -> str:
    base = "sweep" if output in (None, "-") else os.path.splitext(output)[0]
    return base + suffix


def _render_gamma_figure(results, output) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    gs = [g for g, _ in results]
    totals = [t for _, t in results]
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.semilogy([1 - g for g in gs], [max(t, 1e-12) for t in totals], "o-")
    ax.set_xscale("log")
    ax.invert_xaxis()
    ax.set_xlabel("1 - gamma")
    ax.set_ylabel("total strong-duality gap [%]")
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    path = _figure_path(output, "_sdg.png")
    fig.savefig(path, dpi=150)
    plt.close(fig)
    log.info("figure written to %s", path)


def cmd_ucgca_gen(args) -> int:
    maker = uc.make_tne5 if args.size == "tiny" else uc.make_small
    inst = maker(seed=args.seed, eta_e=args.eta_e, eta_g=args.eta_g,
                 alpha=args.alpha)
    uc.save_ucgca(inst, args.output or "ucgca_instance.json")
    if args.emit_mimlsf:
        from .model import save_instance

        p, _ = uc.build_mimlsf(inst)
        save_instance(p, args.emit_mimlsf)
    return EXIT_OK


def _compare_row(inst, gamma, opts, timings) -> tuple[str, uc.Metrics]:
    t0 = time.monotonic()
    ucr = uc.solve_ucgca(inst, gamma, opts)
    bmr = uc.solve_bm(inst, opts)
    m = uc.compare_metrics(inst, ucr, bmr)
    ms = 1000.0 * (time.monotonic() - t0) if timings else 0.0
    row = (f"{inst.eta_e},{inst.eta_g},{inst.gfpps[0].alpha},"
           f"{m.electric['bm']:.12g},{m.gas['bm']:.12g},{m.carbon['bm']:.12g},"
           f"{m.losses['bm']:.12g},{m.total['bm']:.12g},"
           f"{m.electric['ucgca']:.12g},{m.gas['ucgca']:.12g},"
           f"{m.carbon['ucgca']:.12g},{m.losses['ucgca']:.12g},"
           f"{m.total['ucgca']:.12g},{m.tc_diff_pct:.10g},"
           f"{m.sdg_total:.10g},{ms:.3f}")
    return row, m


_COMPARE_HEADER = ("eta_e,eta_g,alpha,bm_electric,bm_gas,bm_carbon,bm_losses,"
                   "bm_total,ucgca_electric,ucgca_gas,ucgca_carbon,"
                   "ucgca_losses,ucgca_total,tc_diff_pct,sdg_total,wall_ms")


def cmd_ucgca_compare(args) -> int:
    try:
        inst = uc.load_ucgca(args.instance)
    except (SeqlevelsError, OSError, json.JSONDecodeError) as e:
        print(f"invalid instance: {e}", file=sys.stderr)
        return EXIT_INVALID
    opts = _solve_options(args)
    try:
        row, _ = _compare_row(inst, args.gamma, opts, args.timings)
    except SeqlevelsError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INTERNAL
    _write(args.output, _COMPARE_HEADER + "\n" + row + "\n")
    return EXIT_OK


def _sweep_point(payload):
    """One grid point; top level so a process pool can ship it."""
    obj, ee, eg, al, gamma, gap, time_limit, timings = payload
    inst = uc.with_stress(uc.instance_from_json(obj), eta_e=ee, eta_g=eg, alpha=al)
    opts = SolveOptions(mip_gap=gap, time_limit=time_limit)
    try:
        return _compare_row(inst, gamma, opts, timings)
    except SeqlevelsError as e:
        return f"{ee},{eg},{al},error,,,,,,,,,,,,0", None


def cmd_ucgca_sweep(args) -> int:
    try:
        inst = uc.load_ucgca(args.instance)
    except (SeqlevelsError, OSError, json.JSONDecodeError) as e:
        print(f"invalid instance: {e}", file=sys.stderr)
        return EXIT_INVALID
    grid = [(ee, eg, al)
            for ee in (float(v) for v in args.eta_e_grid.split(","))
            for eg in (float(v) for v in args.eta_g_grid.split(","))
            for al in (float(v) for v in args.alpha_grid.split(","))]
    obj = uc.instance_to_json(inst)
    payloads = [(obj, ee, eg, al, args.gamma, args.gap, args.time_limit,
                 args.timings) for ee, eg, al in grid]
    if args.jobs > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_point, payloads))
    else:
        results = [_sweep_point(pl) for pl in payloads]
    rows = [_COMPARE_HEADER] + [row for row, _ in results]
    points = [(ee, eg, al, m) for (ee, eg, al), (_, m) in zip(grid, results)
              if m is not None]
    _write(args.output, "\n".join(rows) + "\n")
    if args.figures and points:
        _render_compare_figure(points, args.output)
    return EXIT_OK


def _render_compare_figure(points, output) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(1, 3, figsize=(11, 3.4))
    by_ee: dict = {}
    for ee, eg, al, m in points:
        by_ee.setdefault(ee, []).append((eg, m))
    for ee, series in sorted(by_ee.items()):
        series.sort()
        egs = [eg for eg, _ in series]
        axes[0].plot(egs, [m.total["bm"] for _, m in series], "o--",
                     label=f"benchmark, eta_e={ee}")
        axes[0].plot(egs, [m.total["ucgca"] for _, m in series], "s-",
                     label=f"aware, eta_e={ee}")
        axes[1].plot(egs, [m.losses["bm"] for _, m in series], "o--")
        axes[1].plot(egs, [m.losses["ucgca"] for _, m in series], "s-")
        axes[2].plot(egs, [m.total["ucgca"] - m.total["bm"] for _, m in series], "s-")
    axes[0].set_ylabel("total cost [$]")
    axes[1].set_ylabel("financial losses [$]")
    axes[2].set_ylabel("total cost difference [$]")
    for ax in axes:
        ax.set_xlabel("gas stress eta_g")
        ax.grid(True, alpha=0.3)
    axes[0].legend(fontsize=7)
    fig.tight_layout()
    path = _figure_path(output, "_compare.png")
    fig.savefig(path, dpi=150)
    plt.close(fig)
    log.info("figure written to %s", path)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="seqlevels",
                                 description="multi-level sequential-market solver toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp, with_method=False):
        sp.add_argument("--gamma", type=float, default=0.9999)
        sp.add_argument("--gap", type=float, default=1e-6)
        sp.add_argument("--time-limit", type=float, default=None)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--jobs", type=int, default=1,
                        help="parallelism degree for sweeps (rows stay in grid order)")
        sp.add_argument("--output", "-o", default=None)
        sp.add_argument("--timings", action="store_true",
                        help="write real wall times (breaks byte-identical reruns)")
        sp.add_argument("--enum-cap", type=int, default=16)
        if with_method:
            sp.add_argument("--method", choices=METHODS, default="direct")
            sp.add_argument("--stabilize", action="store_true",
                            help="in-out stabilized cut separation")
            sp.add_argument("--iteration-log", default=None,
                            help="CSV path for the decomposition iteration log")

    sp = sub.add_parser("validate", help="check an instance file")
    sp.add_argument("instance")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("solve", help="solve one instance")
    sp.add_argument("instance")
    common(sp, with_method=True)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("gamma-sweep", help="solve across scaling factors")
    sp.add_argument("instance")
    sp.add_argument("--gammas", default="0.9,0.99,0.999,0.9999")
    sp.add_argument("--figures", action="store_true")
    common(sp)
    sp.set_defaults(func=cmd_gamma_sweep)

    up = sub.add_parser("ucgca", help="gas/carbon-aware commitment case study")
    usub = up.add_subparsers(dest="ucgca_command", required=True)

    sp = usub.add_parser("gen", help="generate a case-study instance")
    sp.add_argument("--eta-e", type=float, default=1.0)
    sp.add_argument("--eta-g", type=float, default=1.0)
    sp.add_argument("--alpha", type=float, default=1.0)
    sp.add_argument("--seed", type=int, default=7)
    sp.add_argument("--size", choices=("tiny", "small"), default="tiny")
    sp.add_argument("--output", "-o", default=None)
    sp.add_argument("--emit-mimlsf", default=None,
                    help="also write the mapped matrix-form instance")
    sp.set_defaults(func=cmd_ucgca_gen)

    sp = usub.add_parser("compare", help="aware vs three-stage benchmark, one point")
    sp.add_argument("instance")
    common(sp)
    sp.set_defaults(func=cmd_ucgca_compare)

    sp = usub.add_parser("sweep", help="stress-grid comparison")
    sp.add_argument("instance")
    sp.add_argument("--eta-e-grid", default="1.0")
    sp.add_argument("--eta-g-grid", default="1.0,1.4,1.8,2.2")
    sp.add_argument("--alpha-grid", default="1.0")
    sp.add_argument("--figures", action="store_true")
    common(sp)
    sp.set_defaults(func=cmd_ucgca_sweep)
    return ap


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except KeyboardInterrupt:
        return EXIT_INTERNAL
    except Exception as e:  # pragma: no cover - last-resort diagnostics
        log.exception("internal error")
        print(f"internal error: {e}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
