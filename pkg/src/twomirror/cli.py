"""Command-line entry point: ``twomirror {solve,verify,demo}``.

Exit codes: 0 success, 1 invalid or corrupt input, 2 solver failure,
3 I/O error, 4 verification ran but a check failed.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .core import (
    BalanceViolationError,
    InternalSolverError,
    InvalidArgumentError,
    Kind,
    ProblemTooLargeError,
    UnsolvableProblemError,
    cost_matrix,
)
from .demos import DEMOS, demo_problem
from .io import (
    ProblemFile,
    ProblemFileError,
    dumps_exact,
    export_meshes,
    parse_problem,
    read_problem_file,
    read_solution,
    refine_document,
    write_report,
    write_solution,
)
from .ot import functional_F, solve_reflectors
from .reflector import GridSpec, trace_support
from .verify import MongeAmpereLevel, Thresholds, grid_bins, reflection_residuals, verify_pair

EXIT_OK, EXIT_INPUT, EXIT_SOLVER, EXIT_IO, EXIT_CHECKS = 0, 1, 2, 3, 4

PROBLEM_NAME = "problem.json"
SUMMARY_NAME = "summary.json"
REPORT_NAME = "report.json"


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _exit_code(exc: Exception) -> int:
    if isinstance(exc, (ProblemFileError, InvalidArgumentError, BalanceViolationError,
                        UnsolvableProblemError)):
        return EXIT_INPUT
    if isinstance(exc, (ProblemTooLargeError, InternalSolverError)):
        return EXIT_SOLVER
    if isinstance(exc, OSError):
        return EXIT_IO
    return EXIT_SOLVER


# ---------------------------------------------------------------------------
# shared solve path
# ---------------------------------------------------------------------------

def _solver_options(solver: dict, method: str) -> dict:
    if method == "exact":
        return {"pivot": solver["pivot"], "max_points": int(solver["max_points"])}
    return {"epsilon": float(solver["epsilon"]), "max_iters": int(solver["max_iters"]),
            "tol": float(solver["tol"])}


def _kinds(type_flag: str) -> list[Kind]:
    return [Kind.A, Kind.B] if type_flag == "both" else [Kind(type_flag)]


def solve_problem(pf: ProblemFile, kinds, method: str):
    """Solve ``pf`` for each kind, sharing one cost matrix."""
    spec = pf.spec
    C = cost_matrix(spec.source.points, spec.target.points)
    opts = _solver_options(pf.solver, method)
    out = {}
    for kind in kinds:
        pair, res = solve_reflectors(spec, kind, method=method, gauge=pf.solver["gauge"],
                                     cost=C, **opts)
        out[kind] = (pair, res)
    return out


def _absolutize(doc: dict, base: Path) -> dict:
    doc = json.loads(json.dumps(doc))
    for side in ("source", "target"):
        g = doc.get(side, {}).get("pgm") if isinstance(doc.get(side), dict) else None
        if g and "path" in g and not Path(g["path"]).is_absolute():
            g["path"] = str((base / g["path"]).resolve())
    return doc


def _write_rays(pair, path: Path):
    tr = trace_support(pair)
    n = pair.source_points.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index"] + [f"x{k + 1}" for k in range(n)] + ["target_index"]
                   + [f"p{k + 1}" for k in range(n)] + ["z", "w", "t", "opl_reduced"])
        ps = pair.target_points[tr.target_index]
        for i in range(len(pair.source_points)):
            w.writerow([i] + [f"{v:.17g}" for v in pair.source_points[i]]
                       + [int(tr.target_index[i])] + [f"{v:.17g}" for v in ps[i]]
                       + [f"{v:.17g}" for v in (tr.z[i], tr.w[i], tr.segment_length[i],
                                                  tr.opl_reduced[i])])


def cmd_solve(args) -> int:
    path = Path(args.problem)
    if not path.is_file():
        raise CliError(f"cannot read problem file {path}", EXIT_IO)
    pf = read_problem_file(path, force=True if args.force else None)
    if args.seed is not None:
        pf.solver["seed"] = args.seed
    method = args.method or pf.solver["method"]
    type_flag = args.type or pf.solver["type"]
    if args.gauge:
        pf.solver["gauge"] = args.gauge
    solved = solve_problem(pf, _kinds(type_flag), method)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    doc = _absolutize(pf.doc, path.parent)
    doc["solver"] = dict(pf.solver, method=method, type=type_flag)
    (out / PROBLEM_NAME).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")

    spec = pf.spec
    summary = {"format_version": 1, "version": __version__, "method": method,
               "beta": spec.beta, "d": pf.d, "opl": spec.beta + pf.d,
               "dimension": spec.dim, "n_source": len(spec.source),
               "n_target": len(spec.target), "total_mass": spec.mass,
               "rescale_factor": spec.rescale_factor, "gauge": pf.solver["gauge"],
               "seed": pf.solver["seed"], "solutions": {}}
    for kind, (pair, res) in solved.items():
        k = kind.value
        meta = {"method": method, "iterations": res.iterations,
                "duality_gap": res.duality_gap, "converged": res.converged,
                "rescale_factor": spec.rescale_factor, "d": pf.d}
        write_solution(pair, out / f"solution_{k}.json", res.plan, meta)
        export_meshes(pair, spec, pf.d, out, prefix=f"{k}_")
        _write_rays(pair, out / f"rays_{k}.csv")
        F = functional_F(pair, spec)
        summary["solutions"][k] = {
            "cost": res.plan.cost, "objective": res.objective, "functional": F,
            "functional_expected": 0.5 * spec.beta * spec.mass - res.plan.cost / spec.beta,
            "duality_gap": res.duality_gap, "iterations": res.iterations,
            "converged": res.converged, "plan_support": len(res.plan.mass)}
    if len(solved) == 2:
        s = summary["solutions"]
        summary["cost_A_le_cost_B"] = bool(s["A"]["cost"] <= s["B"]["cost"])
    (out / SUMMARY_NAME).write_text(dumps_exact(summary))
    _emit(args, summary, _solve_lines(summary, out))
    return EXIT_OK


def _solve_lines(summary: dict, out: Path) -> list[str]:
    lines = [f"solved {summary['n_source']} x {summary['n_target']} points "
             f"(beta={summary['beta']:g}, method={summary['method']})"]
    for k, s in summary["solutions"].items():
        lines.append(f"  type {k}: cost={s['cost']:.12g}  F={s['functional']:.12g}  "
                     f"iterations={s['iterations']}")
    lines.append(f"wrote {out}")
    return lines


def _emit(args, payload: dict, lines: list[str]):
    if args.quiet:
        return
    if args.json:
        print(json.dumps(payload, indent=1, sort_keys=True, default=float))
    else:
        print("\n".join(lines))


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def _bins_for(points: np.ndarray, per_axis: int) -> np.ndarray:
    counts = [min(per_axis, len(np.unique(points[:, k]))) for k in range(points.shape[1])]
    return grid_bins(points, counts)


def _same_support(pair, spec) -> bool:
    return (pair.source_points.shape == spec.source.points.shape
            and pair.target_points.shape == spec.target.points.shape
            and np.array_equal(pair.source_points, spec.source.points)
            and np.array_equal(pair.target_points, spec.target.points))


def _refinement_levels(pf: ProblemFile, pair, kind: Kind, k: int, method: str):
    """Solved pairs at ``k`` levels of halving, paired with a fixed evaluation grid."""
    grid = pf.source_info.grid
    if grid is None or pf.source_info.density is None or pf.target_info.grid is None:
        raise InvalidArgumentError("refinements need density-defined grid blocks")
    levels = [MongeAmpereLevel(pair, grid)]
    doc = pf.doc
    for _ in range(1, k):
        doc = refine_document(doc)
        sub = parse_problem(doc, pf.path.parent if pf.path else None,
                            force=bool(pf.solver["force"]))
        sub.solver = pf.solver
        p, _ = solve_problem(sub, [kind], method)[kind]
        levels.append(MongeAmpereLevel(p, grid))
    return levels


def cmd_verify(args) -> int:
    from . import plotting

    root = Path(args.solution_dir)
    if not root.is_dir():
        raise CliError(f"solution directory {root} not found", EXIT_IO)
    problem_path = root / PROBLEM_NAME
    if not problem_path.is_file():
        raise CliError(f"{problem_path} missing; not a solve output directory", EXIT_INPUT)
    pf = read_problem_file(problem_path)
    files = sorted(root.glob("solution_*.json"))
    if not files:
        raise CliError(f"no solution files in {root}", EXIT_INPUT)
    if args.refinements < 1:
        raise InvalidArgumentError("--refinements must be at least 1")
    method = pf.solver["method"]
    seed = pf.solver["seed"] if args.seed is None else args.seed
    spec = pf.spec
    thresholds = Thresholds(reflection=args.reflection_tol)
    dens = pf.densities()

    reports = {}
    rows = []
    conv = {}
    for f in files:
        pair, plan, meta = read_solution(f)
        if not _same_support(pair, spec):
            raise ProblemFileError("solution support does not match the problem", str(f))
        levels = None
        if args.refinements >= 2:
            levels = _refinement_levels(pf, pair, pair.kind, args.refinements, method)
        rep = verify_pair(pair, spec, plan, bins=_bins_for(spec.target.points, args.bins),
                          n_random=args.n_random, seed=seed, levels=levels,
                          source_density=dens[0] if dens else None,
                          target_density=dens[1] if dens else None, thresholds=thresholds)
        rep.metadata = {"solution_file": f.name, "rescale_factor": spec.rescale_factor,
                        "seed": seed, "refinements": args.refinements, "solver": meta}
        k = pair.kind.value
        reports[k] = rep

        tr = trace_support(pair)
        rr = reflection_residuals(pair)
        for i in range(len(pair.source_points)):
            rows.append([k, i] + [f"{v:.17g}" for v in pair.source_points[i]]
                        + [int(tr.target_index[i]), f"{abs(tr.opl_reduced[i] - pair.beta):.17g}",
                           f"{rr.first[i]:.17g}", f"{rr.second[i]:.17g}"])
        if not args.no_plots:
            plotting.plot_mirrors(pair, root / f"mirrors_{k}.png", f"type {k}")
            plotting.plot_ray_map(pair, root / f"raymap_{k}.png")
            plotting.plot_residuals({"OPL": np.abs(tr.opl_reduced - pair.beta),
                                     "reflection": np.maximum(rr.first, rr.second)},
                                    root / f"residuals_{k}.png")
        if rep.monge_ampere_residuals:
            conv[f"Monge-Ampere {k}"] = rep.monge_ampere_residuals
        if rep.reflection_refinement_residuals:
            conv[f"reflection {k}"] = rep.reflection_refinement_residuals

    write_report(reports, root / REPORT_NAME)
    n = spec.dim
    with open(root / "residuals.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["kind", "index"] + [f"x{j + 1}" for j in range(n)]
                   + ["target_index", "opl_abs_dev", "reflection_first", "reflection_second"])
        w.writerows(rows)
    if conv and not args.no_plots:
        plotting.plot_convergence(conv, root / "convergence.png")

    ok = all(r.all_passed for r in reports.values())
    payload = {k: dict(r.passed(), all_passed=r.all_passed) for k, r in reports.items()}
    lines = []
    for k, r in reports.items():
        flags = ", ".join(f"{name}={'pass' if v else 'FAIL'}"
                          for name, v in r.passed().items() if v is not None)
        lines.append(f"type {k}: {flags}")
    lines.append(f"wrote {root / REPORT_NAME}")
    _emit(args, payload, lines)
    return EXIT_OK if ok else EXIT_CHECKS


# ---------------------------------------------------------------------------
# demo
# ---------------------------------------------------------------------------

def cmd_demo(args) -> int:
    kwargs = {}
    if args.n is not None:
        kwargs["n"] = args.n
    if args.beta is not None:
        kwargs["beta"] = args.beta
    doc = demo_problem(args.name, **kwargs)
    text = json.dumps(doc, indent=1) + "\n"
    if args.output in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(args.output).write_text(text)
        if not args.quiet:
            print(f"wrote {args.output}")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    mode = common.add_mutually_exclusive_group()
    mode.add_argument("--quiet", action="store_true", help="print nothing on success")
    mode.add_argument("--json", action="store_true", help="print a JSON summary to stdout")

    p = argparse.ArgumentParser(prog="twomirror", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", parents=[common], help="solve a problem file")
    s.add_argument("problem", help="problem file (JSON)")
    s.add_argument("--type", choices=["A", "B", "both"], default=None,
                   help="mirror pair type (default: the problem's solver block)")
    s.add_argument("--method", choices=["exact", "entropic"], default=None)
    s.add_argument("--gauge", choices=["balanced", "min_zeta", "none"], default=None)
    s.add_argument("--out", "-o", default="out", help="output directory (default: out)")
    s.add_argument("--seed", type=int, default=None, help="seed recorded for verification")
    s.add_argument("--force", action="store_true", help="accept a large mass mismatch")
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("verify", parents=[common], help="check a solve output directory")
    v.add_argument("solution_dir")
    v.add_argument("--refinements", type=int, default=1,
                   help="number of grid levels for convergence checks (default 1: none)")
    v.add_argument("--seed", type=int, default=None, help="seed for random comparison plans")
    v.add_argument("--n-random", type=int, default=100, help="random plans per certificate")
    v.add_argument("--bins", type=int, default=4, help="pushforward bins per axis")
    v.add_argument("--reflection-tol", type=float, default=None,
                   help="fail if the max reflection angle residual (radians) exceeds this")
    v.add_argument("--no-plots", action="store_true", help="skip PNG figures")
    v.set_defaults(func=cmd_verify)

    d = sub.add_parser("demo", parents=[common], help="write a canonical problem file")
    d.add_argument("name", help=f"one of {', '.join(sorted(DEMOS))}")
    d.add_argument("--output", "-o", default=None, help="file to write (default: stdout)")
    d.add_argument("--n", type=int, default=None, help="points per axis")
    d.add_argument("--beta", type=float, default=None)
    d.set_defaults(func=cmd_demo)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"twomirror: error: {exc}", file=sys.stderr)
        return exc.code
    except Exception as exc:
        code = _exit_code(exc)
        if code == EXIT_SOLVER and not isinstance(exc, (ProblemTooLargeError,
                                                        InternalSolverError)):
            raise
        print(f"twomirror: error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
