"""Command line interface: run, rates, dump-mesh, check."""
import argparse
import json
import logging
import math
import os
import sys
from dataclasses import fields

from .config import ConfigError, RunConfig, load_config

log = logging.getLogger("hbnitsche")

_FLAGS = {f.name: f for f in fields(RunConfig)}


def _add_config_flags(p):
    p.add_argument("--config", help="INI file; flags given on the command line override it")
    p.add_argument("--mode", choices=("adaptive", "uniform"))
    p.add_argument("--degree", type=int)
    p.add_argument("--m", type=int, help="admissibility class")
    p.add_argument("--gamma1", type=float)
    p.add_argument("--gamma2", type=float)
    p.add_argument("--gamma", type=float, help="set gamma1 and gamma2 together")
    p.add_argument("--theta", type=float)
    p.add_argument("--order", type=int, help="Gauss points per direction")
    p.add_argument("--solver-tol", dest="solver_tol", type=float)
    p.add_argument("--direct-limit", dest="direct_limit", type=int)
    p.add_argument("--problem", help="manufactured solution id (smooth, peak, zero)")
    p.add_argument("--source", help="expression for f in x, y when no exact solution is known")
    p.add_argument("--no-error", dest="report_error", action="store_false", default=None)
    p.add_argument("--initial-level", dest="initial_level", type=int)
    p.add_argument("--levels", type=int, nargs=2, metavar=("FIRST", "LAST"))
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--max-dofs", dest="max_dofs", type=int)
    p.add_argument("--eta-tol", dest="eta_tol", type=float)
    p.add_argument("--c-est", dest="c_est", type=float)
    p.add_argument("--output-dir", "-o", dest="output_dir")


def config_from_args(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    kw = {k: getattr(args, k) for k in _FLAGS if getattr(args, k, None) is not None}
    if args.gamma is not None:
        kw.setdefault("gamma1", args.gamma)
        kw.setdefault("gamma2", args.gamma)
    if "levels" in kw:
        kw["levels"] = tuple(kw["levels"])
    if "source" in kw and "problem" not in kw:
        kw["problem"] = None
        kw.setdefault("report_error", False)
    return cfg.with_(**kw)


def cmd_run(args):
    from .adapt import afem_run, uniform_run
    from .output import summary, write_outputs

    cfg = config_from_args(args)
    result = uniform_run(cfg) if cfg.mode == "uniform" else afem_run(cfg)
    for r in result.records:
        err = "" if math.isnan(r.energy_error) else f" error={r.energy_error:.4e}"
        print(f"it={r.iteration} dofs={r.ndofs} cells={r.ncells} eta={math.sqrt(r.eta_sq):.4e}{err}")
    s = summary(result)
    for name, sl in s.get("rates", {}).items():
        print(f"rate {name}: {sl['h']:.3f} (vs h), {sl['N']:.3f} (vs N^-1/2)")
    print(f"stop: {result.stop_reason}")
    if cfg.output_dir:
        write_outputs(result, cfg.output_dir)
        print(f"wrote {cfg.output_dir}")
    return 0


def cmd_rates(args):
    from .output import rates, read_run_log

    for path in args.logs:
        table = rates(read_run_log(path))
        if args.json:
            print(json.dumps({"log": path, "rates": table}))
            continue
        print(path)
        for name, sl in table.items():
            print(f"  {name:13s} {sl['h']:8.3f} (vs h) {sl['N']:8.3f} (vs N^-1/2)")
    return 0


def cmd_dump_mesh(args):
    from .hbspline import build_space, write_dofs_csv
    from .hmesh import initial_mesh, read_mesh_csv, uniform_refine, write_edges_csv, write_mesh_csv

    if args.mesh:
        mesh = read_mesh_csv(args.mesh)
    else:
        mesh = initial_mesh(args.level, m=args.m, degree=args.degree)
    os.makedirs(args.output_dir, exist_ok=True)
    write_mesh_csv(mesh, os.path.join(args.output_dir, "mesh.csv"))
    write_edges_csv(mesh, os.path.join(args.output_dir, "edges.csv"))
    write_dofs_csv(build_space(mesh), os.path.join(args.output_dir, "dofs.csv"))
    print(f"{len(mesh.cells)} cells written to {args.output_dir}")
    return 0


def cmd_check(args):
    from .diagnostics import run_checks

    rep = run_checks(args.degree, args.gamma)
    print("\n".join(rep.lines))
    return 0 if rep.ok else 1


def build_parser():
    p = argparse.ArgumentParser(prog="hbnitsche", description=__doc__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="adaptive or uniform refinement study")
    _add_config_flags(run)
    run.set_defaults(func=cmd_run)

    rt = sub.add_parser("rates", help="fit convergence slopes from run logs")
    rt.add_argument("logs", nargs="+")
    rt.add_argument("--json", action="store_true")
    rt.set_defaults(func=cmd_rates)

    dm = sub.add_parser("dump-mesh", help="write mesh, edge and dof tables")
    dm.add_argument("--mesh", help="mesh CSV to re-read instead of a uniform mesh")
    dm.add_argument("--level", type=int, default=2)
    dm.add_argument("--degree", type=int, default=2)
    dm.add_argument("--m", type=int, default=2)
    dm.add_argument("--output-dir", "-o", dest="output_dir", required=True)
    dm.set_defaults(func=cmd_dump_mesh)

    ck = sub.add_parser("check", help="coercivity, symmetry and projection self-checks")
    ck.add_argument("--degree", type=int, default=2)
    ck.add_argument("--gamma", type=float, default=100.0)
    ck.set_defaults(func=cmd_check)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RuntimeError as exc:  # includes SolverError
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
