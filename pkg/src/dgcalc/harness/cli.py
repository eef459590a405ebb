"""Command-line front end.

Subcommands::

    dgcalc study CONFIG [overrides]      convergence study from a TOML file or built-in name
    dgcalc props [--selector S]          calculus identity suites
    dgcalc hj                            Hamilton-Jacobi verification runs
    dgcalc fnl                           fully nonlinear verification runs
    dgcalc mesh-info --kind K --n N      mesh statistics as JSON

The exit status is 0 exactly when every requested run or property passes.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, builtin_config_path, load_config

log = logging.getLogger("dgcalc")


def _parse_value(text: str):
    for kind in (int, float):
        try:
            return kind(text)
        except ValueError:
            pass
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    return text


def _resolve_config(name: str):
    p = Path(name)
    if p.exists():
        return load_config(p)
    return load_config(builtin_config_path(name))


def cmd_study(args) -> int:
    from .emit import report_csv, write_svg
    from .study import StudyError, run_study

    try:
        cfg = _resolve_config(args.config)
        extra = {}
        for item in args.set or []:
            if "=" not in item:
                raise ConfigError(f"--set expects key=value, got {item!r}")
            k, v = item.split("=", 1)
            extra[k.strip()] = _parse_value(v.strip())
        flags = dict(
            seed=args.seed, r=args.r, base=args.base, refinements=args.refinements,
            eta1=args.eta1, eta2=args.eta2, csv=args.csv, svg=args.svg,
            timing=True if args.timing else None,
        )
        cfg = cfg.override(**{**flags, **extra})
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    np.random.seed(cfg.seed)

    def progress(row):
        print(f"level {row.level}: h={row.h:.4g} dof={row.dof} l2={row.l2_error:.3e} "
              f"h1={row.h1_error:.3e}", file=sys.stderr)

    try:
        rep = run_study(cfg, progress=None if args.quiet else progress)
    except StudyError as exc:
        print(f"FAIL {cfg.name}: {exc}", file=sys.stderr)
        return 1
    text = report_csv(rep)
    if cfg.csv:
        Path(cfg.csv).parent.mkdir(parents=True, exist_ok=True)
        Path(cfg.csv).write_text(text)
    else:
        sys.stdout.write(text)
    if cfg.svg:
        write_svg(rep, cfg.svg)
    if cfg.samples_csv and rep.finest is not None:
        Path(cfg.samples_csv).parent.mkdir(parents=True, exist_ok=True)
        Path(cfg.samples_csv).write_text(rep.finest.samples_csv())
    ok = all(math.isfinite(r.l2_error) and math.isfinite(r.h1_error) for r in rep.rows) or cfg.exact is None
    print(f"{'PASS' if ok else 'FAIL'} {cfg.name}: {len(rep)} levels", file=sys.stderr)
    return 0 if ok else 1


def cmd_props(args) -> int:
    from .properties import property_suite

    try:
        rep = property_suite(args.selector, seed=args.seed, fields=args.fields,
                             fd_cells=(args.fd_cells, args.fd_cells))
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for line in rep.lines():
        print(line)
    print(f"{'PASS' if rep.passed else 'FAIL'} {len(rep.results)} properties in {rep.seconds:.2f}s (seed {args.seed})")
    return 0 if rep.passed else 1


def _print_checks(results) -> int:
    for r in results:
        print(r.line())
    return 0 if all(r.passed for r in results) else 1


def cmd_hj(args) -> int:
    from .checks import burgers_self_convergence, linear_hj_oracle
    from .properties import monotonicity_results

    rng = np.random.default_rng(args.seed)
    results = [linear_hj_oracle(n=args.cells, steps=args.steps), burgers_self_convergence()]
    lines = [r for r in monotonicity_results(rng) if r.name.startswith("lf-")]
    code = _print_checks(results)
    for r in lines:
        print(r.line())
    return code if all(r.passed for r in lines) else 1


def cmd_fnl(args) -> int:
    from .checks import fnl_branch_check, fnl_split_agreement
    from .properties import monotonicity_results

    rng = np.random.default_rng(args.seed)
    results = [fnl_branch_check(r=args.r, A=args.A), fnl_split_agreement(r=args.r, A=args.A)]
    lines = [r for r in monotonicity_results(rng) if not r.name.startswith("lf-")]
    code = _print_checks(results)
    for r in lines:
        print(r.line())
    return code if all(r.passed for r in lines) else 1


def cmd_mesh_info(args) -> int:
    from ..mesh import build_cartesian, build_triangulated, validate

    ext = [tuple(e) for e in (args.extents or ([[0.0, 1.0]] if args.kind == "interval" else [[0.0, 1.0]] * 2))]
    try:
        if args.kind == "interval":
            mesh = build_cartesian(1, ext, (args.n,))
        elif args.kind == "box":
            mesh = build_cartesian(2, ext, (args.n, args.n))
        else:
            mesh = build_triangulated(ext, args.n)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    info = mesh.info()
    problems = validate(mesh)
    info["valid"] = not problems
    print(json.dumps(info, indent=2, sort_keys=True, default=float))
    return 0 if not problems else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dgcalc", description=__doc__.split("\n\n")[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("study", help="run a convergence study")
    s.add_argument("config", help="TOML file or built-in name (e.g. poisson_ldg, table1_r1)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--r", type=int)
    s.add_argument("--base", type=int)
    s.add_argument("--refinements", type=int)
    s.add_argument("--eta1", type=float)
    s.add_argument("--eta2", type=float)
    s.add_argument("--csv", help="CSV output path (stdout when the config has none)")
    s.add_argument("--svg")
    s.add_argument("--timing", action="store_true", help="record wall times in the CSV")
    s.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any configuration field")
    s.add_argument("-q", "--quiet", action="store_true")
    s.set_defaults(func=cmd_study)

    s = sub.add_parser("props", help="run calculus identity suites")
    s.add_argument("--selector", default="all")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--fields", type=int, default=50)
    s.add_argument("--fd-cells", type=int, default=8)
    s.set_defaults(func=cmd_props)

    s = sub.add_parser("hj", help="Hamilton-Jacobi verification")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--cells", type=int, default=50)
    s.add_argument("--steps", type=int, default=100)
    s.set_defaults(func=cmd_hj)

    s = sub.add_parser("fnl", help="fully nonlinear verification")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--r", type=int, default=1)
    s.add_argument("--A", type=float, default=2.0)
    s.set_defaults(func=cmd_fnl)

    s = sub.add_parser("mesh-info", help="print mesh statistics")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--kind", choices=("interval", "box", "triangle"), default="box")
    s.add_argument("--n", type=int, default=4)
    s.add_argument("--extents", type=json.loads, help='JSON list, e.g. "[[0,1],[0,2]]"')
    s.set_defaults(func=cmd_mesh_info)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return int(args.func(args))


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
