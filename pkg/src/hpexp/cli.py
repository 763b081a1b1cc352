"""Command line entry point: ``hpexp <subcommand>``.

Subcommands mirror the library sweeps (basis-count, project-sweep,
lemma-audit, sharp-ratio, fem-lshape, fem-sine, dg-sine, slope-fit, run).
CSV goes to stdout unless --out PREFIX is given, in which case PREFIX.csv and
PREFIX.meta.json are written.  Exit codes: 0 success, 1 usage error,
2 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import dgfem, fem, harness
from .bounds import phi, sharp_l2_ratio
from .harness import (ConfigError, basis_count_table, fit_slope,
                      lemma_audit_table, project_sweep, records_from_csv,
                      records_to_csv, run_config, write_records)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        sys.exit(1)


def _emit(records, args, meta=None):
    if args.out:
        write_records(records, args.out, meta)
    else:
        sys.stdout.write(records_to_csv(records))


def _build_parser() -> _Parser:
    parser = _Parser(prog="hpexp")
    sub = parser.add_subparsers(dest="command", required=True)

    pc = sub.add_parser("basis-count", help="Dof table for one family")
    pc.add_argument("--dim", type=int, required=True, choices=(2, 3))
    pc.add_argument("--family", required=True, choices=("Q", "P", "S"))
    pc.add_argument("--p-max", type=int, required=True)

    ps = sub.add_parser("project-sweep", help="projection error sweep")
    ps.add_argument("--dim", type=int, required=True, choices=(2, 3))
    ps.add_argument("--kind", required=True, choices=harness.PROJECTION_KINDS)
    ps.add_argument("--function", default="sine",
                    choices=("sine", "expsum", "runge1d-tensor"))
    ps.add_argument("--p-min", type=int, required=True)
    ps.add_argument("--p-max", type=int, required=True)
    ps.add_argument("--margin", type=int, default=20)
    ps.add_argument("--runge-a", type=float, default=0.5)
    ps.add_argument("--out", default=None)

    la = sub.add_parser("lemma-audit", help="lattice audit of the Gamma bound")
    la.add_argument("--dim", type=int, required=True, choices=(1, 2, 3))
    la.add_argument("--M-max", type=int, required=True)
    la.add_argument("--m-max", type=int, required=True)

    sr = sub.add_parser("sharp-ratio", help="worst per-mode L2(P) ratio")
    sr.add_argument("--dim", type=int, required=True, choices=(1, 2, 3))
    sr.add_argument("--p", type=int, required=True)
    sr.add_argument("--s", type=int, required=True)
    sr.add_argument("--buffer", type=int, default=6)

    fl = sub.add_parser("fem-lshape", help="L-shape corner benchmark")
    fl.add_argument("--family", required=True, choices=("q", "s"))
    fl.add_argument("--p-max", type=int, required=True)
    fl.add_argument("--p-list", type=str, default=None,
                    help="comma separated degrees (overrides --p-max)")
    fl.add_argument("--graded-layers", type=int, default=None)
    fl.add_argument("--graded-ratio", type=float, default=fem.GRADED_SIGMA_DEFAULT)
    fl.add_argument("--out", default=None)

    fs = sub.add_parser("fem-sine", help="sine Poisson benchmark")
    fs.add_argument("--dim", type=int, required=True, choices=(2, 3))
    fs.add_argument("--n", type=int, required=True)
    fs.add_argument("--family", required=True, choices=("q", "s"))
    fs.add_argument("--p-max", type=int, required=True)
    fs.add_argument("--p-min", type=int, default=1)
    fs.add_argument("--out", default=None)

    dg = sub.add_parser("dg-sine", help="SIP DG sine benchmark")
    dg.add_argument("--n", type=int, required=True)
    dg.add_argument("--family", required=True, choices=("p", "q"))
    dg.add_argument("--p-max", type=int, required=True)
    dg.add_argument("--p-min", type=int, default=1)
    dg.add_argument("--gamma", type=float, default=10.0)
    dg.add_argument("--out", default=None)

    sf = sub.add_parser("slope-fit", help="fit slopes from a sweep CSV")
    sf.add_argument("csv", type=Path)
    sf.add_argument("--abscissa", default="dof_root", choices=("p", "dof_root"))
    sf.add_argument("--error-key", default="l2")
    sf.add_argument("--window", type=int, default=2)
    sf.add_argument("--floor", type=float, default=harness.ERROR_FLOOR)

    rn = sub.add_parser("run", help="execute a JSON sweep config")
    rn.add_argument("config", type=Path)
    rn.add_argument("--out-dir", default=".")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "basis-count":
            rows = basis_count_table(args.dim, args.family, args.p_max)
            sys.stdout.write("p,dof\n")
            for p, dof in rows:
                sys.stdout.write(f"{p},{dof}\n")
        elif args.command == "project-sweep":
            recs = project_sweep(args.dim, args.kind, args.function,
                                 args.p_min, args.p_max, margin=args.margin,
                                 runge_a=args.runge_a)
            _emit(recs, args, {"command": "project-sweep"})
        elif args.command == "lemma-audit":
            rows = lemma_audit_table(args.dim, args.M_max, args.m_max)
            sys.stdout.write("d,M,m,lattice_max,phi,holds,argmax\n")
            for r in rows:
                arg = f"xi={r['argmax_xi']} rho={r['argmax_rho']}".replace(",", ";")
                sys.stdout.write(f"{r['d']},{r['M']},{r['m']},"
                                 f"{r['lattice_max']:.14e},{r['phi']:.14e},"
                                 f"{r['holds']},{arg}\n")
        elif args.command == "sharp-ratio":
            res = sharp_l2_ratio(args.dim, args.p, args.s, args.buffer)
            bound = phi(args.dim, args.p + 1, args.s)
            sys.stdout.write(
                f"d={args.dim} p={args.p} s={args.s}: max_ratio="
                f"{res['max_ratio']:.14e} at i={res['argmax']}, "
                f"phi(d,p+1,s)={bound:.14e}, "
                f"holds={res['max_ratio'] <= bound * (1 + 1e-12)}\n")
        elif args.command == "fem-lshape":
            p_list = ([int(t) for t in args.p_list.split(",")] if args.p_list
                      else list(range(1, args.p_max + 1)))
            raw = fem.run_p_sweep("lshape", args.family.upper(), p_list,
                                  graded_layers=args.graded_layers,
                                  graded_sigma=args.graded_ratio)
            _emit(harness.fem_records(raw), args, {"command": "fem-lshape"})
        elif args.command == "fem-sine":
            problem = "sine2d" if args.dim == 2 else "sine3d"
            raw = fem.run_p_sweep(problem, args.family.upper(),
                                  list(range(args.p_min, args.p_max + 1)),
                                  n=args.n)
            _emit(harness.fem_records(raw), args, {"command": "fem-sine"})
        elif args.command == "dg-sine":
            raw = dgfem.run_p_sweep(args.n, args.family.upper(),
                                    list(range(args.p_min, args.p_max + 1)),
                                    gamma=args.gamma)
            _emit(harness.fem_records(raw), args, {"command": "dg-sine"})
        elif args.command == "slope-fit":
            recs = records_from_csv(args.csv.read_text())
            fit = fit_slope(recs, abscissa=args.abscissa, window=args.window,
                            error_key=args.error_key, floor=args.floor)
            sys.stdout.write(
                f"slope={fit.slope:.14e} lsq_slope={fit.lsq_slope:.14e} "
                f"r2={fit.r_squared:.6f} points={fit.n_points} "
                f"abscissa={fit.abscissa}\n")
        else:
            run_config(args.config, out_dir=args.out_dir)
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return 1
    except (ValueError, KeyError) as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return 1
    except (ArithmeticError, np.linalg.LinAlgError, RuntimeError) as exc:
        sys.stderr.write(f"numerical failure: {exc}\n")
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
