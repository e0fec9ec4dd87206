"""Command line entry point: ``mgmpcg solve`` and ``mgmpcg sweep``.

Exit codes: 0 when every run converged, 2 when some run did not, 1 on a
configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from .experiments import (
    FULL_SCALE_FRACTURE_NX,
    SOLVERS,
    SWEEPABLE,
    ConfigError,
    ExperimentConfig,
    run,
    sweep,
)

EXIT_OK, EXIT_CONFIG, EXIT_NOT_CONVERGED = 0, 1, 2


def _add_common(p):
    p.add_argument("--config", help="JSON file with config keys (same names as the options)")
    p.add_argument("--problem", choices=["anisotropic", "fracture"])
    p.add_argument("--nx", type=int, help="elements per axis (default 160 / 200)")
    p.add_argument("--ny", type=int)
    p.add_argument("--levels", type=int, help="number of levels L+1 (default 4)")
    p.add_argument("--hierarchy", choices=["geometric", "aggregation"])
    p.add_argument("--kxx", type=float)
    p.add_argument("--kyy", type=float)
    p.add_argument("--source", type=float)
    p.add_argument("--network", help="fracture network JSON file")
    p.add_argument("--kf", type=float, help="fracture permeability")
    p.add_argument("--km", type=float, help="matrix permeability")
    p.add_argument("--delta", type=float, help="fracture thickness")
    p.add_argument("--raster-mode", choices=["center", "band", "upscaled"])
    p.add_argument("--strength-tol", type=float)
    p.add_argument("--nu", type=int, help="additive MG sweeps per level (default 6)")
    p.add_argument("--nu-pre", type=int)
    p.add_argument("--nu-post", type=int)
    p.add_argument("--omega", type=float, help="SSOR relaxation factor")
    p.add_argument("--m", type=int, help="MPCG history length (default 5)")
    p.add_argument("--tol", type=float, help="relative residual tolerance (default 1e-8)")
    p.add_argument("--max-iters", type=int)
    p.add_argument("--gram-drop-tol", type=float)
    p.add_argument("--workers", type=int, help="threads for per-level corrections")
    p.add_argument("--out", help="output directory (default ./results)")
    p.add_argument("--full-scale", action="store_true",
                   help=f"fracture problem on a {FULL_SCALE_FRACTURE_NX}^2 grid (~3e5 unknowns)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="mgmpcg",
        description="Additive-MG multipreconditioned CG experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="run one solver on one problem")
    _add_common(solve)
    solve.add_argument("--solver", choices=SOLVERS)

    sw = sub.add_parser("sweep", help="sweep one coefficient over several solvers")
    _add_common(sw)
    sw.add_argument("--param", choices=sorted(SWEEPABLE), required=True)
    sw.add_argument("--values", type=float, nargs="+", required=True)
    sw.add_argument("--solvers", nargs="+", choices=SOLVERS,
                    default=["addmg-mpcg", "addmg-pcg", "multmg-pcg"])
    return parser


_NOT_CONFIG = {"config", "command", "full_scale", "verbose", "param", "values", "solvers"}


def config_from_args(args):
    cfg = ExperimentConfig.from_json(args.config) if args.config else ExperimentConfig()
    overrides = {
        k: v for k, v in vars(args).items() if k not in _NOT_CONFIG and v is not None
    }
    cfg = replace(cfg, **overrides)
    if args.full_scale and cfg.problem == "fracture" and args.nx is None:
        cfg = replace(cfg, nx=FULL_SCALE_FRACTURE_NX, ny=FULL_SCALE_FRACTURE_NX)
    return cfg


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = config_from_args(args)
        if args.command == "solve":
            art = run(cfg)
            rep = art.report
            print(f"{rep.solver}: {'converged' if rep.converged else 'not converged'} "
                  f"in {rep.iterations} iterations, rel. residual {rep.final_relative_residual:.3e}")
            for kind, path in art.paths.items():
                print(f"  {kind}: {path}")
            return EXIT_OK if rep.converged else EXIT_NOT_CONVERGED
        rows, _ = sweep(cfg, args.param, args.values, args.solvers)
        print(f"{'param':>10} {'solver':>12} {'iters':>6} {'final_rel_res':>14}")
        for row in rows:
            print(f"{row['param']:>10.3g} {row['solver']:>12} {row['iters']:>6d} "
                  f"{row['final_rel_res']:>14.3e}")
        return EXIT_OK if all(r["converged"] for r in rows) else EXIT_NOT_CONVERGED
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
