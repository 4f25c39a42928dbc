"""Command-line entry point: ``spatial-ordinal {test,size,power,diagnostics}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .covariance import KERNELS, KernelSpec, default_bandwidth, omega_by_shell
from .errors import InvalidInputError, SpatialOrdinalError
from .experiments import ExperimentConfig, cmd_power, cmd_size, diagnostics
from .io import read_cloud_csv, write_edge_list, write_table
from .patterns import indicators_from_ranks, pattern_ranks
from .wald import Geometry, run_test

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 3, 4

log = logging.getLogger("spatial_ordinal")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _int_list(text: str) -> tuple[int, ...]:
    try:
        vals = tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _rho_grid(text: str) -> tuple[float, ...]:
    """``0,0.2,0.5`` or an inclusive range ``start:stop:step``."""
    try:
        if ":" in text:
            a, b, step = (float(t) for t in text.split(":"))
            if step <= 0:
                raise ValueError
            k = int(np.floor((b - a) / step + 1e-9))
            return tuple(round(a + i * step, 12) for i in range(k + 1))
        vals = tuple(float(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad rho grid {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty rho grid")
    return vals


def _transforms(text: str) -> tuple[str, ...]:
    names = tuple(t.strip() for t in text.split(",") if t.strip())
    for t in names:
        if t not in ("identity", "sin", "logabs", "log_abs"):
            raise argparse.ArgumentTypeError(f"unknown transform {t!r}")
    return names


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    g = common.add_argument_group("shared options")
    g.add_argument("--m", type=_int_list, default=(3,), help="embedding dimension(s), e.g. 3 or 3,4")
    g.add_argument("--k-graph", type=_int_list, default=(2, 3),
                   help="neighbours per site in the SAR weight graph (default 2,3)")
    g.add_argument("--bandwidth", type=float, default=None,
                   help="kernel bandwidth in hops (default depends on n and kernel)")
    g.add_argument("--kernel", choices=KERNELS, default="flat_top")
    g.add_argument("--level", type=float, default=0.05)
    g.add_argument("--seed", type=int, default=20240611)
    g.add_argument("--reps", type=int, default=1000)
    g.add_argument("--n", type=_int_list, default=(500,), help="sample size(s), e.g. 500,2000")
    g.add_argument("--rho-grid", type=_rho_grid, default=(0.0, 0.2, 0.4, 0.6, 0.8),
                   help="comma list or start:stop:step")
    g.add_argument("--transform", type=_transforms, default=("identity",),
                   help="identity, sin, logabs (comma list allowed)")
    g.add_argument("--centering", choices=("null", "empirical"), default="null")
    g.add_argument("--smoothing", choices=("auto", "off"), default="auto",
                   help="auto adds 0.5 to every count when some pattern is absent")
    g.add_argument("--out", type=Path, default=None, help="output directory")
    g.add_argument("--threads", type=int, default=1)
    g.add_argument("--resample-locations", action="store_true",
                   help="draw fresh locations for every replicate")
    g.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="spatial-ordinal",
                     description="Ordinal-pattern test of spatial independence.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("test", parents=[common], help="test one x,y,value CSV")
    p.add_argument("input", type=Path)
    p.add_argument("--dump-graph", action="store_true", help="write edges.txt to --out")
    p.add_argument("--dump-omega", type=int, default=None, metavar="H",
                   help="write unweighted shell sums for h = 0..H to --out")

    sub.add_parser("size", parents=[common], help="Monte Carlo size study on i.i.d. fields")

    p = sub.add_parser("power", parents=[common], help="Monte Carlo power study on SAR fields")
    p.add_argument("--dump-fields", action="store_true",
                   help="write replicate-0 fields as x,y,value CSVs under --out/fields")

    p = sub.add_parser("diagnostics", parents=[common], help="graph sparsity diagnostics")
    p.add_argument("input", type=Path)
    p.add_argument("--h-max", type=int, default=4)
    return parser


class UsageError(SpatialOrdinalError):
    exit_code = EXIT_USAGE


def _single_m(args) -> int:
    if len(args.m) != 1:
        raise UsageError("this command takes a single --m")
    return args.m[0]


def _config(args, mode: str) -> ExperimentConfig:
    try:
        return _make_config(args, mode)
    except InvalidInputError as exc:
        raise UsageError(str(exc)) from None


def _make_config(args, mode: str) -> ExperimentConfig:
    return ExperimentConfig(
        mode=mode, n=args.n, m=args.m, rho=args.rho_grid, transforms=args.transform,
        reps=args.reps, level=args.level, bandwidth=args.bandwidth, kernel=args.kernel,
        k_graph=args.k_graph, seed=args.seed, centering=args.centering,
        smoothing=0.5 if args.smoothing == "auto" else 0.0, threads=args.threads,
        out=args.out, resample_locations=args.resample_locations,
        dump_fields=getattr(args, "dump_fields", False),
    )


def _emit(payload: dict, out: Path | None, name: str):
    text = json.dumps(payload, indent=2)
    print(text)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / name).write_text(text + "\n", encoding="utf-8")


def _run_test(args):
    cloud = read_cloud_csv(args.input)
    m = _single_m(args)
    if cloud.n < m:
        raise InvalidInputError(f"need at least m = {m} rows, got {cloud.n}")
    b = args.bandwidth if args.bandwidth is not None else default_bandwidth(cloud.n, args.kernel)
    geo = Geometry.build(cloud, m, KernelSpec(args.kernel, b))
    report = run_test(
        cloud, m, level=args.level, centering=args.centering,
        smoothing=0.5 if args.smoothing == "auto" else 0.0, geometry=geo,
    )
    if report.duplicates:
        log.warning("%d duplicate locations; neighbour order falls back to index", report.duplicates)
    _emit(report.to_dict(), args.out, "report.json")
    if args.dump_graph or args.dump_omega is not None:
        if args.out is None:
            raise UsageError("--dump-graph and --dump-omega need --out")
        if args.dump_graph:
            write_edge_list(args.out / "edges.txt", geo.graph)
        if args.dump_omega is not None:
            Y = indicators_from_ranks(pattern_ranks(cloud.values[geo.blocks]), m)
            for h, om in enumerate(omega_by_shell(Y, geo.graph, args.dump_omega,
                                                  report.centering, m=m)):
                d = om.shape[0]
                write_table(args.out / f"omega_h{h}.csv", [f"c{j}" for j in range(d)], om)


def _run_size(args):
    summaries = cmd_size(_config(args, "size"))
    for s in summaries:
        flag = "" if s.var_defined else "  (variance undefined for R=1)"
        print(f"n={s.n} m={s.m} R={s.reps} mean={s.mean:.4f} var={s.var:.4f} "
              f"median={s.median:.4f} reject_rate={s.reject_rate:.4f}{flag}")


def _run_power(args):
    for cv in cmd_power(_config(args, "power")):
        rates = " ".join(f"{r:g}:{p:.3f}" for r, p in zip(cv.rho, cv.rates))
        print(f"{cv.model} m={cv.m} n={cv.n} k_graph={cv.k_graph} R={cv.reps}  {rates}")


def _run_diagnostics(args):
    cloud = read_cloud_csv(args.input)
    _emit(diagnostics(cloud, _single_m(args), args.h_max), args.out, "diagnostics.json")


COMMANDS = {"test": _run_test, "size": _run_size, "power": _run_power,
            "diagnostics": _run_diagnostics}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1 or args.reps < 1:
        parser.error("--threads and --reps must be >= 1")
    if not 0 < args.level < 1:
        parser.error("--level must lie in (0, 1)")
    if not all(-1 < r < 1 for r in args.rho_grid):
        parser.error("--rho-grid values must lie in (-1, 1)")
    if args.bandwidth is not None and args.bandwidth <= 0:
        parser.error("--bandwidth must be positive")
    try:
        COMMANDS[args.command](args)
    except SpatialOrdinalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (np.linalg.LinAlgError, FloatingPointError, ArithmeticError, RuntimeError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
