"""Command-line entry point: ``hodgefsi run --config cfg.json`` and stock experiments."""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .grid import ConfigurationError, GeometryError, write_cell_csv, write_face_csv
from .harness import (
    BUILTIN_CONFIGS,
    builtin_config,
    check_results,
    load_config,
    run_experiment,
    write_report,
    write_rows,
)
from .solver import CompatibilityError, SolverError, dense_matrix

log = logging.getLogger("hodgefsi")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CHECK = 2


def _dump_fields(out: Path, disc, result) -> None:
    nodes = disc.nodes
    label = np.where(nodes.interior, 0, np.where(nodes.near_boundary, 1, 2))
    fields = {"p": result.p, "class": label}
    for a in range(disc.grid.dim):
        fields["GH_" + "xyz"[a]] = disc.GH[a]
    write_cell_csv(out / "fields_nodes.csv", disc.grid, fields)
    write_face_csv(out / "fields_faces.csv", disc.grid, {
        "H": disc.H,
        "U_in": result.input.U,
        "U_out": result.projected.U,
    })


def _dump_operator(out: Path, disc) -> None:
    A = dense_matrix(disc.op)
    np.savetxt(out / "operator.csv", A, delimiter=",", fmt="%.17g")


def _execute(cfg, args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    rows, summary = run_experiment(cfg)
    elapsed = time.perf_counter() - t0

    if cfg.kind == "single":
        if args.dump_fields:
            _dump_fields(out, summary["_disc"], summary["_result"])
        if args.dump_operator:
            _dump_operator(out, summary["_disc"])
    elif args.dump_fields or args.dump_operator:
        log.warning("--dump-fields/--dump-operator apply to single projections only")

    checks = check_results(cfg.kind, rows, summary)
    write_rows(out / "results.csv", rows)
    write_report(out / "report.json", {
        "config": cfg.to_dict(),
        "summary": summary,
        "checks": [{"name": n, "ok": ok, "detail": d} for n, ok, d in checks],
        "seconds": elapsed,
    })
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    print(f"wrote {out / 'results.csv'} and {out / 'report.json'} ({elapsed:.1f}s)")
    if args.check and not all(ok for _, ok, _ in checks):
        return EXIT_CHECK
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hodgefsi",
        description="Augmented Hodge projection for fluid / rigid-body states.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", default="hodgefsi-out", help="output directory")
        p.add_argument("--check", action="store_true",
                       help="exit with status 2 if an acceptance threshold is violated")

    run = sub.add_parser("run", help="run an experiment from a JSON config")
    run.add_argument("--config", required=True, help="path to the JSON config")
    run.add_argument("--dump-fields", action="store_true", help="write node and face CSV dumps")
    run.add_argument("--dump-operator", action="store_true",
                     help="write the dense operator (at most 2000 nodes)")
    common(run)

    for name in BUILTIN_CONFIGS:
        p = sub.add_parser(name, help=f"built-in {name} experiment")
        common(p)
        if name == "conv3d":
            p.add_argument("--huge", action="store_true",
                           help="add the 128x128x256 and 256x256x512 grids")
        if name == "conv2d":
            p.add_argument("--extended", action="store_true", help="add the 640x640 grid")
        p.set_defaults(dump_fields=False, dump_operator=False)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "run":
            cfg = load_config(args.config)
        else:
            cfg = builtin_config(args.command, huge=getattr(args, "huge", False),
                                 extended=getattr(args, "extended", False))
        return _execute(cfg, args)
    except (ConfigurationError, GeometryError, CompatibilityError, SolverError,
            OSError, ValueError) as exc:
        print(f"hodgefsi: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
