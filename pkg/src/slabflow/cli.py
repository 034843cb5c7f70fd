"""Command-line driver.

::

    slabflow run <config> [-o DIR]        simulate; write series + snapshots
    slabflow verify <suite> [--seed N]    run one health battery (or "all")
    slabflow converge <study>             error-vs-resolution table
    slabflow plot <series.jsonl> -o FILE  render the standard SVG charts

Every command finishes with one machine-readable JSON summary line on
stdout.  Exit codes: 0 success; 1 malformed configuration, arguments, or
input files; 2 runtime failure inside a solver or simulation; 3 a
verification or convergence check failed.  ``SLABFLOW_THREADS`` caps the
numeric thread pools (see the package docstring).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from . import config as cf
from . import converge as cv
from . import diagnostics as dg
from . import evolution as ev
from . import io as sio
from . import plots
from . import verify as vf
from .errors import ConfigError, SlabflowError

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_ASSERT = 3


class _Parser(argparse.ArgumentParser):
    """Usage mistakes are configuration mistakes: report them as such."""

    def error(self, message):
        raise ConfigError(message)


def cmd_run(args) -> int:
    cfg = cf.load_config(args.config)
    stem = os.path.splitext(os.path.basename(args.config))[0]
    outdir = args.out or f"{stem}_out"
    os.makedirs(outdir, exist_ok=True)
    series_path = os.path.join(outdir, "series.jsonl")

    state = cf.build_state(cfg)
    step = cf.step_config(cfg)
    dcfg = cf.diag_config(cfg)
    counter = {"k": 0, "prev": None, "snapshots": 0}

    with sio.SeriesWriter(series_path,
                          meta={"config": str(args.config), "seed": cfg.seed}) as w:

        def observer(s):
            rep = dg.energy_report(s, dcfg, previous=counter["prev"])
            counter["prev"] = rep
            w.append(rep)
            k = counter["k"]
            if cfg.checkpoint_every and k and k % cfg.checkpoint_every == 0:
                sio.write_checkpoint(
                    os.path.join(outdir, f"state_{k:06d}.slbw"), s)
                counter["snapshots"] += 1
            counter["k"] = k + 1

        trajectory = ev.run_simulation(state, step, cfg.T, observer=observer)

    final_path = os.path.join(outdir, "final.slbw")
    sio.write_checkpoint(final_path, trajectory[-1])
    print(json.dumps({
        "command": "run", "status": "ok",
        "steps": len(trajectory) - 1, "t_final": trajectory[-1].t,
        "series": series_path, "csv": w.csv_path,
        "snapshots": counter["snapshots"] + 1,
        "final_checkpoint": final_path,
    }))
    return EXIT_OK


def cmd_verify(args) -> int:
    names = sorted(vf.SUITES) if args.suite == "all" else [args.suite]
    reports = [vf.run_suite(n, seed=args.seed) for n in names]
    for rep in reports:
        for ln in rep.lines():
            print(ln)
    passed = all(r.passed for r in reports)
    print(json.dumps({
        "command": "verify", "suites": names, "seed": args.seed,
        "passed": passed,
        "checks": [{"suite": r.suite, "name": c.name, "passed": c.passed,
                    "measured": c.measured, "bound": c.bound,
                    "relation": c.relation}
                   for r in reports for c in r.results],
    }))
    return EXIT_OK if passed else EXIT_ASSERT


def cmd_converge(args) -> int:
    rep = cv.run_study(args.study)
    for ln in rep.lines():
        print(ln)
    print(json.dumps({
        "command": "converge", "study": rep.study, "passed": rep.passed,
        "parameter": rep.parameter, "columns": list(rep.columns),
        "rows": [{"value": v, "errors": list(e)} for v, e in rep.rows],
        "orders": list(rep.orders), "target": rep.target,
    }))
    return EXIT_OK if rep.passed else EXIT_ASSERT


def cmd_plot(args) -> int:
    out = plots.plot_series(args.series, args.output)
    print(json.dumps({"command": "plot", "status": "ok",
                      "series": args.series, "output": out}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="slabflow", description=__doc__,
                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    pr = sub.add_parser("run", help="simulate a configured scenario")
    pr.add_argument("config", help="path to a key = value run file")
    pr.add_argument("-o", "--out", default=None,
                    help="output directory (default: <config stem>_out)")
    pr.set_defaults(func=cmd_run)

    pv = sub.add_parser("verify", help="run a built-in check battery")
    pv.add_argument("suite", choices=sorted(vf.SUITES) + ["all"])
    pv.add_argument("--seed", type=int, default=0)
    pv.set_defaults(func=cmd_verify)

    pc = sub.add_parser("converge", help="run a refinement study")
    pc.add_argument("study", choices=sorted(cv.STUDIES))
    pc.set_defaults(func=cmd_converge)

    pp = sub.add_parser("plot", help="chart a series file as SVG")
    pp.add_argument("series", help="path to a series.jsonl")
    pp.add_argument("-o", "--output", required=True, help="output SVG path")
    pp.set_defaults(func=cmd_plot)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SlabflowError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
