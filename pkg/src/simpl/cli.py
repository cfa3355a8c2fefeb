"""Command-line front end.

Subcommands: run, bench, emit, oracle, ir-dump. Machine-readable output
(JSON / JSON lines) goes to stdout; human-readable tables to stderr.
Failure classes map to distinct exit codes (see errors module): 3 syntax /
resolution, 4 model, 5 bad static, 6 non-termination, 7 unsupported
feature, 8 cache mismatch, 9 runtime.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .algorithms import ALGORITHM_NAMES
from .bench import BenchConfig, benchmark, render_table
from .errors import SimplError, UsageError
from .ir import dump
from .model import oracle_record
from .pipeline import MODES, Pipeline, load_net


def _add_run(sub):
    p = sub.add_parser("run", help="run one algorithm on one model in one mode")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--algo", choices=ALGORITHM_NAMES)
    g.add_argument("--algo-file", metavar="FILE",
                   help="a .simpl source file (the prelude is prepended)")
    p.add_argument("--model", required=True, help="path to a .bn model file")
    p.add_argument("--mode", default="interp", choices=MODES)
    p.add_argument("--n", type=int, default=None, help="sample count")
    p.add_argument("--burn", type=int, default=None, help="burn-in (mh/gibbs)")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--debug-cache", action="store_true",
                   help="re-run cached bodies on hits and compare")
    p.add_argument("--emit", default=None, metavar="DIR",
                   help="directory for the generated C (mode c)")
    return p


def _add_bench(sub):
    p = sub.add_parser("bench", help="speedup decomposition over modes")
    p.add_argument("--models", nargs="+", required=True)
    p.add_argument("--algos", nargs="+", default=list(ALGORITHM_NAMES),
                   choices=ALGORITHM_NAMES)
    p.add_argument("--modes", nargs="+", default=list(MODES), choices=MODES)
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--min-seconds", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out", default=None, help="write JSON lines here")
    p.add_argument("--cache-dir", default=".simpl-cache")
    p.add_argument("--baseline-general", default=None, metavar="BIN",
                   help="handcoded baseline binary for the comparison rows")
    p.add_argument("--baseline-simple", default=None, metavar="BIN",
                   help="scalar-only baseline binary (simple-model comparison)")
    p.add_argument("--parallel", action="store_true",
                   help="run cells in separate processes")
    return p


def _add_emit(sub):
    p = sub.add_parser("emit", help="write the generated C for an algorithm/model")
    p.add_argument("--algo", required=True, choices=ALGORITHM_NAMES)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--name", default=None)
    p.add_argument("--debug-cache", action="store_true")
    p.add_argument("--compile", action="store_true", help="also compile the unit")
    return p


def _add_oracle(sub):
    p = sub.add_parser("oracle", help="exact posterior by enumeration")
    p.add_argument("--model", required=True)
    return p


def _add_irdump(sub):
    p = sub.add_parser("ir-dump", help="print the residual trace")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--algo", choices=ALGORITHM_NAMES)
    g.add_argument("--algo-file", metavar="FILE")
    p.add_argument("--model", required=True)
    p.add_argument("--no-cache", action="store_true",
                   help="specialize with cache annotations inlined away")
    return p


def _pipeline_for(args, net) -> Pipeline:
    if getattr(args, "algo_file", None):
        source = Path(args.algo_file).read_text()
        return Pipeline(Path(args.algo_file).stem, net, source=source)
    return Pipeline(args.algo, net)


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="simpl")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run(sub), _add_bench(sub), _add_emit(sub), _add_oracle(sub), _add_irdump(sub)
    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except SimplError as err:
        print(f"simpl: error: {err}", file=sys.stderr)
        return err.exit_code


def _dispatch(args) -> int:
    if args.command == "run":
        net = load_net(args.model)
        pipeline = _pipeline_for(args, net)
        out = pipeline.run(args.mode, args.seed, n=args.n, burn=args.burn,
                           debug_cache=args.debug_cache, emit_dir=args.emit)
        print(json.dumps(out.to_json()))
        return 0

    if args.command == "bench":
        cfg = BenchConfig(models=args.models, algos=list(args.algos),
                          modes=list(args.modes), repetitions=args.reps,
                          min_seconds=args.min_seconds, seed=args.seed,
                          cache_dir=args.cache_dir,
                          baseline_general=args.baseline_general,
                          baseline_simple=args.baseline_simple,
                          parallel=args.parallel)
        cells = benchmark(cfg)
        lines = "\n".join(json.dumps(c) for c in cells) + "\n"
        if args.out:
            Path(args.out).write_text(lines)
        else:
            sys.stdout.write(lines)
        render_table(cells)
        return 0

    if args.command == "emit":
        from .emit_c import emit_c
        from .pipeline import DEFAULT_BURN
        net = load_net(args.model)
        pipeline = Pipeline(args.algo, net)
        name = args.name or f"{args.algo}_{Path(args.model).stem}"
        unit = emit_c(pipeline.residual(True), name, debug_cache=args.debug_cache,
                      default_burn=DEFAULT_BURN[args.algo])
        outdir = Path(args.out)
        outdir.mkdir(parents=True, exist_ok=True)
        if args.compile:
            from .toolchain import compile_unit
            exe = compile_unit(unit, outdir)
            print(json.dumps({"source": str(outdir / f"{name}.c"), "binary": str(exe),
                              "manifest": unit.manifest}))
        else:
            (outdir / f"{name}.c").write_text(unit.code)
            (outdir / f"{name}.manifest.json").write_text(
                json.dumps(unit.manifest, indent=2) + "\n")
            print(json.dumps({"source": str(outdir / f"{name}.c"),
                              "manifest": unit.manifest}))
        return 0

    if args.command == "oracle":
        net = load_net(args.model)
        print(json.dumps(oracle_record(net)))
        return 0

    if args.command == "ir-dump":
        net = load_net(args.model)
        pipeline = _pipeline_for(args, net)
        sys.stdout.write(dump(pipeline.residual(enable_cache=not args.no_cache)))
        return 0

    raise UsageError(f"unknown command {args.command!r}")  # pragma: no cover


if __name__ == "__main__":
    sys.exit(main())
