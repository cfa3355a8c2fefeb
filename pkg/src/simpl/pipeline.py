"""End-to-end execution: parse, resolve, specialize, run in one of four modes.

Modes mirror the evaluation setup: `interp` runs the reference interpreter
(annotations are no-ops), `pe` runs the residual trace with caching inlined
away, `pe-cache` honors cache annotations, and `c` emits, compiles and runs
the generated program.
"""

from __future__ import annotations

import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from .algorithms import full_program_text, load_asset
from .errors import UsageError
from .interp import interpret
from .ir import ResidualProgram
from .model import BayesNet, parse_model
from .pe import pe
from .prims import ALL_PRIMITIVES
from .rng import RngState
from .runner import CompiledResidual
from .syntax import parse_program, resolve

MODES = ("interp", "pe", "pe-cache", "c")

HARNESS_GLOBALS = {"net", "query", "evidence", "N", "burn"}

# sample counts used by the stated-accuracy configurations
DEFAULT_N = {"likelihood": 200_000, "rejection": 1_000_000, "mh": 500_000,
             "gibbs": 200_000}
DEFAULT_BURN = {"likelihood": 0, "rejection": 0, "mh": 5_000, "gibbs": 2_000}


def load_net(path: str | Path) -> BayesNet:
    return parse_model(Path(path).read_text())


def build_program(algo: str):
    """Parse and resolve prelude + algorithm; returns the AST."""
    program = parse_program(full_program_text(algo))
    resolve(program, HARNESS_GLOBALS, ALL_PRIMITIVES)
    return program


def build_program_from_source(source: str):
    """Parse and resolve prelude + user-supplied algorithm source."""
    from .algorithms import prelude_source
    program = parse_program(prelude_source() + "\n" + source)
    resolve(program, HARNESS_GLOBALS, ALL_PRIMITIVES)
    return program


@dataclass
class RunOutcome:
    mode: str
    estimate: list[float]
    flips: int
    elapsed_ns: int
    node_writes: int | None = None
    cache_stats: list = field(default_factory=list)
    residual_statements: int | None = None
    residual_loops: int | None = None
    emitted_to: str | None = None

    def to_json(self) -> dict:
        out = {"mode": self.mode, "estimate": self.estimate, "flips": self.flips,
               "elapsed_ns": self.elapsed_ns}
        if self.node_writes is not None:
            out["node_writes"] = self.node_writes
        if self.cache_stats:
            out["cache"] = self.cache_stats
        if self.residual_statements is not None:
            out["residual_statements"] = self.residual_statements
            out["residual_loops"] = self.residual_loops
        if self.emitted_to:
            out["emitted_to"] = self.emitted_to
        return out


class Pipeline:
    """One (algorithm, model) pair, reusable across runs and modes."""

    def __init__(self, algo: str, net: BayesNet, source: str | None = None):
        self.algo = algo
        self.net = net
        if source is None:
            self.asset = load_asset(algo)
            self.program = build_program(algo)
        else:
            self.asset = None
            self.program = build_program_from_source(source)
        self._residual: dict[bool, ResidualProgram] = {}
        self._compiled: dict[tuple, CompiledResidual] = {}
        self._exe: dict[bool, Path] = {}

    def residual(self, enable_cache: bool = True) -> ResidualProgram:
        if enable_cache not in self._residual:
            self._residual[enable_cache] = pe(self.program, self.net,
                                              enable_cache=enable_cache)
        return self._residual[enable_cache]

    def compiled(self, enable_cache: bool = True,
                 debug_cache: bool = False) -> CompiledResidual:
        key = (enable_cache, debug_cache)
        if key not in self._compiled:
            self._compiled[key] = CompiledResidual(self.residual(enable_cache),
                                                   debug_cache=debug_cache)
        return self._compiled[key]

    def executable(self, debug_cache: bool = False, outdir: str | Path | None = None):
        from .emit_c import emit_c
        from .toolchain import compile_unit
        if debug_cache not in self._exe:
            outdir = Path(outdir) if outdir else Path(tempfile.mkdtemp(prefix="simplc-"))
            name = f"{self.algo}_{'dbg_' if debug_cache else ''}prog"
            unit = emit_c(self.residual(True), name, debug_cache=debug_cache,
                          default_burn=DEFAULT_BURN.get(self.algo, 0))
            self._exe[debug_cache] = compile_unit(unit, outdir)
        return self._exe[debug_cache]

    def run(self, mode: str, seed: int, n: int | None = None, burn: int | None = None,
            debug_cache: bool = False, emit_dir: str | Path | None = None) -> RunOutcome:
        if mode not in MODES:
            raise UsageError(f"unknown mode {mode!r}; expected one of {', '.join(MODES)}")
        n = n if n is not None else DEFAULT_N.get(self.algo, 10_000)
        burn = burn if burn is not None else DEFAULT_BURN.get(self.algo, 0)
        params = {"N": n, "burn": burn}
        if mode == "interp":
            res = interpret(self.program, self.net, RngState(seed), params=params)
            return RunOutcome("interp", res.estimate, res.flips, res.elapsed_ns,
                              res.node_writes)
        if mode in ("pe", "pe-cache"):
            rp = self.residual(enable_cache=mode == "pe-cache")
            compiled = self.compiled(enable_cache=mode == "pe-cache",
                                     debug_cache=debug_cache and mode == "pe-cache")
            res = compiled.run(RngState(seed), params=params)
            return RunOutcome(mode, res.estimate, res.flips, res.elapsed_ns,
                              res.node_writes, res.cache_stats,
                              rp.statement_count(), rp.loop_count())
        from .toolchain import run_compiled
        exe = self.executable(debug_cache=debug_cache, outdir=emit_dir)
        out = run_compiled(exe, seed, n, burn)
        rp = self.residual(True)
        return RunOutcome("c", out["estimate"], out["flips"], out["elapsed_ns"],
                          None, out.get("cache", []),
                          rp.statement_count(), rp.loop_count(), str(exe))
