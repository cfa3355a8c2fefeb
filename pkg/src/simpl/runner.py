"""Direct execution of residual programs.

The trace is translated once into a Python function (the generate-and-run
analogue of emitting host-language code) and called with the live RNG.
Statement order, draw order and arithmetic order match the trace exactly,
so results are bit-identical to the reference interpreter per seed.
"""

from __future__ import annotations

import time

from .cache import RtCache, make_caches, stats_list
from .errors import DslRuntimeError, UnsupportedFeatureError
from .interp import RunResult
from .ir import (AllocVec, CacheStmt, Const, DeclCell, Def, Effect, Flip,
                 ForStmt, IfStmt, NormalizeStmt, PrintStmt, RandomIndex, Ref,
                 RequirePositive, ResidualProgram, SetCell, SetVec)
from .model import Node, NodeRef
from .prims import PURE, _eqv
from .rng import RngState

_BINOPS = {"add": "+", "sub": "-", "mul": "*", "div": "/", "eq": "==",
           "lt": "<", "gt": ">", "le": "<=", "ge": ">="}

_OBJ_FNS = {name: PURE[name][0] for name in
            ("car", "cdr", "cons", "null?", "second", "member", "length",
             "list-ref", "list", "parents", "children", "CPT", "evidence?",
             "nodes", "array-length")}
_OBJ_OP_TO_NAME = {"car": "car", "cdr": "cdr", "cons": "cons", "nullp": "null?",
                   "second": "second", "member": "member", "length": "length",
                   "listref": "list-ref", "list": "list", "parents": "parents",
                   "children": "children", "cpt": "CPT", "evidencep": "evidence?",
                   "nodes": "nodes", "arraylength": "array-length"}


def _readnode(n, i=None):
    if isinstance(n, NodeRef):
        return n.node.get(n.index)
    return n.get(i)


def _setnode(n, v, i=None):
    if isinstance(n, NodeRef):
        n.node.set(v, n.index)
    else:
        n.set(v, i)


class CompiledResidual:
    """A residual program lowered to one Python function."""

    def __init__(self, rp: ResidualProgram, debug_cache: bool = False):
        self.rp = rp
        self.debug_cache = debug_cache
        self.source, self.consts = _translate(rp, debug_cache)
        ns = {
            "_obj": _OBJ_FNS,
            "_readnode": _readnode,
            "_setnode": _setnode,
            "_eqv": _eqv,
            "_err": DslRuntimeError,
        }
        code = compile(self.source, "<residual>", "exec")
        exec(code, ns)
        self._fn = ns["_residual"]

    def run(self, rng: RngState, params: dict | None = None,
            caches: dict[str, RtCache] | None = None) -> RunResult:
        params = params or {}
        args = []
        for p in self.rp.params:
            if p not in params:
                raise DslRuntimeError(f"residual program needs parameter {p!r}")
            args.append(int(params[p]))
        caches = caches if caches is not None else make_caches(self.rp)
        start = rng.draws
        t0 = time.perf_counter_ns()
        value, writes = self._fn(rng, caches, self.consts, *args)
        elapsed = time.perf_counter_ns() - t0
        result = RunResult(value, _as_estimate(value), rng.draws - start, writes, elapsed)
        result.cache_stats = stats_list(caches)
        return result


def run_residual(rp: ResidualProgram, rng: RngState, params: dict | None = None,
                 debug_cache: bool = False) -> RunResult:
    return CompiledResidual(rp, debug_cache).run(rng, params)


def _as_estimate(value) -> list[float]:
    if isinstance(value, list):
        return [float(x) for x in value]
    if isinstance(value, bool):
        return [1.0 if value else 0.0]
    if isinstance(value, (int, float)):
        return [float(value)]
    return []


# --- translation ---------------------------------------------------------------


def _translate(rp: ResidualProgram, debug_cache: bool):
    consts: list = []
    lines: list[str] = []
    counters = {"s": 0, "k": 0}

    def fresh(prefix: str) -> str:
        counters[prefix] += 1
        return f"_{prefix}{counters[prefix]}"

    def const_expr(v) -> str:
        if isinstance(v, bool) or v is None:
            return repr(v)
        if isinstance(v, (int, float)):
            return repr(v)
        consts.append(v)
        return f"_consts[{len(consts) - 1}]"

    def op_expr(x) -> str:
        return x.name if isinstance(x, Ref) else const_expr(x.value)

    model_cells = {name for name, d in rp.cells.items()
                   if d.node is not None and not d.kind.startswith("const")}
    array_cells = {name for name, d in rp.cells.items() if d.kind.endswith("_array")}

    def kind_of_operand(x) -> str:
        if isinstance(x, Const):
            if isinstance(x.value, bool):
                return "bool"
            if isinstance(x.value, int):
                return "int"
            if isinstance(x.value, float):
                return "float"
            return "obj"
        if x.name in rp.temp_kinds:
            return rp.temp_kinds[x.name]
        if x.name in rp.cells:
            return rp.cells[x.name].kind.replace("_array", "")
        return "int"  # params and loop vars

    def emit(line: str, depth: int):
        lines.append("    " * depth + line)

    def emit_def(s: Def, depth: int):
        if s.op in _BINOPS:
            a, b = (op_expr(x) for x in s.args)
            if s.op == "eq" and any(kind_of_operand(x) == "obj" for x in s.args):
                emit(f"{s.target} = _eqv({a}, {b})", depth)
                return
            emit(f"{s.target} = {a} {_BINOPS[s.op]} {b}", depth)
        elif s.op == "neg":
            emit(f"{s.target} = -{op_expr(s.args[0])}", depth)
        elif s.op == "not":
            emit(f"{s.target} = not {op_expr(s.args[0])}", depth)
        elif s.op == "abs":
            emit(f"{s.target} = abs({op_expr(s.args[0])})", depth)
        elif s.op in ("min", "max"):
            a, b = (op_expr(x) for x in s.args)
            cmp = "<" if s.op == "min" else ">"
            emit(f"{s.target} = {b} if {b} {cmp} {a} else {a}", depth)
        elif s.op == "read":
            emit(f"{s.target} = {s.args[0].name}", depth)
        elif s.op == "readvec":
            emit(f"{s.target} = {s.args[0].name}[{op_expr(s.args[1])}]", depth)
        elif s.op == "readnode":
            args = ", ".join(op_expr(a) for a in s.args)
            emit(f"{s.target} = _readnode({args})", depth)
        elif s.op in _OBJ_OP_TO_NAME:
            name = _OBJ_OP_TO_NAME[s.op]
            args = ", ".join(op_expr(a) for a in s.args)
            emit(f"{s.target} = _obj[{name!r}]({args})", depth)
        else:
            raise UnsupportedFeatureError(f"executor: unknown op {s.op!r}")

    def emit_block(stmts, depth: int):
        if not stmts:
            emit("pass", depth)
            return
        for s in stmts:
            if isinstance(s, Def):
                emit_def(s, depth)
            elif isinstance(s, Flip):
                emit(f"{s.target} = _flip({op_expr(s.p)})", depth)
            elif isinstance(s, RandomIndex):
                emit(f"{s.target} = _ri({op_expr(s.k)})", depth)
            elif isinstance(s, RequirePositive):
                a = op_expr(s.arg)
                emit(f"if not {a} > 0:", depth)
                emit(f"    raise _err('require-positive: %r is not positive' % ({a},))", depth)
                emit(f"{s.target} = {a}", depth)
            elif isinstance(s, SetCell):
                emit(f"{s.cell} = {op_expr(s.value)}", depth)
                if s.cell in model_cells:
                    emit("_writes += 1", depth)
            elif isinstance(s, SetVec):
                emit(f"{s.cell}[{op_expr(s.index)}] = {op_expr(s.value)}", depth)
                if s.cell in model_cells:
                    emit("_writes += 1", depth)
            elif isinstance(s, AllocVec):
                emit(f"{s.cell} = [{', '.join(op_expr(a) for a in s.items)}]", depth)
            elif isinstance(s, DeclCell):
                emit(f"{s.name} = {op_expr(s.init)}", depth)
            elif isinstance(s, IfStmt):
                emit(f"if {op_expr(s.cond)}:", depth)
                emit_block(s.then, depth + 1)
                if s.els:
                    emit("else:", depth)
                    emit_block(s.els, depth + 1)
            elif isinstance(s, ForStmt):
                emit(f"for {s.var} in range({op_expr(s.bound)}):", depth)
                emit_block(s.body, depth + 1)
            elif isinstance(s, CacheStmt):
                emit_cache(s, depth)
            elif isinstance(s, NormalizeStmt):
                emit_normalize(s, depth)
            elif isinstance(s, PrintStmt):
                emit(f"print({op_expr(s.arg)})", depth)
            elif isinstance(s, Effect):
                args = ", ".join(op_expr(a) for a in s.args)
                emit(f"_setnode({args})", depth)
                emit("_writes += 1", depth)
            else:  # pragma: no cover
                raise UnsupportedFeatureError(f"executor: unknown statement {s!r}")

    def key_expr(s: CacheStmt) -> str:
        parts = []
        for k in s.keys:
            parts.append(f"tuple({k})" if k in array_cells else k)
        return "(" + ", ".join(parts) + ("," if len(parts) == 1 else "") + ")"

    def emit_cache(s: CacheStmt, depth: int):
        kv = fresh("k")
        cache = f"_caches[{s.cache_id!r}]"
        emit(f"{kv} = {key_expr(s)}", depth)
        emit(f"_t = {cache}", depth)
        if debug_cache:
            emit_block(s.body, depth)
            emit(f"{s.target} = {op_expr(s.result)}", depth)
            emit(f"_t.check({kv}, {s.target})", depth)
        else:
            emit(f"if {kv} in _t.table:", depth)
            emit("_t.hits += 1", depth + 1)
            emit(f"{s.target} = _t.table[{kv}]", depth + 1)
            emit("else:", depth)
            emit("_t.misses += 1", depth + 1)
            emit_block(s.body, depth + 1)
            emit(f"{s.target} = {op_expr(s.result)}", depth + 1)
            emit(f"_t.table[{kv}] = {s.target}", depth + 1)

    def emit_normalize(s: NormalizeStmt, depth: int):
        size = rp.cells[s.cell].length
        sv = fresh("s")
        emit(f"{sv} = 0.0", depth)
        for i in range(size):
            emit(f"{sv} += {s.cell}[{i}]", depth)
        emit(f"if {sv} == 0.0:", depth)
        emit("    raise _err('normalize: weight vector sums to zero (no accepted mass)')",
             depth)
        for i in range(size):
            emit(f"{s.cell}[{i}] = {s.cell}[{i}] / {sv}", depth)

    params = ", ".join(rp.params)
    header = f"def _residual(_rng, _caches, _consts{', ' + params if params else ''}):"
    lines.append(header)
    emit("_flip = _rng.flip", 1)
    emit("_ri = _rng.random_index", 1)
    emit("_writes = 0", 1)
    for name in sorted(rp.cells):
        d = rp.cells[name]
        if d.kind == "const_bool_array":
            consts.append(tuple(d.init))
            emit(f"{name} = _consts[{len(consts) - 1}]", 1)
        elif d.kind == "bool_array":
            emit(f"{name} = [False] * {d.length}", 1)
        elif d.node is not None:
            emit(f"{name} = {d.init!r}", 1)
        # joins, locals and user vectors are declared by their statements
    emit_block(rp.body, 1)
    if isinstance(rp.result, Ref):
        name = rp.result.name
        if name in rp.cells and rp.cells[name].kind.endswith("_array"):
            emit(f"return list({name}), _writes", 1)
        else:
            emit(f"return {name}, _writes", 1)
    else:
        emit(f"return {const_expr(rp.result.value)}, _writes", 1)
    return "\n".join(lines) + "\n", consts
