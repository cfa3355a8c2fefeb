"""Online partial evaluator.

Evaluates an algorithm AST against a concrete model. Everything whose
inputs are known is computed on the spot; everything else appends a
statement to the trace and is represented by a `Residual` value naming the
temp (or literal) that will carry it at runtime. The Concrete/Residual tag
of each value *is* the binding time; there is no separate analysis pass.

Binding-time defaults: random draws, mutable data and non-evidence node
values are dynamic; structure (graph, CPTs, evidence values, lists) is
static. `static`/`lift` override per expression; `for/unroll` iterates at
specialization time; `define` bodies inline unconditionally unless the
definition names parameters that must stay concrete.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import ir
from . import syntax as S
from .deepstack import run_deep
from .env import DSLFunction, Env
from .errors import (BadStaticError, DslRuntimeError, NonTerminationError,
                     UnsupportedFeatureError)
from .ir import (AllocVec, CacheInfo, CacheStmt, CellDecl, Const, DeclCell, Def,
                 Effect, Flip, ForStmt, IfStmt, NormalizeStmt, PrintStmt,
                 RandomIndex, Ref, RequirePositive, ResidualProgram, SetCell,
                 SetVec)
from .model import BayesNet, ModelCodePlan, Node, NodeRef, specialize_model
from .prims import PURE
from .sexpr import Symbol


@dataclass(frozen=True)
class Concrete:
    datum: object


@dataclass(frozen=True)
class Residual:
    ref: object  # Const or Ref
    kind: str  # bool | int | float | obj | unknown


VOID = Concrete(None)


class CellBinding:
    """A `set!` target living in a runtime cell; reads go through temps."""

    __slots__ = ("name", "kind")

    def __init__(self, name: str, kind: str):
        self.name = name
        self.kind = kind


class MutBinding:
    """A `set!` target created inside a static extent; mutated at PE time."""

    __slots__ = ("value", "extent")

    def __init__(self, value, extent: int):
        self.value = value
        self.extent = extent


class PEVec:
    """PE-time vector, created and mutated only inside static extents."""

    __slots__ = ("items", "extent")

    def __init__(self, items, extent: int):
        self.items = list(items)
        self.extent = extent


def kind_of_concrete(x) -> str:
    if isinstance(x, bool):
        return "bool"
    if isinstance(x, int):
        return "int"
    if isinstance(x, float):
        return "float"
    if x is None:
        return "void"
    return "obj"


def value_kind(v) -> str:
    return v.kind if isinstance(v, Residual) else kind_of_concrete(v.datum)


_NUMERIC = {"+", "-", "*", "/", "=", "<", ">", "<=", ">=", "min", "max", "abs", "not", "eq?"}
_STRUCT = {"car", "cdr", "cons", "null?", "first", "second", "member", "length",
           "list-ref", "list"}
_MODEL = {"parents", "children", "CPT", "evidence?", "nodes", "array-length"}

_CMP_OPS = {"eq", "lt", "gt", "le", "ge", "not", "nullp", "member", "evidencep"}


def _arith_kind(op: str, kinds: list[str]) -> str:
    if op == "div":
        return "float"
    if op in _CMP_OPS:
        return "bool"
    if any(k in ("obj", "unknown") for k in kinds):
        return "unknown"
    return "float" if "float" in kinds else "int"


class PE:
    def __init__(self, net: BayesNet, plan: ModelCodePlan, enable_cache=True,
                 inline_limit: int = 10_000):
        self.net = net
        self.plan = plan
        self.enable_cache = enable_cache
        self.inline_limit = inline_limit
        self.blocks: list[list] = [[]]
        self.static_stack: list[int] = []
        self.extent_counter = 0
        self.inline_stack: list[str] = []
        self.inline_snapshot: list[str] = []
        self.counters = {"v": 0, "j": 0, "vec": 0, "loc": 0, "i": 0, "c": 0}
        self.temp_kinds: dict[str, str] = {}
        self.cells: dict[str, CellDecl] = {}
        self.caches: dict[str, CacheInfo] = {}
        self.pos = (1, 1)
        for node in net.nodes:
            entry = plan.entries[node.name]
            if entry.kind == "cell":
                self.cells[entry.name] = CellDecl(entry.name, "bool", 0, False,
                                                  node.name, node.index)
            elif entry.kind == "array":
                self.cells[entry.name] = CellDecl(entry.name, "bool_array", entry.length,
                                                  False, node.name, node.index)
            elif entry.kind == "const-array":
                self.cells[entry.name] = CellDecl(entry.name, "const_bool_array",
                                                  entry.length, entry.const,
                                                  node.name, node.index)

    # --- trace helpers --------------------------------------------------------

    @property
    def static_mode(self) -> bool:
        return bool(self.static_stack)

    def fresh(self, prefix: str) -> str:
        n = self.counters[prefix]
        self.counters[prefix] = n + 1
        return f"{prefix}{n}"

    def emit(self, stmt) -> None:
        if self.static_mode:
            raise BadStaticError(
                "expression inside static cannot be evaluated at specialization time "
                "(it would need residual code)", self.pos)
        self.blocks[-1].append(stmt)

    def def_temp(self, op: str, args: list, kind: str) -> Residual:
        t = self.fresh("v")
        self.temp_kinds[t] = kind
        self.emit(Def(t, op, args))
        return Residual(Ref(t), kind)

    # --- value plumbing -------------------------------------------------------

    def unwrap_deep(self, v):
        if isinstance(v, Residual):
            raise DslRuntimeError("a dynamic value escaped into a static structure", self.pos)
        d = v.datum
        if isinstance(d, list):
            return [self.unwrap_deep(x) for x in d]
        if isinstance(d, PEVec):
            raise DslRuntimeError("a specialization-time vector cannot be used here; "
                                  "wrap it in lift", self.pos)
        return d

    def operandize(self, v, allow_obj=False):
        if isinstance(v, Residual):
            return v.ref
        k = kind_of_concrete(v.datum)
        if k in ("bool", "int", "float"):
            return Const(v.datum)
        if k == "void":
            raise DslRuntimeError("a void value cannot be used as an operand", self.pos)
        if allow_obj:
            return Const(self.unwrap_deep(v))
        raise DslRuntimeError(f"value {v.datum!r} has no runtime representation", self.pos)

    def wrap_datum(self, d):
        if isinstance(d, list):
            return Concrete([self.wrap_datum(x) for x in d])
        return Concrete(d)

    # --- main dispatch ---------------------------------------------------------

    def eval(self, e: S.Expr, env: Env):
        self.pos = e.pos
        if isinstance(e, S.Lit):
            return Concrete(e.value)
        if isinstance(e, S.Quoted):
            return self.wrap_datum(e.datum)
        if isinstance(e, S.Var):
            return self.eval_var(e, env)
        if isinstance(e, S.Call):
            return self.eval_call(e, env)
        if isinstance(e, S.If):
            return self.eval_if(e, env)
        if isinstance(e, S.Let):
            return self.eval_let(e, env)
        if isinstance(e, S.Begin):
            return self.eval_body(e.body, env) if e.body else VOID
        if isinstance(e, S.Define):
            self.eval_define(e, env, mutated=set())
            return VOID
        if isinstance(e, S.SetBang):
            return self.eval_set(e, env)
        if isinstance(e, S.For):
            return self.eval_for(e, env)
        if isinstance(e, S.Static):
            return self.eval_static(e, env)
        if isinstance(e, S.Lift):
            return self.eval_lift(e, env)
        if isinstance(e, S.CacheExpr):
            return self.eval_cache(e, env)
        raise AssertionError(f"unhandled node {type(e).__name__}")  # pragma: no cover

    def eval_var(self, e: S.Var, env: Env):
        try:
            b = env.lookup(e.name)
        except DslRuntimeError:
            if e.name in PURE or e.name in _PE_SPECIAL:
                return Concrete(_PrimName(e.name))
            raise DslRuntimeError(f"unbound variable {e.name!r}", e.pos) from None
        if isinstance(b, CellBinding):
            if self.static_mode:
                raise BadStaticError(f"mutable binding {e.name!r} read inside static", e.pos)
            self.pos = e.pos
            return self.def_temp("read", [Ref(b.name)], b.kind)
        if isinstance(b, MutBinding):
            return b.value
        return b

    def eval_body(self, body: list[S.Expr], env: Env):
        mutated = mutated_names(body)
        value = VOID
        for form in body:
            if isinstance(form, S.Define):
                self.eval_define(form, env, mutated)
                value = VOID
            else:
                value = self.eval(form, env)
        return value

    def eval_define(self, e: S.Define, env: Env, mutated: set):
        if e.params is not None:
            env.define(e.name, Concrete(DSLFunction(e.name, e.params, e.body, env,
                                                    e.no_inline_params)))
            return
        v = self.eval(e.body[0], env)
        env.define(e.name, self.make_binding(e.name, v, mutated))

    def make_binding(self, name: str, v, mutated: set):
        """Plain value binding, or a runtime cell / PE-time box when `set!` hits it."""
        if name not in mutated:
            return v
        if self.static_mode:
            return MutBinding(v, self.static_stack[-1])
        kind = value_kind(v)
        if kind not in ("bool", "int", "float"):
            raise DslRuntimeError(
                f"binding {name!r} is assigned with set! and must hold a number or boolean",
                self.pos)
        cell = self.fresh("loc")
        self.cells[cell] = CellDecl(cell, kind)
        self.emit(DeclCell(cell, kind, self.operandize(v)))
        return CellBinding(cell, kind)

    def eval_set(self, e: S.SetBang, env: Env):
        b = env.lookup(e.name)
        v = self.eval(e.value, env)
        if isinstance(b, CellBinding):
            if self.static_mode:
                raise BadStaticError(f"set! of runtime binding {e.name!r} inside static", e.pos)
            if value_kind(v) not in ("bool", "int", "float"):
                raise DslRuntimeError(f"set! of {e.name!r} with a structured value", e.pos)
            self.pos = e.pos
            self.emit(SetCell(b.name, self.operandize(v)))
            return VOID
        if isinstance(b, MutBinding):
            if b.extent not in self.static_stack:
                raise BadStaticError(
                    f"set! of {e.name!r}: binding was created in a static extent that "
                    "already closed", e.pos)
            b.value = v
            return VOID
        raise DslRuntimeError(f"set! of immutable binding {e.name!r}", e.pos)

    def eval_let(self, e: S.Let, env: Env):
        mutated = mutated_names([b for _, b in e.bindings]) | mutated_names(e.body)
        inner = env.child()
        if e.star:
            for name, val in e.bindings:
                v = self.eval(val, inner)
                inner.define(name, self.make_binding(name, v, mutated))
        else:
            vals = [(name, self.eval(val, env)) for name, val in e.bindings]
            for name, v in vals:
                inner.define(name, self.make_binding(name, v, mutated))
        return self.eval_body(e.body, inner)

    # --- conditionals ----------------------------------------------------------

    def eval_if(self, e: S.If, env: Env):
        cond = self.eval(e.cond, env)
        if isinstance(cond, Concrete):
            if cond.datum is not False:
                return self.eval(e.then, env)
            return self.eval(e.els, env) if e.els is not None else VOID
        if cond.kind not in ("bool", "int"):
            raise DslRuntimeError("if: dynamic condition must be boolean", e.pos)

        self.blocks.append([])
        then_v = self.eval(e.then, env)
        then_block = self.blocks.pop()
        self.blocks.append([])
        els_v = self.eval(e.els, env) if e.els is not None else VOID
        els_block = self.blocks.pop()

        then_void = isinstance(then_v, Concrete) and then_v.datum is None
        els_void = isinstance(els_v, Concrete) and els_v.datum is None
        self.pos = e.pos
        if then_void or els_void:
            if then_block or els_block:
                self.emit(IfStmt(cond.ref, then_block, els_block))
            return VOID
        kinds = {value_kind(then_v), value_kind(els_v)}
        if "obj" in kinds or "unknown" in kinds or "fvec" in kinds:
            raise DslRuntimeError("if: cannot join structured values from dynamic branches",
                                  e.pos)
        kind = "float" if "float" in kinds else "int" if "int" in kinds else "bool"
        join = self.fresh("j")
        self.cells[join] = CellDecl(join, kind)
        zero = {"bool": False, "int": 0, "float": 0.0}[kind]
        self.emit(DeclCell(join, kind, Const(zero)))
        then_block.append(SetCell(join, self.operandize(then_v)))
        els_block.append(SetCell(join, self.operandize(els_v)))
        self.emit(IfStmt(cond.ref, then_block, els_block))
        return Residual(Ref(join), kind)

    # --- loops -------------------------------------------------------------------

    def iterable_concrete(self, v, pos):
        if isinstance(v, Residual):
            return None
        d = v.datum
        if isinstance(d, bool):
            raise DslRuntimeError("for: cannot iterate a boolean", pos)
        if isinstance(d, int):
            return [Concrete(i) for i in range(d)]
        if isinstance(d, list):
            return d
        if isinstance(d, BayesNet):
            return [Concrete(n) for n in d.nodes]
        raise DslRuntimeError(f"for: cannot iterate {d!r}", pos)

    def eval_for(self, e: S.For, env: Env):
        iters = [(name, self.eval(it, env)) for name, it in e.clauses]
        if e.unroll:
            seqs = []
            for name, v in iters:
                seq = self.iterable_concrete(v, e.pos)
                if seq is None:
                    raise BadStaticError(
                        f"for/unroll over a dynamic iterable (loop variable {name!r}); "
                        "use for, or make the iterable static", e.pos)
                seqs.append(seq)
            for bundle in zip(*seqs):
                inner = env.child()
                for (name, _), v in zip(iters, bundle):
                    inner.define(name, v)
                self.eval_body(e.body, inner)
            return VOID

        if self.static_mode:
            raise BadStaticError("runtime for loop inside static", e.pos)
        if len(iters) != 1:
            raise UnsupportedFeatureError(
                "a residual for supports a single clause; use for/unroll for "
                "lockstep iteration", e.pos)
        name, v = iters[0]
        loop_var = self.fresh("i")
        self.temp_kinds[loop_var] = "int"
        inner = env.child()
        prelude: list = []
        if isinstance(v, Residual):
            if v.kind != "int":
                raise DslRuntimeError("for: dynamic iterable must be an integer bound", e.pos)
            bound = v.ref
            inner.define(name, Residual(Ref(loop_var), "int"))
        else:
            d = v.datum
            if isinstance(d, int) and not isinstance(d, bool):
                bound = Const(d)
                inner.define(name, Residual(Ref(loop_var), "int"))
            else:
                seq = self.iterable_concrete(v, e.pos)
                datum = self.unwrap_deep(Concrete([x for x in seq]))
                bound = Const(len(datum))
                elem = self.fresh("v")
                self.temp_kinds[elem] = "obj"
                prelude.append(Def(elem, "listref", [Const(datum), Ref(loop_var)]))
                inner.define(name, Residual(Ref(elem), "obj"))
        self.blocks.append(prelude)
        self.eval_body(e.body, inner)
        body = self.blocks.pop()
        self.pos = e.pos
        self.emit(ForStmt(loop_var, bound, body))
        return VOID

    # --- annotations ---------------------------------------------------------------

    def eval_static(self, e: S.Static, env: Env):
        self.extent_counter += 1
        self.static_stack.append(self.extent_counter)
        try:
            v = self.eval(e.expr, env)
        finally:
            self.static_stack.pop()
        if isinstance(v, Residual):
            raise BadStaticError("static expression did not reduce to a concrete value", e.pos)
        return v

    def eval_lift(self, e: S.Lift, env: Env):
        v = self.eval(e.expr, env)
        if isinstance(v, Residual):
            return v
        d = v.datum
        k = kind_of_concrete(d)
        if k in ("bool", "int", "float"):
            return Residual(Const(d), k)
        if isinstance(d, PEVec):
            return self.materialize_vec(d)
        if d is None:
            raise DslRuntimeError("lift of a void value", e.pos)
        return Residual(Const(self.unwrap_deep(v)), "obj")

    def materialize_vec(self, d: PEVec) -> Residual:
        items = [self.operandize(x) for x in d.items]
        cell = self.fresh("vec")
        self.cells[cell] = CellDecl(cell, "float_array", len(items))
        self.emit(AllocVec(cell, items))
        return Residual(Ref(cell), "fvec")

    # --- calls ------------------------------------------------------------------

    def eval_call(self, e: S.Call, env: Env):
        fn = self.eval(e.fn, env)
        if isinstance(fn, Concrete) and isinstance(fn.datum, _PrimName):
            return self.eval_prim(fn.datum.name, e, env)
        args = [self.eval(a, env) for a in e.args]
        return self.apply(fn, args, e.pos)

    def apply(self, fn, args, pos):
        if not isinstance(fn, Concrete):
            raise DslRuntimeError("dynamic call targets are not supported", pos)
        f = fn.datum
        if isinstance(f, _PrimName):
            return self.apply_prim_values(f.name, args, pos)
        if not isinstance(f, DSLFunction):
            raise DslRuntimeError(f"not a function: {f!r}", pos)
        return self.inline_call(f, args, pos)

    def inline_call(self, fn: DSLFunction, args, pos):
        if len(args) != len(fn.params):
            raise DslRuntimeError(f"{fn.name}: expected {len(fn.params)} argument(s), "
                                  f"got {len(args)}", pos)
        for p, a in zip(fn.params, args):
            if p in fn.no_inline_params and isinstance(a, Residual):
                raise UnsupportedFeatureError(
                    f"call to {fn.name}: parameter {p!r} is marked "
                    "#:no-inline-when-symbolic but received a dynamic value; "
                    "restructure so this argument is concrete", pos)
        if len(self.inline_stack) >= self.inline_limit:
            raise NonTerminationError(
                f"inline depth limit ({self.inline_limit}) exceeded while inlining "
                f"{fn.name!r}; a recursive function is being inlined with dynamic "
                "arguments", self.inline_stack + [fn.name], pos)
        self.inline_stack.append(fn.name)
        if len(self.inline_stack) % 500 == 0:
            self.inline_snapshot = list(self.inline_stack)
        inner = fn.env.child()
        mutated = mutated_names(fn.body)
        try:
            for p, a in zip(fn.params, args):
                inner.define(p, self.make_binding(p, a, mutated))
            return self.eval_body(fn.body, inner)
        finally:
            self.inline_stack.pop()

    # --- primitives -----------------------------------------------------------------

    def eval_prim(self, name: str, e: S.Call, env: Env):
        args = [self.eval(a, env) for a in e.args]
        self.pos = e.pos
        return self.apply_prim_values(name, args, e.pos)

    def apply_prim_values(self, name: str, args, pos):
        self.pos = pos
        if name in _NUMERIC:
            return self.pe_numeric(name, args, pos)
        if name in _STRUCT:
            return self.pe_struct(name, args, pos)
        if name in _MODEL:
            return self.pe_model_struct(name, args, pos)
        handler = _PE_SPECIAL.get(name)
        if handler is None:
            raise DslRuntimeError(f"unknown primitive {name!r}", pos)
        return handler(self, args, pos)

    # pure numeric ops: apply when concrete, else emit one temp per expression
    def pe_numeric(self, name: str, args, pos):
        if name in ("+", "*") and len(args) > 2:
            acc = args[0]
            for x in args[1:]:
                acc = self.pe_numeric(name, [acc, x], pos)
            return acc
        if all(isinstance(a, Concrete) for a in args):
            raw = [a.datum for a in args]
            return Concrete(PURE[name][0](*raw))
        if self.static_mode:
            raise BadStaticError(f"({name} ...) has a dynamic argument inside static", pos)
        op = PURE[name][1]
        if name == "-" and len(args) == 1:
            op = "neg"
        simplified = self.simplify(name, args)
        if simplified is not None:
            return simplified
        kinds = [value_kind(a) for a in args]
        operands = [self.operandize(a, allow_obj=name in ("eq?", "member")) for a in args]
        return self.def_temp(op, operands, _arith_kind(op, kinds))

    def simplify(self, name: str, args):
        """Value-preserving float64 identities only; no reassociation."""
        if len(args) != 2:
            return None
        a, b = args

        def is_const(v, c):
            return (isinstance(v, Concrete) and not isinstance(v.datum, bool)
                    and isinstance(v.datum, (int, float)) and v.datum == c)

        if name == "+":
            if is_const(a, 0):
                return b
            if is_const(b, 0):
                return a
        if name == "*":
            if is_const(a, 1):
                return b
            if is_const(b, 1):
                return a
        return None

    # list/structure ops work on PE-time lists whose elements are Values
    def pe_struct(self, name: str, args, pos):
        if any(isinstance(a, Residual) for a in args):
            if self.static_mode:
                raise BadStaticError(f"({name} ...) has a dynamic argument inside static", pos)
            operands = [self.operandize(a, allow_obj=True) for a in args]
            kind = {"null?": "bool", "member": "bool", "length": "int"}.get(name, "obj")
            return self.def_temp(PURE[name][1], operands, kind)
        if name == "list":
            return Concrete(list(args))
        (a, *rest) = args

        def listy(v):
            if not isinstance(v.datum, list):
                raise DslRuntimeError(f"{name}: expected a list, got {v.datum!r}", pos)
            return v.datum

        if name in ("car", "first"):
            lst = listy(a)
            if not lst:
                raise DslRuntimeError(f"{name} of empty list", pos)
            return lst[0]
        if name == "cdr":
            lst = listy(a)
            if not lst:
                raise DslRuntimeError("cdr of empty list", pos)
            return Concrete(lst[1:])
        if name == "second":
            lst = listy(a)
            if len(lst) < 2:
                raise DslRuntimeError("second: list too short", pos)
            return lst[1]
        if name == "cons":
            return Concrete([a] + listy(rest[0]))
        if name == "null?":
            return Concrete(listy(a) == [])
        if name == "length":
            return Concrete(len(listy(a)))
        if name == "list-ref":
            lst = listy(a)
            i = rest[0].datum
            if not isinstance(i, int) or isinstance(i, bool) or not 0 <= i < len(lst):
                raise DslRuntimeError(f"list-ref: bad index {i!r}", pos)
            return lst[i]
        if name == "member":
            needle = a
            out = False
            for item in listy(rest[0]):
                if isinstance(item, Residual):
                    raise DslRuntimeError("member over a list with dynamic elements", pos)
                if isinstance(needle.datum, (Node, NodeRef)) or isinstance(item.datum, (Node, NodeRef)):
                    if needle.datum is item.datum:
                        out = True
                        break
                elif needle.datum == item.datum:
                    out = True
                    break
            return Concrete(out)
        raise AssertionError(name)  # pragma: no cover

    # graph structure is fixed: always static on concrete handles
    def pe_model_struct(self, name: str, args, pos):
        if any(isinstance(a, Residual) for a in args):
            if self.static_mode:
                raise BadStaticError(f"({name} ...) on a dynamic node inside static", pos)
            operands = [self.operandize(a, allow_obj=True) for a in args]
            kind = {"evidence?": "bool", "array-length": "int"}.get(name, "obj")
            return self.def_temp(PURE[name][1], operands, kind)
        raw = [a.datum for a in args]
        return self.wrap_datum(PURE[name][0](*raw))


# --- effectful and model-value primitives -------------------------------------------


def _pe_flip(pe: PE, args, pos):
    if len(args) != 1:
        raise DslRuntimeError("flip: one argument expected", pos)
    p = args[0]
    if pe.static_mode:
        raise BadStaticError("flip inside static: randomness can never be static", pos)
    if isinstance(p, Concrete):
        d = p.datum
        if isinstance(d, bool) or not isinstance(d, (int, float)):
            raise DslRuntimeError(f"flip: probability must be a number, got {d!r}", pos)
        if not 0.0 <= d <= 1.0:
            raise DslRuntimeError(f"flip: probability {d!r} outside [0, 1]", pos)
    elif p.kind not in ("float", "int", "unknown"):
        raise DslRuntimeError("flip: probability must be numeric", pos)
    t = pe.fresh("v")
    pe.temp_kinds[t] = "bool"
    pe.emit(Flip(t, pe.operandize(p)))
    return Residual(Ref(t), "bool")


def _pe_random_index(pe: PE, args, pos):
    if len(args) != 1:
        raise DslRuntimeError("random-index: one argument expected", pos)
    k = args[0]
    if pe.static_mode:
        raise BadStaticError("random-index inside static: randomness can never be static", pos)
    if isinstance(k, Concrete) and (isinstance(k.datum, bool) or not isinstance(k.datum, int)
                                    or k.datum <= 0):
        raise DslRuntimeError(f"random-index: bound must be a positive integer, got {k.datum!r}",
                              pos)
    t = pe.fresh("v")
    pe.temp_kinds[t] = "int"
    pe.emit(RandomIndex(t, pe.operandize(k)))
    return Residual(Ref(t), "int")


def _pe_require_positive(pe: PE, args, pos):
    if len(args) != 1:
        raise DslRuntimeError("require-positive: one argument expected", pos)
    x = args[0]
    if isinstance(x, Concrete):
        d = x.datum
        if isinstance(d, bool) or not isinstance(d, (int, float)) or not d > 0:
            raise DslRuntimeError(f"require-positive: {d!r} is not positive", pos)
        return x
    t = pe.fresh("v")
    pe.temp_kinds[t] = x.kind
    pe.emit(RequirePositive(t, x.ref))
    return Residual(Ref(t), x.kind)


def _pe_print(pe: PE, args, pos):
    if len(args) != 1:
        raise DslRuntimeError("print: one argument expected", pos)
    if pe.static_mode:
        raise BadStaticError("print inside static: output is an effect", pos)
    pe.emit(PrintStmt(pe.operandize(args[0], allow_obj=True)))
    return VOID


def _node_target(pe: PE, args, pos, who):
    """Resolve (node [index]) arguments to (Node, index Value or None)."""
    target = args[0]
    if isinstance(target, Residual):
        return None, None  # dynamic handle
    d = target.datum
    if isinstance(d, NodeRef):
        if len(args) > 1:
            raise DslRuntimeError(f"{who}: node reference already carries an index", pos)
        return d.node, (Concrete(d.index) if d.index is not None else None)
    if not isinstance(d, Node):
        raise DslRuntimeError(f"{who}: expected a node, got {d!r}", pos)
    idx = args[1] if len(args) > 1 else None
    return d, idx


def _check_index(pe: PE, idx, node: Node, pos):
    if isinstance(idx, Concrete):
        i = idx.datum
        if isinstance(i, bool) or not isinstance(i, int):
            raise DslRuntimeError(f"index must be an integer, got {i!r}", pos)
        if not 0 <= i < node.length:
            raise DslRuntimeError(f"index {i} out of range for {node.name}[{node.length}]", pos)
    elif idx.kind not in ("int", "unknown"):
        raise DslRuntimeError("index must be an integer", pos)


def _pe_value(pe: PE, args, pos):
    if not args or len(args) > 2:
        raise DslRuntimeError("value: (value node [index]) expected", pos)
    node, idx = _node_target(pe, args, pos, "value")
    if node is None:  # dynamic node handle: residual read through the graph
        if pe.static_mode:
            raise BadStaticError("value of a dynamic node inside static", pos)
        return pe.def_temp("readnode", [pe.operandize(a, allow_obj=True) for a in args], "bool")
    entry = pe.plan.entries[node.name]
    if node.is_array and idx is None:
        raise DslRuntimeError(f"value: node {node.name} holds an array; an index is required",
                              pos)
    if not node.is_array and idx is not None:
        raise DslRuntimeError(f"value: array operation on scalar node {node.name}", pos)
    if idx is not None:
        _check_index(pe, idx, node, pos)
    if entry.kind == "const":
        return Concrete(entry.const)  # fixed evidence; broadcast covers any index
    if entry.kind == "const-array":
        if isinstance(idx, Concrete):
            return Concrete(entry.const[idx.datum])
        if pe.static_mode:
            raise BadStaticError("per-index evidence read with a dynamic index inside static",
                                 pos)
        return pe.def_temp("readvec", [Ref(entry.name), pe.operandize(idx)], "bool")
    from .model import VALUE_READ
    if VALUE_READ not in pe.plan.required:
        raise DslRuntimeError("model plan does not provide value reads", pos)
    if pe.static_mode:
        raise BadStaticError(
            f"(value {node.name}) inside static: non-evidence node values are dynamic", pos)
    if entry.kind == "cell":
        return pe.def_temp("read", [Ref(entry.name)], "bool")
    return pe.def_temp("readvec", [Ref(entry.name), pe.operandize(idx)], "bool")


def _pe_set_value(pe: PE, args, pos):
    if len(args) not in (2, 3):
        raise DslRuntimeError("set-value!: (set-value! node v [index]) expected", pos)
    if pe.static_mode:
        raise BadStaticError("set-value! inside static: node values are runtime state", pos)
    node_args = [args[0]] + ([args[2]] if len(args) == 3 else [])
    node, idx = _node_target(pe, node_args, pos, "set-value!")
    val = args[1]
    if value_kind(val) != "bool":
        raise DslRuntimeError("set-value!: value must be a boolean", pos)
    if node is None:
        pe.emit(Effect("setnode", [pe.operandize(a, allow_obj=True) for a in args]))
        return VOID
    if node.is_evidence:
        raise DslRuntimeError(f"cannot write to evidence node {node.name}", pos)
    from .model import VALUE_WRITE
    if VALUE_WRITE not in pe.plan.required:
        raise DslRuntimeError("model plan does not provide value writes", pos)
    entry = pe.plan.entries[node.name]
    if node.is_array and idx is None:
        raise DslRuntimeError(f"set-value!: node {node.name} needs an index", pos)
    if not node.is_array and idx is not None:
        raise DslRuntimeError(f"set-value!: array operation on scalar node {node.name}", pos)
    if idx is not None:
        _check_index(pe, idx, node, pos)
        pe.emit(SetVec(entry.name, pe.operandize(idx), pe.operandize(val)))
    else:
        pe.emit(SetCell(entry.name, pe.operandize(val)))
    return VOID


def _pe_vector(pe: PE, args, pos):
    if pe.static_mode:
        return Concrete(PEVec(args, pe.static_stack[-1]))
    items = []
    for a in args:
        if value_kind(a) not in ("bool", "int", "float"):
            raise DslRuntimeError("vector elements must be numbers or booleans", pos)
        items.append(pe.operandize(a))
    cell = pe.fresh("vec")
    pe.cells[cell] = CellDecl(cell, "float_array", len(items))
    pe.emit(AllocVec(cell, items))
    return Residual(Ref(cell), "fvec")


def _vec_arg(pe: PE, v, pos, who):
    if isinstance(v, Residual):
        if v.kind != "fvec":
            raise DslRuntimeError(f"{who}: expected a vector", pos)
        return v.ref.name
    if isinstance(v.datum, PEVec):
        return v.datum
    raise DslRuntimeError(f"{who}: expected a vector, got {v.datum!r}", pos)


def _pe_vector_ref(pe: PE, args, pos):
    if len(args) != 2:
        raise DslRuntimeError("vector-ref: two arguments expected", pos)
    target = _vec_arg(pe, args[0], pos, "vector-ref")
    idx = args[1]
    if isinstance(target, PEVec):
        if not pe.static_mode:
            raise BadStaticError(
                "reads of mutable specialization-time data are only evaluated inside "
                "static; wrap the expression in static or lift the vector", pos)
        if not isinstance(idx, Concrete):
            raise BadStaticError("vector-ref with a dynamic index inside static", pos)
        return target.items[idx.datum]
    if pe.static_mode:
        raise BadStaticError("vector-ref of a runtime vector inside static", pos)
    return pe.def_temp("readvec", [Ref(target), pe.operandize(idx)], "float")


def _pe_vector_set(pe: PE, args, pos):
    if len(args) != 3:
        raise DslRuntimeError("vector-set!: three arguments expected", pos)
    target = _vec_arg(pe, args[0], pos, "vector-set!")
    idx, val = args[1], args[2]
    if isinstance(target, PEVec):
        if not pe.static_mode or target.extent not in pe.static_stack:
            raise BadStaticError(
                "mutation of specialization-time data is only allowed inside the static "
                "extent that created it", pos)
        if not isinstance(idx, Concrete):
            raise BadStaticError("vector-set! with a dynamic index inside static", pos)
        target.items[idx.datum] = val
        return VOID
    if pe.static_mode:
        raise BadStaticError("vector-set! of a runtime vector inside static", pos)
    pe.emit(SetVec(target, pe.operandize(idx), pe.operandize(val)))
    return VOID


def _pe_normalize(pe: PE, args, pos):
    if len(args) != 1:
        raise DslRuntimeError("normalize: one argument expected", pos)
    v = args[0]
    if isinstance(v, Concrete):
        from .prims import normalize_vec
        if isinstance(v.datum, PEVec):
            items = [x.datum for x in v.datum.items]
            return pe.wrap_datum(normalize_vec(items))
        if isinstance(v.datum, list):
            return pe.wrap_datum(normalize_vec([x.datum for x in v.datum]))
        raise DslRuntimeError("normalize: expected a vector", pos)
    if v.kind != "fvec":
        raise DslRuntimeError("normalize: expected a vector", pos)
    pe.emit(NormalizeStmt(v.ref.name))
    return Residual(v.ref, "fvec")


def _pe_map(pe: PE, args, pos):
    if len(args) != 2:
        raise DslRuntimeError("map: two arguments expected", pos)
    fn, lst = args
    if isinstance(lst, Residual):
        raise UnsupportedFeatureError("map over a dynamic list is not supported; "
                                      "iterate with for instead", pos)
    if not isinstance(lst.datum, list):
        raise DslRuntimeError(f"map: expected a list, got {lst.datum!r}", pos)
    return Concrete([pe.apply(fn, [x], pos) for x in lst.datum])


def _pe_foldl(pe: PE, args, pos):
    if len(args) != 3:
        raise DslRuntimeError("foldl: three arguments expected", pos)
    fn, acc, lst = args
    if isinstance(lst, Residual):
        raise UnsupportedFeatureError("foldl over a dynamic list is not supported; "
                                      "iterate with for instead", pos)
    if not isinstance(lst.datum, list):
        raise DslRuntimeError(f"foldl: expected a list, got {lst.datum!r}", pos)
    for x in lst.datum:
        acc = pe.apply(fn, [x, acc], pos)
    return acc


def _pe_cache(pe_: PE, args, pos):  # pragma: no cover - dispatched via eval_cache
    raise AssertionError("cache is a special form")


_PE_SPECIAL = {
    "flip": _pe_flip,
    "random-index": _pe_random_index,
    "require-positive": _pe_require_positive,
    "print": _pe_print,
    "value": _pe_value,
    "set-value!": _pe_set_value,
    "vector": _pe_vector,
    "vector-ref": _pe_vector_ref,
    "vector-set!": _pe_vector_set,
    "normalize": _pe_normalize,
    "map": _pe_map,
    "foldl": _pe_foldl,
}


class _PrimName:
    __slots__ = ("name",)

    def __init__(self, name: str):
        self.name = name

    def __repr__(self) -> str:
        return f"#<primitive {self.name}>"


def mutated_names(exprs) -> set:
    """Names assigned with set! anywhere below (over-approximate: shadowing
    inside the subtree still marks the outer name)."""
    out: set = set()

    def walk(e):
        if isinstance(e, S.SetBang):
            out.add(e.name)
            walk(e.value)
        elif isinstance(e, S.Call):
            walk(e.fn)
            for a in e.args:
                walk(a)
        elif isinstance(e, S.Define):
            for b in e.body:
                walk(b)
        elif isinstance(e, S.Let):
            for _, v in e.bindings:
                walk(v)
            for b in e.body:
                walk(b)
        elif isinstance(e, S.If):
            walk(e.cond), walk(e.then)
            if e.els is not None:
                walk(e.els)
        elif isinstance(e, S.Begin):
            for b in e.body:
                walk(b)
        elif isinstance(e, S.For):
            for _, it in e.clauses:
                walk(it)
            for b in e.body:
                walk(b)
        elif isinstance(e, (S.Static, S.Lift, S.CacheExpr)):
            walk(e.expr)

    for e in exprs:
        walk(e)
    return out


# --- the cache construct ----------------------------------------------------------


def _cache_effect_check(pe: PE, block, internal: set, pos):
    for s in block:
        if isinstance(s, (Flip, RandomIndex, PrintStmt, Effect, CacheStmt)):
            raise DslRuntimeError(
                "caching an effectful expression would change program meaning "
                f"({type(s).__name__.lower()} inside cache)", pos)
        if isinstance(s, (SetCell, SetVec)) and s.cell not in internal:
            raise DslRuntimeError(
                "caching an effectful expression would change program meaning "
                f"(write to {s.cell} inside cache)", pos)
        if isinstance(s, NormalizeStmt) and s.cell not in internal:
            raise DslRuntimeError("caching an effectful expression would change program "
                                  f"meaning (normalize of {s.cell} inside cache)", pos)
        if isinstance(s, (AllocVec, DeclCell)):
            internal.add(s.cell if isinstance(s, AllocVec) else s.name)
        if isinstance(s, IfStmt):
            _cache_effect_check(pe, s.then, internal, pos)
            _cache_effect_check(pe, s.els, internal, pos)
        if isinstance(s, ForStmt):
            inner = set(internal)
            inner.add(s.var)
            _cache_effect_check(pe, s.body, inner, pos)


def _cache_keys(pe: PE, block, result) -> list[str]:
    """Free mutable inputs of the body, in first-use order: reads of outer
    cells, plus direct references to outer temps and loop variables."""
    internal: set = set()
    keys: list[str] = []

    def classify(name: str):
        if name in internal or name in keys:
            return
        if name in pe.cells and pe.cells[name].kind == "const_bool_array":
            return
        keys.append(name)

    def operand(x):
        if isinstance(x, Ref):
            classify(x.name)

    def walk(stmts):
        for s in stmts:
            if isinstance(s, Def):
                if s.op in ("read", "readvec"):
                    classify(s.args[0].name)
                    for a in s.args[1:]:
                        operand(a)
                else:
                    for a in s.args:
                        operand(a)
                internal.add(s.target)
            elif isinstance(s, RequirePositive):
                operand(s.arg)
                internal.add(s.target)
            elif isinstance(s, (SetCell, SetVec)):
                if isinstance(s, SetVec):
                    operand(s.index)
                operand(s.value)
            elif isinstance(s, AllocVec):
                for a in s.items:
                    operand(a)
                internal.add(s.cell)
            elif isinstance(s, DeclCell):
                operand(s.init)
                internal.add(s.name)
            elif isinstance(s, IfStmt):
                operand(s.cond)
                walk(s.then), walk(s.els)
            elif isinstance(s, ForStmt):
                operand(s.bound)
                internal.add(s.var)
                walk(s.body)
            elif isinstance(s, NormalizeStmt):
                classify(s.cell)

    walk(block)
    if isinstance(result, Ref) and result.name not in internal:
        classify(result.name)
    return keys


def _key_meta(pe: PE, name: str):
    if name in pe.cells:
        d = pe.cells[name]
        base = d.kind.replace("_array", "")
        return (name, base + ("[]" if d.kind.endswith("_array") else ""), d.length)
    return (name, pe.temp_kinds.get(name, "int"), 0)


def pe_eval_cache(pe: PE, e: S.CacheExpr, env: Env):
    if not pe.enable_cache or pe.static_mode:
        return pe.eval(e.expr, env)
    pe.blocks.append([])
    v = pe.eval(e.expr, env)
    block = pe.blocks.pop()
    pe.pos = e.pos
    if isinstance(v, Concrete):
        block = ir.prune(block, set())
        _cache_effect_check(pe, block, set(), e.pos)
        pe.blocks[-1].extend(block)  # only harmless body-local leftovers survive
        return v
    if v.kind not in ("bool", "int", "float"):
        raise DslRuntimeError("cache: the cached expression must produce a single "
                              "number or boolean", e.pos)
    result_op = v.ref
    live = {result_op.name} if isinstance(result_op, Ref) else set()
    block = ir.prune(block, live)
    _cache_effect_check(pe, block, set(), e.pos)
    keys = _cache_keys(pe, block, result_op)
    cid = pe.fresh("c")
    meta = [_key_meta(pe, k) for k in keys]
    dense = all(kind == "bool" for _, kind, _ in meta) and 0 < len(meta) <= 20
    pe.caches[cid] = CacheInfo(cid, meta, v.kind, dense)
    t = pe.fresh("v")
    pe.temp_kinds[t] = v.kind
    pe.emit(CacheStmt(t, cid, keys, block, result_op))
    return Residual(Ref(t), v.kind)


PE.eval_cache = pe_eval_cache


# --- driver ---------------------------------------------------------------------


def pe(program: list[S.Expr], net: BayesNet, plan: ModelCodePlan | None = None,
       rng_policy: str = "dynamic", enable_cache: bool = True,
       inline_limit: int = 10_000, params: tuple = ("N", "burn"),
       param_values: dict | None = None) -> ResidualProgram:
    """Specialize `program` against `net`, returning the residual trace.

    The RNG stays a runtime input (`rng_policy` accepts only "dynamic");
    `params` are runtime integer inputs bound as residual references.
    `param_values` may pin a param to a concrete integer instead.
    """
    if rng_policy != "dynamic":
        raise DslRuntimeError(f"unsupported rng policy {rng_policy!r}")
    plan = plan if plan is not None else specialize_model(net)
    engine = PE(net, plan, enable_cache=enable_cache, inline_limit=inline_limit)
    env = Env()
    env.define("net", Concrete(net))
    env.define("query", Concrete(net.query))
    env.define("evidence", Concrete([Concrete(n) for n in net.evidence]))
    param_values = param_values or {}
    used_params = []
    for p in params:
        if p in param_values:
            env.define(p, Concrete(int(param_values[p])))
        else:
            env.define(p, Residual(Ref(p), "int"))
            used_params.append(p)

    def go():
        value = VOID
        for form in program:
            if isinstance(form, S.Define):
                engine.eval_define(form, env, mutated=set())
            else:
                value = engine.eval(form, env)
        return value

    try:
        value = run_deep(go)
    except RecursionError:
        raise NonTerminationError(
            "specialization exhausted the interpreter stack before the inline "
            "limit; a recursive function is being inlined with dynamic arguments",
            engine.inline_snapshot or list(engine.inline_stack)) from None

    if isinstance(value, Concrete) and value.datum is None:
        result = Const(None)
    elif isinstance(value, Residual):
        result = value.ref
    else:
        result = engine.operandize(value, allow_obj=True)

    body = engine.blocks[0]
    live = {result.name} if isinstance(result, Ref) else set()
    body = ir.prune(body, live)
    rp = ResidualProgram(params=used_params, cells=engine.cells, body=body,
                         result=result, temp_kinds=engine.temp_kinds,
                         caches=engine.caches)
    rp.params = [p for p in used_params if p in ir.used_refs(rp)]
    ir.validate(rp)
    return rp
