"""Reference interpreter: eager evaluation, zero specialization.

Annotations are no-ops here (`static`/`lift`/`cache` evaluate their body,
`for/unroll` behaves as `for`), so any algorithm runs unchanged without the
specializer. Identical (program, model, seed) triples produce identical
output bit for bit; `flip` consumes exactly one draw in left-to-right,
depth-first order.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import syntax as S
from .deepstack import run_deep
from .env import DSLFunction, Env, Vec
from .errors import DslRuntimeError
from .model import BayesNet, Node, NodeRef
from .prims import PURE, check_bool, normalize_vec, vec_of
from .rng import RngState
from .sexpr import Symbol


@dataclass
class RunResult:
    value: object
    estimate: list[float]
    flips: int
    node_writes: int
    elapsed_ns: int = 0


def as_estimate(value) -> list[float]:
    if isinstance(value, Vec):
        return [float(x) for x in value.items]
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return [float(value)]
    if isinstance(value, bool):
        return [1.0 if value else 0.0]
    return []


class Interpreter:
    def __init__(self, net: BayesNet, rng: RngState):
        self.net = net
        self.rng = rng
        self.node_writes = 0

    # --- harness -------------------------------------------------------------

    def globals_env(self, params: dict | None = None) -> Env:
        env = Env()
        env.define("net", self.net)
        env.define("query", self.net.query)
        env.define("evidence", list(self.net.evidence))
        for k, v in (params or {}).items():
            env.define(k, v)
        return env

    def run(self, program: list[S.Expr], params: dict | None = None) -> RunResult:
        self.net.reset_values()
        env = self.globals_env(params)
        start_draws = self.rng.draws

        def go():
            value = None
            for form in program:
                value = self.eval(form, env)
            return value

        value = run_deep(go)
        return RunResult(value, as_estimate(value), self.rng.draws - start_draws,
                         self.node_writes)

    # --- evaluation ----------------------------------------------------------

    def eval(self, e: S.Expr, env: Env):
        return _DISPATCH[e.__class__](self, e, env)

    def eval_lit(self, e: S.Lit, env: Env):
        return e.value

    def eval_quoted(self, e: S.Quoted, env: Env):
        return e.datum

    def eval_if(self, e: S.If, env: Env):
        if self.eval(e.cond, env) is not False:
            return self.eval(e.then, env)
        return self.eval(e.els, env) if e.els is not None else None

    def eval_let(self, e: S.Let, env: Env):
        inner = env.child()
        if e.star:
            for name, val in e.bindings:
                inner.define(name, self.eval(val, inner))
        else:
            for name, v in [(name, self.eval(val, env)) for name, val in e.bindings]:
                inner.define(name, v)
        return self.eval_body(e.body, inner)

    def eval_begin(self, e: S.Begin, env: Env):
        return self.eval_body(e.body, env) if e.body else None

    def eval_define(self, e: S.Define, env: Env):
        if e.params is None:
            env.define(e.name, self.eval(e.body[0], env))
        else:
            env.define(e.name, DSLFunction(e.name, e.params, e.body, env, e.no_inline_params))
        return None

    def eval_setbang(self, e: S.SetBang, env: Env):
        env.assign(e.name, self.eval(e.value, env))
        return None

    def eval_annotation(self, e, env: Env):
        return self.eval(e.expr, env)  # annotations are no-ops here

    def eval_var(self, e: S.Var, env: Env):
        name = e.name
        scope = env
        while scope is not None:
            v = scope.vars.get(name, _MISSING)
            if v is not _MISSING:
                return v
            scope = scope.parent
        prim = _PRIM_REFS.get(name)
        if prim is not None:
            return prim
        raise DslRuntimeError(f"unbound variable {name!r}", e.pos)

    def eval_body(self, body: list[S.Expr], env: Env):
        value = None
        for form in body:
            value = self.eval(form, env)
        return value

    def iterable_values(self, v, pos):
        if isinstance(v, bool):
            raise DslRuntimeError("for: cannot iterate a boolean", pos)
        if isinstance(v, int):
            return range(v)
        if isinstance(v, list):
            return v
        if isinstance(v, BayesNet):
            return list(v.nodes)
        raise DslRuntimeError(f"for: cannot iterate {v!r}", pos)

    def eval_for(self, e: S.For, env: Env):
        iters = [self.iterable_values(self.eval(it, env), e.pos) for _, it in e.clauses]
        names = [name for name, _ in e.clauses]
        for bundle in zip(*iters):
            inner = env.child()
            for name, v in zip(names, bundle):
                inner.define(name, v)
            self.eval_body(e.body, inner)
        return None

    # --- application ---------------------------------------------------------

    def eval_call(self, e: S.Call, env: Env):
        fn = self.eval(e.fn, env)
        if isinstance(fn, _PrimRef):
            return self.apply_prim(fn.name, e, env)
        args = [self.eval(a, env) for a in e.args]
        return self.apply(fn, args, e.pos)

    def apply(self, fn, args: list, pos):
        if isinstance(fn, DSLFunction):
            if len(args) != len(fn.params):
                raise DslRuntimeError(
                    f"{fn.name}: expected {len(fn.params)} argument(s), got {len(args)}", pos)
            inner = fn.env.child()
            for p, a in zip(fn.params, args):
                inner.define(p, a)
            return self.eval_body(fn.body, inner)
        if isinstance(fn, _PrimRef):  # primitive passed by name to map/foldl
            return self.apply_prim_values(fn.name, args, pos)
        raise DslRuntimeError(f"not a function: {fn!r}", pos)

    def apply_prim(self, name: str, e: S.Call, env: Env):
        args = [self.eval(a, env) for a in e.args]
        return self.apply_prim_values(name, args, e.pos)

    def apply_prim_values(self, name: str, args: list, pos):
        if name in PURE:
            try:
                return PURE[name][0](*args)
            except TypeError:
                raise DslRuntimeError(f"{name}: bad arity ({len(args)} argument(s))", pos) from None
            except DslRuntimeError as err:
                if err.span is None:
                    raise type(err)(str(err), pos) from None
                raise
        handler = getattr(self, "_prim_" + _MANGLE[name], None)
        if handler is None:
            raise DslRuntimeError(f"unknown primitive {name!r}", pos)
        return handler(args, pos)

    # --- effectful / model primitives ---------------------------------------

    def _prim_flip(self, args, pos):
        if len(args) != 1:
            raise DslRuntimeError("flip: one argument expected", pos)
        p = args[0]
        if isinstance(p, bool) or not isinstance(p, (int, float)):
            raise DslRuntimeError(f"flip: probability must be a number, got {p!r}", pos)
        if not 0.0 <= p <= 1.0:
            raise DslRuntimeError(f"flip: probability {p!r} outside [0, 1]", pos)
        return self.rng.flip(p)

    def _prim_random_index(self, args, pos):
        if len(args) != 1 or isinstance(args[0], bool) or not isinstance(args[0], int):
            raise DslRuntimeError("random-index: one integer argument expected", pos)
        return self.rng.random_index(args[0])

    def _prim_require_positive(self, args, pos):
        if len(args) != 1:
            raise DslRuntimeError("require-positive: one argument expected", pos)
        x = args[0]
        if isinstance(x, bool) or not isinstance(x, (int, float)) or not x > 0:
            raise DslRuntimeError(f"require-positive: {x!r} is not positive", pos)
        return x

    def _prim_print(self, args, pos):
        print(*args)
        return None

    def _prim_value(self, args, pos):
        if not args or len(args) > 2:
            raise DslRuntimeError("value: (value node [index]) expected", pos)
        target = args[0]
        if isinstance(target, NodeRef):
            if len(args) == 2:
                raise DslRuntimeError("value: node reference already carries an index", pos)
            return target.node.get(target.index)
        if not isinstance(target, Node):
            raise DslRuntimeError(f"value: expected a node, got {target!r}", pos)
        return target.get(args[1] if len(args) == 2 else None)

    def _prim_set_value(self, args, pos):
        if len(args) not in (2, 3):
            raise DslRuntimeError("set-value!: (set-value! node v [index]) expected", pos)
        node = args[0]
        if isinstance(node, NodeRef):
            node, idx = node.node, node.index
            if len(args) == 3:
                raise DslRuntimeError("set-value!: node reference already carries an index", pos)
        else:
            idx = args[2] if len(args) == 3 else None
        if not isinstance(node, Node):
            raise DslRuntimeError(f"set-value!: expected a node, got {node!r}", pos)
        node.set(check_bool(args[1], "set-value!"), idx)
        self.node_writes += 1
        return None

    def _prim_vector(self, args, pos):
        return Vec(args)

    def _prim_vector_ref(self, args, pos):
        if len(args) != 2:
            raise DslRuntimeError("vector-ref: two arguments expected", pos)
        v = vec_of(args[0], "vector-ref")
        i = args[1]
        if isinstance(i, bool) or not isinstance(i, int) or not 0 <= i < len(v.items):
            raise DslRuntimeError(f"vector-ref: bad index {i!r}", pos)
        return v.items[i]

    def _prim_vector_set(self, args, pos):
        if len(args) != 3:
            raise DslRuntimeError("vector-set!: three arguments expected", pos)
        v = vec_of(args[0], "vector-set!")
        i = args[1]
        if isinstance(i, bool) or not isinstance(i, int) or not 0 <= i < len(v.items):
            raise DslRuntimeError(f"vector-set!: bad index {i!r}", pos)
        v.items[i] = args[2]
        return None

    def _prim_normalize(self, args, pos):
        if len(args) != 1:
            raise DslRuntimeError("normalize: one argument expected", pos)
        v = args[0]
        if isinstance(v, Vec):
            return Vec(normalize_vec(v.items))
        if isinstance(v, list):
            return normalize_vec(v)
        raise DslRuntimeError(f"normalize: expected a vector, got {v!r}", pos)

    def _prim_map(self, args, pos):
        if len(args) != 2:
            raise DslRuntimeError("map: two arguments expected", pos)
        fn, lst = args
        if not isinstance(lst, list):
            raise DslRuntimeError(f"map: expected a list, got {lst!r}", pos)
        return [self.apply(fn, [x], pos) for x in lst]

    def _prim_foldl(self, args, pos):
        if len(args) != 3:
            raise DslRuntimeError("foldl: three arguments expected", pos)
        fn, acc, lst = args
        if not isinstance(lst, list):
            raise DslRuntimeError(f"foldl: expected a list, got {lst!r}", pos)
        for x in lst:
            acc = self.apply(fn, [x, acc], pos)
        return acc


class _PrimRef:
    __slots__ = ("name",)

    def __init__(self, name: str):
        self.name = name

    def __repr__(self) -> str:
        return f"#<primitive {self.name}>"


_MISSING = object()

_SPECIAL_NAMES = {
    "flip", "random-index", "require-positive", "print", "value", "set-value!",
    "vector", "vector-ref", "vector-set!", "normalize", "map", "foldl",
}

_MANGLE = {
    "flip": "flip", "random-index": "random_index", "require-positive": "require_positive",
    "print": "print", "value": "value", "set-value!": "set_value",
    "vector": "vector", "vector-ref": "vector_ref", "vector-set!": "vector_set",
    "normalize": "normalize", "map": "map", "foldl": "foldl",
}


_PRIM_REFS = {name: _PrimRef(name) for name in list(PURE) + list(_SPECIAL_NAMES)}

_DISPATCH = {
    S.Lit: Interpreter.eval_lit,
    S.Quoted: Interpreter.eval_quoted,
    S.Var: Interpreter.eval_var,
    S.Call: Interpreter.eval_call,
    S.If: Interpreter.eval_if,
    S.Let: Interpreter.eval_let,
    S.Begin: Interpreter.eval_begin,
    S.Define: Interpreter.eval_define,
    S.SetBang: Interpreter.eval_setbang,
    S.For: Interpreter.eval_for,
    S.Static: Interpreter.eval_annotation,
    S.Lift: Interpreter.eval_annotation,
    S.CacheExpr: Interpreter.eval_annotation,
}


def interpret(program: list[S.Expr], net: BayesNet, rng: RngState,
              params: dict | None = None) -> RunResult:
    """Run `program` against `net` with the given RNG; annotations are no-ops."""
    import time
    interp = Interpreter(net, rng)
    t0 = time.perf_counter_ns()
    result = interp.run(program, params)
    result.elapsed_ns = time.perf_counter_ns() - t0
    return result
