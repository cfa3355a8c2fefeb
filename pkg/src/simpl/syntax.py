"""DSL abstract syntax, parser and resolver.

The concrete syntax is S-expressions (see `sexpr`). `when`/`unless`/`cond`/
`and`/`or` are desugared into `If`/`Begin` at parse time so the evaluators
only see the core forms. `define` may carry inline-control metadata:

    (define (f x y) #:no-inline-when-symbolic (x) body ...)

naming the parameters that must be concrete for the call to be inlined.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import DslSyntaxError, ResolveError
from .sexpr import Keyword, SAtom, SList, Symbol, read_all, to_datum

Pos = tuple


@dataclass
class Expr:
    pos: Pos


@dataclass
class Lit(Expr):
    value: object  # bool | int | float


@dataclass
class Quoted(Expr):
    datum: object  # nested lists / Symbols / numbers / bools


@dataclass
class Var(Expr):
    name: Symbol


@dataclass
class Call(Expr):
    fn: Expr
    args: list[Expr]


@dataclass
class Define(Expr):
    name: Symbol
    params: list[Symbol] | None  # None for value definitions
    body: list[Expr]
    no_inline_params: tuple[Symbol, ...] = ()


@dataclass
class Let(Expr):
    bindings: list[tuple[Symbol, Expr]]
    body: list[Expr]
    star: bool = False


@dataclass
class If(Expr):
    cond: Expr
    then: Expr
    els: Expr | None


@dataclass
class Begin(Expr):
    body: list[Expr]


@dataclass
class For(Expr):
    clauses: list[tuple[Symbol, Expr]]
    body: list[Expr]
    unroll: bool = False


@dataclass
class SetBang(Expr):
    name: Symbol
    value: Expr


@dataclass
class Static(Expr):
    expr: Expr


@dataclass
class Lift(Expr):
    expr: Expr


@dataclass
class CacheExpr(Expr):
    expr: Expr


_SPECIAL = {
    "define", "let", "let*", "if", "begin", "for", "for/unroll", "set!",
    "static", "lift", "cache", "quote", "when", "unless", "cond", "and", "or", "else",
}


def _sym(sx) -> Symbol:
    if not (isinstance(sx, SAtom) and isinstance(sx.value, Symbol)):
        raise DslSyntaxError("expected a symbol", sx.pos)
    return sx.value


def _need(sx: SList, n: int, form: str, exact=True):
    if exact and len(sx.items) != n or not exact and len(sx.items) < n:
        raise DslSyntaxError(f"malformed {form}: expected {'exactly' if exact else 'at least'} "
                             f"{n - 1} argument(s), got {len(sx.items) - 1}", sx.pos)


def _parse_body(items, pos) -> list[Expr]:
    if not items:
        raise DslSyntaxError("empty body", pos)
    return [parse_expr(x) for x in items]


def _parse_bindings(sx, form: str) -> list[tuple[Symbol, Expr]]:
    if not isinstance(sx, SList):
        raise DslSyntaxError(f"malformed {form}: expected a binding list", sx.pos)
    out = []
    for b in sx.items:
        if not (isinstance(b, SList) and len(b.items) == 2):
            raise DslSyntaxError(f"malformed {form} binding", b.pos if isinstance(b, SList) else sx.pos)
        out.append((_sym(b.items[0]), parse_expr(b.items[1])))
    return out


def _parse_define(sx: SList) -> Define:
    _need(sx, 3, "define", exact=False)
    head = sx.items[1]
    if isinstance(head, SAtom):
        _need(sx, 3, "define")
        return Define(sx.pos, _sym(head), None, [parse_expr(sx.items[2])])
    if not isinstance(head, SList) or not head.items:
        raise DslSyntaxError("malformed define header", sx.pos)
    name = _sym(head.items[0])
    params = [_sym(p) for p in head.items[1:]]
    if len(set(params)) != len(params):
        raise DslSyntaxError(f"duplicate parameter in define {name}", sx.pos)
    rest = sx.items[2:]
    no_inline: tuple[Symbol, ...] = ()
    if rest and isinstance(rest[0], SAtom) and isinstance(rest[0].value, Keyword):
        kw = rest[0].value
        if kw != "no-inline-when-symbolic":
            raise DslSyntaxError(f"unknown define attribute #:{kw}", rest[0].pos)
        if len(rest) < 2 or not isinstance(rest[1], SList):
            raise DslSyntaxError("#:no-inline-when-symbolic needs a parameter list", rest[0].pos)
        no_inline = tuple(_sym(p) for p in rest[1].items)
        unknown = set(no_inline) - set(params)
        if unknown:
            raise DslSyntaxError(f"#:no-inline-when-symbolic names unknown parameters {sorted(unknown)}",
                                 rest[0].pos)
        rest = rest[2:]
    return Define(sx.pos, name, params, _parse_body(rest, sx.pos), no_inline)


def _parse_for(sx: SList, unroll: bool) -> For:
    _need(sx, 3, "for", exact=False)
    clause_sx = sx.items[1]
    if not isinstance(clause_sx, SList) or not clause_sx.items:
        raise DslSyntaxError("malformed for: expected ([var iterable] ...)", sx.pos)
    clauses = _parse_bindings(clause_sx, "for")
    return For(sx.pos, clauses, _parse_body(sx.items[2:], sx.pos), unroll)


def parse_expr(sx) -> Expr:
    if isinstance(sx, SAtom):
        v = sx.value
        if isinstance(v, Symbol):
            if v in _SPECIAL:
                raise DslSyntaxError(f"special form {v!r} used as a value", sx.pos)
            return Var(sx.pos, v)
        if isinstance(v, Keyword):
            raise DslSyntaxError(f"stray keyword #{v!r}", sx.pos)
        return Lit(sx.pos, v)
    assert isinstance(sx, SList)
    if not sx.items:
        raise DslSyntaxError("empty application ()", sx.pos)
    head = sx.items[0]
    hname = head.value if isinstance(head, SAtom) and isinstance(head.value, Symbol) else None

    if hname == "quote":
        _need(sx, 2, "quote")
        return Quoted(sx.pos, to_datum(sx.items[1]))
    if hname == "define":
        return _parse_define(sx)
    if hname in ("let", "let*"):
        _need(sx, 3, hname, exact=False)
        return Let(sx.pos, _parse_bindings(sx.items[1], hname),
                   _parse_body(sx.items[2:], sx.pos), star=hname == "let*")
    if hname == "if":
        if len(sx.items) not in (3, 4):
            raise DslSyntaxError("malformed if", sx.pos)
        els = parse_expr(sx.items[3]) if len(sx.items) == 4 else None
        return If(sx.pos, parse_expr(sx.items[1]), parse_expr(sx.items[2]), els)
    if hname == "begin":
        return Begin(sx.pos, [parse_expr(x) for x in sx.items[1:]])
    if hname == "for":
        return _parse_for(sx, unroll=False)
    if hname == "for/unroll":
        return _parse_for(sx, unroll=True)
    if hname == "set!":
        _need(sx, 3, "set!")
        return SetBang(sx.pos, _sym(sx.items[1]), parse_expr(sx.items[2]))
    if hname in ("static", "lift", "cache"):
        _need(sx, 2, hname)
        inner = parse_expr(sx.items[1])
        return {"static": Static, "lift": Lift, "cache": CacheExpr}[hname](sx.pos, inner)
    if hname == "when":
        _need(sx, 3, "when", exact=False)
        return If(sx.pos, parse_expr(sx.items[1]), Begin(sx.pos, [parse_expr(x) for x in sx.items[2:]]), None)
    if hname == "unless":
        _need(sx, 3, "unless", exact=False)
        return If(sx.pos, parse_expr(sx.items[1]), Begin(sx.pos, []),
                  Begin(sx.pos, [parse_expr(x) for x in sx.items[2:]]))
    if hname == "and":
        if len(sx.items) == 1:
            return Lit(sx.pos, True)
        if len(sx.items) == 2:
            return parse_expr(sx.items[1])
        return _and_chain(sx)
    if hname == "or":
        if len(sx.items) == 1:
            return Lit(sx.pos, False)
        if len(sx.items) == 2:
            return parse_expr(sx.items[1])
        return _or_chain(sx)
    if hname == "cond":
        return _parse_cond(sx)
    return Call(sx.pos, parse_expr(head), [parse_expr(x) for x in sx.items[1:]])


def _and_chain(sx: SList) -> Expr:
    exprs = [parse_expr(x) for x in sx.items[1:]]
    out = exprs[-1]
    for e in reversed(exprs[:-1]):
        out = If(sx.pos, e, out, Lit(sx.pos, False))
    return out


def _or_chain(sx: SList) -> Expr:
    # (or a b) -> (if a #t b): operands are boolean tests in this DSL.
    exprs = [parse_expr(x) for x in sx.items[1:]]
    out = exprs[-1]
    for e in reversed(exprs[:-1]):
        out = If(sx.pos, e, Lit(sx.pos, True), out)
    return out


def _parse_cond(sx: SList) -> Expr:
    out: Expr | None = None
    for clause in reversed(sx.items[1:]):
        if not (isinstance(clause, SList) and len(clause.items) >= 2):
            raise DslSyntaxError("malformed cond clause", sx.pos)
        test = clause.items[0]
        body = Begin(clause.pos, [parse_expr(x) for x in clause.items[1:]])
        if isinstance(test, SAtom) and test.value == Symbol("else"):
            out = body
        else:
            out = If(clause.pos, parse_expr(test), body, out)
    if out is None:
        raise DslSyntaxError("empty cond", sx.pos)
    return out


def parse_program(text: str) -> list[Expr]:
    """Parse DSL source into a list of top-level forms.

    Top-level forms are definitions plus (usually) one trailing main
    expression; annotation forms are preserved as AST nodes.
    """
    return [parse_expr(sx) for sx in read_all(text)]


# --- resolver ---------------------------------------------------------------

def resolve(program: list[Expr], globals_: set[str], primitives: set[str]) -> None:
    """Check that every variable reference has a binder.

    `globals_` are harness-provided names (net, query, evidence, N, burn);
    `primitives` the built-in operation names. Raises ResolveError otherwise.
    Also rejects `set!` of loop variables and of top-level definitions.
    """
    top: set[str] = set(globals_)
    for form in program:
        if isinstance(form, Define):
            top.add(form.name)

    def walk(e: Expr, scope: dict[str, str]):
        # scope maps name -> binder kind ("let", "param", "loop", "internal")
        if isinstance(e, Var):
            if e.name not in scope and e.name not in top and e.name not in primitives:
                raise ResolveError(f"unbound variable {e.name!r}", e.pos)
        elif isinstance(e, Call):
            walk(e.fn, scope)
            for a in e.args:
                walk(a, scope)
        elif isinstance(e, Define):
            inner = dict(scope)
            if e.params is not None:
                for p in e.params:
                    inner[p] = "param"
            else:
                walk(e.body[0], scope)
                scope[e.name] = "internal"
                return
            for b in e.body:
                walk(b, inner)
        elif isinstance(e, Let):
            inner = dict(scope)
            for name, val in e.bindings:
                walk(val, inner if e.star else scope)
                if e.star:
                    inner[name] = "let"
            if not e.star:
                for name, _ in e.bindings:
                    inner[name] = "let"
            body_scope = dict(inner)
            for b in e.body:
                walk(b, body_scope)
        elif isinstance(e, If):
            walk(e.cond, scope)
            walk(e.then, scope)
            if e.els is not None:
                walk(e.els, scope)
        elif isinstance(e, Begin):
            inner = dict(scope)
            for b in e.body:
                walk(b, inner)
        elif isinstance(e, For):
            inner = dict(scope)
            for var, it in e.clauses:
                walk(it, scope)
                inner[var] = "loop"
            body_scope = dict(inner)
            for b in e.body:
                walk(b, body_scope)
        elif isinstance(e, SetBang):
            kind = scope.get(e.name)
            if kind is None:
                if e.name in top:
                    raise ResolveError(f"set! of top-level binding {e.name!r} is not allowed", e.pos)
                raise ResolveError(f"set! of unbound variable {e.name!r}", e.pos)
            if kind == "loop":
                raise ResolveError(f"set! of loop variable {e.name!r} is not allowed", e.pos)
            walk(e.value, scope)
        elif isinstance(e, (Static, Lift, CacheExpr)):
            walk(e.expr, scope)
        elif isinstance(e, (Lit, Quoted)):
            pass
        else:  # pragma: no cover
            raise AssertionError(f"unhandled node {type(e).__name__}")

    for form in program:
        if isinstance(form, Define) and form.params is not None:
            walk(form, {})
        else:
            walk(form, {})


# --- annotation utilities ----------------------------------------------------

def strip_annotations(e: Expr) -> Expr:
    """Remove static/lift/cache and downgrade for/unroll to for."""
    if isinstance(e, (Static, Lift, CacheExpr)):
        return strip_annotations(e.expr)
    if isinstance(e, For):
        return For(e.pos, [(v, strip_annotations(it)) for v, it in e.clauses],
                   [strip_annotations(b) for b in e.body], unroll=False)
    if isinstance(e, Call):
        return Call(e.pos, strip_annotations(e.fn), [strip_annotations(a) for a in e.args])
    if isinstance(e, Define):
        return Define(e.pos, e.name, e.params, [strip_annotations(b) for b in e.body], ())
    if isinstance(e, Let):
        return Let(e.pos, [(n, strip_annotations(v)) for n, v in e.bindings],
                   [strip_annotations(b) for b in e.body], e.star)
    if isinstance(e, If):
        els = strip_annotations(e.els) if e.els is not None else None
        return If(e.pos, strip_annotations(e.cond), strip_annotations(e.then), els)
    if isinstance(e, Begin):
        return Begin(e.pos, [strip_annotations(b) for b in e.body])
    if isinstance(e, SetBang):
        return SetBang(e.pos, e.name, strip_annotations(e.value))
    return e


def count_annotations(program: list[Expr]) -> int:
    """Count static/lift/cache forms, unrolled loops and no-inline attributes."""
    n = 0

    def walk(e: Expr):
        nonlocal n
        if isinstance(e, (Static, Lift, CacheExpr)):
            n += 1
            walk(e.expr)
        elif isinstance(e, For):
            n += 1 if e.unroll else 0
            for _, it in e.clauses:
                walk(it)
            for b in e.body:
                walk(b)
        elif isinstance(e, Define):
            n += 1 if e.no_inline_params else 0
            for b in e.body:
                walk(b)
        elif isinstance(e, Call):
            walk(e.fn)
            for a in e.args:
                walk(a)
        elif isinstance(e, Let):
            for _, v in e.bindings:
                walk(v)
            for b in e.body:
                walk(b)
        elif isinstance(e, If):
            walk(e.cond)
            walk(e.then)
            if e.els is not None:
                walk(e.els)
        elif isinstance(e, Begin):
            for b in e.body:
                walk(b)
        elif isinstance(e, SetBang):
            walk(e.value)

    for form in program:
        walk(form)
    return n
