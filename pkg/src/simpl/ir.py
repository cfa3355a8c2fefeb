"""SSA-like residual trace: the output of specialization.

A residual program is a statement list over three name spaces:

* temps (`v12`) — written exactly once, by the statement defining them;
* cells — mutable storage: model-plan variables/arrays, user vectors,
  `set!` targets and conditional join variables;
* params (`N`, `burn`) and loop variables (`i3`) — runtime integers.

Every operand of every statement is a literal, a declared name, or a temp
defined earlier in an enclosing block. `validate` checks this statically.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

# --- operands ----------------------------------------------------------------


@dataclass(frozen=True)
class Const:
    value: object  # bool | int | float, or an opaque datum for obj ops


@dataclass(frozen=True)
class Ref:
    name: str


Operand = object

# ops whose C translation exists; everything else is executor-only
C_OPS = {
    "add", "sub", "mul", "div", "eq", "lt", "gt", "le", "ge",
    "not", "min", "max", "abs", "neg", "read", "readvec",
}

OBJ_OPS = {
    "car", "cdr", "cons", "nullp", "second", "member", "length", "listref",
    "list", "parents", "children", "cpt", "evidencep", "nodes", "arraylength",
    "readnode",
}

# --- statements ----------------------------------------------------------------


@dataclass
class Def:
    target: str
    op: str
    args: list


@dataclass
class Flip:
    target: str
    p: Operand


@dataclass
class RandomIndex:
    target: str
    k: Operand


@dataclass
class RequirePositive:
    target: str
    arg: Operand


@dataclass
class SetCell:
    cell: str
    value: Operand


@dataclass
class SetVec:
    cell: str
    index: Operand
    value: Operand


@dataclass
class AllocVec:
    cell: str
    items: list


@dataclass
class DeclCell:
    name: str
    kind: str  # bool | int | float
    init: Operand


@dataclass
class IfStmt:
    cond: Operand
    then: list
    els: list


@dataclass
class ForStmt:
    var: str
    bound: Operand
    body: list


@dataclass
class CacheStmt:
    target: str
    cache_id: str
    keys: list[str]
    body: list
    result: Operand


@dataclass
class NormalizeStmt:
    cell: str


@dataclass
class PrintStmt:
    arg: Operand


@dataclass
class Effect:
    """Executor-only effect over dynamic structure (e.g. a write through a
    runtime node handle). The C emitter refuses these."""

    op: str
    args: list


# --- program -----------------------------------------------------------------


@dataclass
class CellDecl:
    name: str
    kind: str  # bool | int | float | bool_array | float_array | const_bool_array
    length: int = 0
    init: object = None  # scalar init, tuple for const arrays
    node: str | None = None  # originating model node, when any
    node_index: int = -1  # its topological position (for rendering)


@dataclass
class CacheInfo:
    cache_id: str
    keys: list[tuple]  # (name, kind, length) per key
    value_kind: str
    dense: bool


@dataclass
class ResidualProgram:
    params: list[str]
    cells: dict[str, CellDecl] = field(default_factory=dict)
    body: list = field(default_factory=list)
    result: Operand = Const(None)
    temp_kinds: dict[str, str] = field(default_factory=dict)
    caches: dict[str, CacheInfo] = field(default_factory=dict)

    def statement_count(self) -> int:
        return sum(_stmt_size(s) for s in self.body)

    def loop_count(self) -> int:
        return sum(_loop_count(s) for s in self.body)

    def ops_used(self) -> set:
        out: set = set()

        def walk(stmts):
            for s in stmts:
                if isinstance(s, Def):
                    out.add(s.op)
                elif isinstance(s, Effect):
                    out.add(s.op)
                elif isinstance(s, IfStmt):
                    walk(s.then), walk(s.els)
                elif isinstance(s, ForStmt):
                    walk(s.body)
                elif isinstance(s, CacheStmt):
                    walk(s.body)

        walk(self.body)
        return out


def _stmt_size(s) -> int:
    if isinstance(s, IfStmt):
        return 1 + sum(map(_stmt_size, s.then)) + sum(map(_stmt_size, s.els))
    if isinstance(s, ForStmt):
        return 1 + sum(map(_stmt_size, s.body))
    if isinstance(s, CacheStmt):
        return 1 + sum(map(_stmt_size, s.body))
    return 1


def _loop_count(s) -> int:
    if isinstance(s, IfStmt):
        return sum(map(_loop_count, s.then)) + sum(map(_loop_count, s.els))
    if isinstance(s, ForStmt):
        return 1 + sum(map(_loop_count, s.body))
    if isinstance(s, CacheStmt):
        return sum(map(_loop_count, s.body))
    return 0


# --- textual dump --------------------------------------------------------------


def _op_str(x) -> str:
    if isinstance(x, Ref):
        return x.name
    assert isinstance(x, Const)
    v = x.value
    if isinstance(v, bool):
        return "#t" if v else "#f"
    if isinstance(v, (int, float)):
        return repr(v)
    if v is None:
        return "#void"
    return f"<obj {v!r}>"


def dump(rp: ResidualProgram) -> str:
    """One statement per line, nesting indented, stable temp numbering."""
    lines = ["residual-program"]
    if rp.params:
        lines.append("params: " + " ".join(rp.params))
    for name in sorted(rp.cells):
        d = rp.cells[name]
        if d.node is None:
            continue  # joins, locals and vectors appear at their declaration
        if d.kind == "const_bool_array":
            bits = "".join("1" if b else "0" for b in d.init)
            shown = bits if len(bits) <= 64 else f"{bits[:48]}...({len(bits)} bits)"
            lines.append(f"cell {name}: const bool[{d.length}] = {shown}")
        elif d.kind.endswith("_array"):
            lines.append(f"cell {name}: {d.kind[:-6]}[{d.length}]")
        else:
            lines.append(f"cell {name}: {d.kind} = {_op_str(Const(d.init))}")

    def emit(stmts, depth):
        pad = "  " * depth
        for s in stmts:
            if isinstance(s, Def):
                lines.append(f"{pad}{s.target} := {s.op} {' '.join(map(_op_str, s.args))}".rstrip())
            elif isinstance(s, Flip):
                lines.append(f"{pad}{s.target} := flip {_op_str(s.p)}")
            elif isinstance(s, RandomIndex):
                lines.append(f"{pad}{s.target} := random-index {_op_str(s.k)}")
            elif isinstance(s, RequirePositive):
                lines.append(f"{pad}{s.target} := require-positive {_op_str(s.arg)}")
            elif isinstance(s, SetCell):
                lines.append(f"{pad}{s.cell} <- {_op_str(s.value)}")
            elif isinstance(s, SetVec):
                lines.append(f"{pad}{s.cell}[{_op_str(s.index)}] <- {_op_str(s.value)}")
            elif isinstance(s, AllocVec):
                lines.append(f"{pad}{s.cell} := vector {' '.join(map(_op_str, s.items))}")
            elif isinstance(s, DeclCell):
                lines.append(f"{pad}decl {s.name}: {s.kind} = {_op_str(s.init)}")
            elif isinstance(s, IfStmt):
                lines.append(f"{pad}if {_op_str(s.cond)}:")
                emit(s.then, depth + 1)
                if s.els:
                    lines.append(f"{pad}else:")
                    emit(s.els, depth + 1)
            elif isinstance(s, ForStmt):
                lines.append(f"{pad}for {s.var} < {_op_str(s.bound)}:")
                emit(s.body, depth + 1)
            elif isinstance(s, CacheStmt):
                lines.append(f"{pad}{s.target} := cache {s.cache_id} keys=({' '.join(s.keys)}):")
                emit(s.body, depth + 1)
                lines.append(f"{pad}  => {_op_str(s.result)}")
            elif isinstance(s, NormalizeStmt):
                lines.append(f"{pad}normalize {s.cell}")
            elif isinstance(s, PrintStmt):
                lines.append(f"{pad}print {_op_str(s.arg)}")
            elif isinstance(s, Effect):
                lines.append(f"{pad}effect {s.op} {' '.join(map(_op_str, s.args))}")
            else:  # pragma: no cover
                raise AssertionError(f"unknown statement {s!r}")

    lines.append("body:")
    emit(rp.body, 1)
    lines.append(f"result: {_op_str(rp.result)}")
    return "\n".join(lines) + "\n"


# --- validation ----------------------------------------------------------------


class IRInvariantError(AssertionError):
    pass


def validate(rp: ResidualProgram) -> None:
    """Check the temp-SSA discipline and operand visibility."""
    assigned_temps: set[str] = set()
    cells = set(rp.cells)

    def check_operand(x, visible):
        if isinstance(x, Const):
            return
        if not isinstance(x, Ref):
            raise IRInvariantError(f"bad operand {x!r}")
        if x.name not in visible and x.name not in cells and x.name not in rp.params:
            raise IRInvariantError(f"operand {x.name} used before definition")

    def define_temp(name, visible):
        if name in assigned_temps:
            raise IRInvariantError(f"temp {name} assigned more than once")
        assigned_temps.add(name)
        visible.add(name)

    def walk(stmts, visible: set):
        for s in stmts:
            if isinstance(s, Def):
                for a in s.args:
                    check_operand(a, visible)
                define_temp(s.target, visible)
            elif isinstance(s, (Flip, RandomIndex, RequirePositive)):
                check_operand(s.p if isinstance(s, Flip) else s.k if isinstance(s, RandomIndex) else s.arg,
                              visible)
                define_temp(s.target, visible)
            elif isinstance(s, SetCell):
                if s.cell not in cells:
                    raise IRInvariantError(f"write to undeclared cell {s.cell}")
                check_operand(s.value, visible)
            elif isinstance(s, SetVec):
                if s.cell not in cells:
                    raise IRInvariantError(f"write to undeclared cell {s.cell}")
                check_operand(s.index, visible)
                check_operand(s.value, visible)
            elif isinstance(s, AllocVec):
                for a in s.items:
                    check_operand(a, visible)
                cells.add(s.cell)
            elif isinstance(s, DeclCell):
                check_operand(s.init, visible)
                cells.add(s.name)
            elif isinstance(s, IfStmt):
                check_operand(s.cond, visible)
                walk(s.then, set(visible))
                walk(s.els, set(visible))
            elif isinstance(s, ForStmt):
                check_operand(s.bound, visible)
                inner = set(visible)
                inner.add(s.var)
                walk(s.body, inner)
            elif isinstance(s, CacheStmt):
                walk(s.body, set(visible))
                define_temp(s.target, visible)
            elif isinstance(s, NormalizeStmt):
                if s.cell not in cells:
                    raise IRInvariantError(f"normalize of undeclared cell {s.cell}")
            elif isinstance(s, PrintStmt):
                check_operand(s.arg, visible)
            elif isinstance(s, Effect):
                for a in s.args:
                    check_operand(a, visible)

    visible: set = set()
    walk(rp.body, visible)
    if isinstance(rp.result, Ref):
        if rp.result.name not in assigned_temps and rp.result.name not in cells \
                and rp.result.name not in rp.params:
            raise IRInvariantError(f"result {rp.result.name} is undefined")


# --- dead-code elimination -------------------------------------------------------


def _refs_of(x, out):
    if isinstance(x, Ref):
        out.add(x.name)


def used_refs(rp: ResidualProgram) -> set:
    """Every name referenced as an operand (or key/result) anywhere."""
    used: set = set()

    def walk(stmts):
        for s in stmts:
            if isinstance(s, Def):
                for a in s.args:
                    _refs_of(a, used)
            elif isinstance(s, Flip):
                _refs_of(s.p, used)
            elif isinstance(s, RandomIndex):
                _refs_of(s.k, used)
            elif isinstance(s, RequirePositive):
                _refs_of(s.arg, used)
            elif isinstance(s, SetCell):
                _refs_of(s.value, used)
            elif isinstance(s, SetVec):
                _refs_of(s.index, used), _refs_of(s.value, used)
            elif isinstance(s, AllocVec):
                for a in s.items:
                    _refs_of(a, used)
            elif isinstance(s, DeclCell):
                _refs_of(s.init, used)
            elif isinstance(s, IfStmt):
                _refs_of(s.cond, used)
                walk(s.then), walk(s.els)
            elif isinstance(s, ForStmt):
                _refs_of(s.bound, used)
                walk(s.body)
            elif isinstance(s, CacheStmt):
                used.update(s.keys)
                _refs_of(s.result, used)
                walk(s.body)
            elif isinstance(s, PrintStmt):
                _refs_of(s.arg, used)
            elif isinstance(s, Effect):
                for a in s.args:
                    _refs_of(a, used)

    walk(rp.body)
    if isinstance(rp.result, Ref):
        used.add(rp.result.name)
    return used


def prune(body: list, live: set) -> list:
    """Drop pure temp definitions (and join declarations) nobody reads.

    `live` is seeded with externally observed names (the result, cache keys).
    Iterates to a fixpoint; effectful statements always stay.
    """
    while True:
        used: set = set(live)

        def collect(stmts):
            for s in stmts:
                if isinstance(s, Def):
                    for a in s.args:
                        _refs_of(a, used)
                elif isinstance(s, Flip):
                    _refs_of(s.p, used)
                elif isinstance(s, RandomIndex):
                    _refs_of(s.k, used)
                elif isinstance(s, RequirePositive):
                    _refs_of(s.arg, used)
                elif isinstance(s, SetCell):
                    used.add(s.cell)
                    _refs_of(s.value, used)
                elif isinstance(s, SetVec):
                    used.add(s.cell)
                    _refs_of(s.index, used)
                    _refs_of(s.value, used)
                elif isinstance(s, AllocVec):
                    for a in s.items:
                        _refs_of(a, used)
                elif isinstance(s, DeclCell):
                    _refs_of(s.init, used)
                elif isinstance(s, IfStmt):
                    _refs_of(s.cond, used)
                    collect(s.then), collect(s.els)
                elif isinstance(s, ForStmt):
                    _refs_of(s.bound, used)
                    collect(s.body)
                elif isinstance(s, CacheStmt):
                    for k in s.keys:
                        used.add(k)
                    _refs_of(s.result, used)
                    collect(s.body)
                elif isinstance(s, PrintStmt):
                    _refs_of(s.arg, used)
                elif isinstance(s, Effect):
                    for a in s.args:
                        _refs_of(a, used)

        collect(body)

        # a SetCell to a cell that is never read keeps the cell "used" above;
        # find join/local cells whose only uses are their own writes
        writes_only: set = set()

        def cell_reads(stmts, reads: set):
            for s in stmts:
                if isinstance(s, Def):
                    for a in s.args:
                        _refs_of(a, reads)
                elif isinstance(s, Flip):
                    _refs_of(s.p, reads)
                elif isinstance(s, RandomIndex):
                    _refs_of(s.k, reads)
                elif isinstance(s, RequirePositive):
                    _refs_of(s.arg, reads)
                elif isinstance(s, SetCell):
                    _refs_of(s.value, reads)
                elif isinstance(s, SetVec):
                    reads.add(s.cell)  # element writes keep vectors alive
                    _refs_of(s.index, reads)
                    _refs_of(s.value, reads)
                elif isinstance(s, AllocVec):
                    for a in s.items:
                        _refs_of(a, reads)
                elif isinstance(s, DeclCell):
                    _refs_of(s.init, reads)
                elif isinstance(s, IfStmt):
                    _refs_of(s.cond, reads)
                    cell_reads(s.then, reads), cell_reads(s.els, reads)
                elif isinstance(s, ForStmt):
                    _refs_of(s.bound, reads)
                    cell_reads(s.body, reads)
                elif isinstance(s, CacheStmt):
                    for k in s.keys:
                        reads.add(k)
                    _refs_of(s.result, reads)
                    cell_reads(s.body, reads)
                elif isinstance(s, PrintStmt):
                    _refs_of(s.arg, reads)
                elif isinstance(s, Effect):
                    for a in s.args:
                        _refs_of(a, reads)

        reads: set = set(live)
        cell_reads(body, reads)

        declared_joins: set = set()

        def find_joins(stmts):
            for s in stmts:
                if isinstance(s, DeclCell):
                    declared_joins.add(s.name)
                elif isinstance(s, IfStmt):
                    find_joins(s.then), find_joins(s.els)
                elif isinstance(s, ForStmt):
                    find_joins(s.body)
                elif isinstance(s, CacheStmt):
                    find_joins(s.body)

        find_joins(body)
        writes_only = {c for c in declared_joins if c not in reads}

        changed = False

        def rewrite(stmts):
            nonlocal changed
            out = []
            for s in stmts:
                if isinstance(s, Def) and s.target not in used:
                    changed = True
                    continue
                if isinstance(s, DeclCell) and s.name in writes_only:
                    changed = True
                    continue
                if isinstance(s, SetCell) and s.cell in writes_only:
                    changed = True
                    continue
                if isinstance(s, IfStmt):
                    s = IfStmt(s.cond, rewrite(s.then), rewrite(s.els))
                    if not s.then and not s.els:
                        changed = True
                        continue
                elif isinstance(s, ForStmt):
                    s = ForStmt(s.var, s.bound, rewrite(s.body))
                elif isinstance(s, CacheStmt):
                    s = CacheStmt(s.target, s.cache_id, s.keys, rewrite(s.body), s.result)
                out.append(s)
            return out

        body = rewrite(body)
        if not changed:
            return body


# --- canonical renaming ----------------------------------------------------------


def canonical_dump(rp: ResidualProgram) -> str:
    """Dump with temps/joins/vectors/loops/caches renumbered in trace order;
    plan cells and params keep their names. Two programs equal up to temp
    renaming produce identical canonical dumps."""
    mapping: dict[str, str] = {}
    counters = {"v": 0, "j": 0, "vec": 0, "i": 0, "c": 0, "loc": 0}

    def fresh(prefix):
        n = counters[prefix]
        counters[prefix] = n + 1
        return f"{prefix}{n}"

    def rename(name: str) -> str:
        if name in rp.params or (name in rp.cells and rp.cells[name].node is not None):
            return name
        if name not in mapping:
            for prefix in ("vec", "loc", "v", "j", "i", "c"):
                if name.startswith(prefix) and name[len(prefix):].isdigit():
                    mapping[name] = fresh(prefix)
                    break
            else:
                mapping[name] = name
        return mapping[name]

    def rn_op(x):
        return Ref(rename(x.name)) if isinstance(x, Ref) else x

    def walk(stmts):
        out = []
        for s in stmts:
            if isinstance(s, Def):
                out.append(Def(rename(s.target), s.op, [rn_op(a) for a in s.args]))
            elif isinstance(s, Flip):
                out.append(Flip(rename(s.target), rn_op(s.p)))
            elif isinstance(s, RandomIndex):
                out.append(RandomIndex(rename(s.target), rn_op(s.k)))
            elif isinstance(s, RequirePositive):
                out.append(RequirePositive(rename(s.target), rn_op(s.arg)))
            elif isinstance(s, SetCell):
                out.append(SetCell(rename(s.cell), rn_op(s.value)))
            elif isinstance(s, SetVec):
                out.append(SetVec(rename(s.cell), rn_op(s.index), rn_op(s.value)))
            elif isinstance(s, AllocVec):
                out.append(AllocVec(rename(s.cell), [rn_op(a) for a in s.items]))
            elif isinstance(s, DeclCell):
                out.append(DeclCell(rename(s.name), s.kind, rn_op(s.init)))
            elif isinstance(s, IfStmt):
                cond = rn_op(s.cond)
                out.append(IfStmt(cond, walk(s.then), walk(s.els)))
            elif isinstance(s, ForStmt):
                bound = rn_op(s.bound)
                var = rename(s.var)
                out.append(ForStmt(var, bound, walk(s.body)))
            elif isinstance(s, CacheStmt):
                body = walk(s.body)
                out.append(CacheStmt(rename(s.target), rename(s.cache_id),
                                     [rename(k) for k in s.keys], body, rn_op(s.result)))
            elif isinstance(s, NormalizeStmt):
                out.append(NormalizeStmt(rename(s.cell)))
            elif isinstance(s, PrintStmt):
                out.append(PrintStmt(rn_op(s.arg)))
            elif isinstance(s, Effect):
                out.append(Effect(s.op, [rn_op(a) for a in s.args]))
        return out

    body = walk(rp.body)
    result = rn_op(rp.result) if isinstance(rp.result, Ref) else rp.result
    cells = {}
    for name, d in rp.cells.items():
        nn = rename(name)
        cells[nn] = replace(d, name=nn)
    out = ResidualProgram(rp.params, cells, body, result, {}, {})
    return dump(out)


# --- render back to DSL source -----------------------------------------------------

_OP_TO_DSL = {
    "add": "+", "sub": "-", "mul": "*", "div": "/", "eq": "eq?", "lt": "<",
    "gt": ">", "le": "<=", "ge": ">=", "not": "not", "min": "min", "max": "max",
    "abs": "abs", "neg": "-", "car": "car", "cdr": "cdr", "cons": "cons",
    "nullp": "null?", "second": "second", "member": "member", "length": "length",
    "listref": "list-ref", "list": "list", "parents": "parents",
    "children": "children", "cpt": "CPT", "evidencep": "evidence?",
    "nodes": "nodes", "arraylength": "array-length",
}


def to_source(rp: ResidualProgram) -> str:
    """Render a residual program as annotation-free DSL source.

    Model-plan cells render as the model primitives that produced them, so
    specializing the result against the same model reproduces the trace (up
    to temp renaming). Used by the idempotence property and for debugging.
    """
    cell_node = {name: d.node_index for name, d in rp.cells.items() if d.node}

    def node_src(idx: int) -> str:
        return f"(list-ref (nodes net) {idx})"

    def op_src(x) -> str:
        if isinstance(x, Ref):
            if x.name in cell_node:
                return f"(value {node_src(cell_node[x.name])})"
            return x.name
        v = x.value
        if isinstance(v, bool):
            return "#t" if v else "#f"
        if v is None:
            return "(begin)"
        if isinstance(v, (int, float)):
            return repr(v)
        from .model import Node
        if isinstance(v, Node):
            return f"(list-ref (nodes net) {v.index})"
        if isinstance(v, list):
            return "(list " + " ".join(op_src(Const(e)) for e in v) + ")"
        raise IRInvariantError(f"cannot render constant {v!r}")

    def read_src(s: Def) -> str:
        cell = s.args[0].name
        node = cell_node.get(cell)
        if s.op == "read":
            return f"(value {node_src(node)})" if node is not None else cell
        idx = op_src(s.args[1])
        if node is not None:
            return f"(value {node_src(node)} {idx})"
        return f"(vector-ref {cell} {idx})"

    def stmt_src(s, pad: str) -> str:
        if isinstance(s, Def):
            if s.op in ("read", "readvec"):
                return f"{pad}(define {s.target} {read_src(s)})"
            body = " ".join(op_src(a) for a in s.args)
            return f"{pad}(define {s.target} ({_OP_TO_DSL[s.op]} {body}))"
        if isinstance(s, Flip):
            return f"{pad}(define {s.target} (flip {op_src(s.p)}))"
        if isinstance(s, RandomIndex):
            return f"{pad}(define {s.target} (random-index {op_src(s.k)}))"
        if isinstance(s, RequirePositive):
            return f"{pad}(define {s.target} (require-positive {op_src(s.arg)}))"
        if isinstance(s, SetCell):
            node = cell_node.get(s.cell)
            if node is not None:
                return f"{pad}(set-value! {node_src(node)} {op_src(s.value)})"
            return f"{pad}(set! {s.cell} {op_src(s.value)})"
        if isinstance(s, SetVec):
            node = cell_node.get(s.cell)
            if node is not None:
                return f"{pad}(set-value! {node_src(node)} {op_src(s.value)} {op_src(s.index)})"
            return f"{pad}(vector-set! {s.cell} {op_src(s.index)} {op_src(s.value)})"
        if isinstance(s, AllocVec):
            return f"{pad}(define {s.cell} (vector {' '.join(op_src(a) for a in s.items)}))"
        if isinstance(s, DeclCell):
            return f"{pad}(define {s.name} {op_src(s.init)})"
        if isinstance(s, IfStmt):
            then = block_src(s.then, pad + "  ")
            els = block_src(s.els, pad + "  ")
            return f"{pad}(if {op_src(s.cond)}\n{then}\n{els})"
        if isinstance(s, ForStmt):
            body = "\n".join(stmt_or_join_src(x, pad + "  ") for x in fuse(s.body))
            return f"{pad}(for ([{s.var} {op_src(s.bound)}])\n{body})"
        if isinstance(s, CacheStmt):
            inner = [stmt_or_join_src(x, pad + "    ") for x in fuse(s.body)]
            inner.append(f"{pad}    {op_src(s.result)}")
            return f"{pad}(define {s.target} (cache (begin\n" + "\n".join(inner) + ")))"
        if isinstance(s, NormalizeStmt):
            return f"{pad}(normalize {s.cell})"
        if isinstance(s, PrintStmt):
            return f"{pad}(print {op_src(s.arg)})"
        raise IRInvariantError(f"cannot render statement {s!r}")

    def is_join(decl, nxt) -> bool:
        return (isinstance(decl, DeclCell) and isinstance(nxt, IfStmt)
                and nxt.then and nxt.els
                and isinstance(nxt.then[-1], SetCell) and nxt.then[-1].cell == decl.name
                and isinstance(nxt.els[-1], SetCell) and nxt.els[-1].cell == decl.name)

    def branch_value_src(stmts, pad: str) -> str:
        body = [stmt_or_join_src(s, pad + "  ") for s in fuse(stmts[:-1])]
        body.append(f"{pad}  {op_src(stmts[-1].value)}")
        return f"{pad}(begin\n" + "\n".join(body) + ")"

    def fuse(stmts) -> list:
        """Fold decl-then-if join pairs into one value-position if."""
        out = []
        i = 0
        while i < len(stmts):
            s = stmts[i]
            if i + 1 < len(stmts) and is_join(s, stmts[i + 1]):
                out.append(("join", s, stmts[i + 1]))
                i += 2
            else:
                out.append(s)
                i += 1
        return out

    def stmt_or_join_src(s, pad: str) -> str:
        if isinstance(s, tuple) and s[0] == "join":
            _, decl, iff = s
            then = branch_value_src(iff.then, pad + "  ")
            els = branch_value_src(iff.els, pad + "  ")
            return f"{pad}(define {decl.name} (if {op_src(iff.cond)}\n{then}\n{els}))"
        return stmt_src(s, pad)

    def block_src(stmts, pad: str) -> str:
        if not stmts:
            return f"{pad}(begin)"
        return (f"{pad}(begin\n"
                + "\n".join(stmt_or_join_src(s, pad + "  ") for s in fuse(stmts)) + ")")

    lines = [stmt_or_join_src(s, "") for s in fuse(rp.body)]
    lines.append(op_src(rp.result) if not (isinstance(rp.result, Const) and rp.result.value is None)
                 else "(begin)")
    return "(begin\n" + "\n".join(lines) + ")\n"
