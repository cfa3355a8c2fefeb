"""Concrete semantics of the pure primitives.

Both evaluators apply these when every argument is a plain value; the
partial evaluator additionally knows which IR opcode each one lifts to.
Model-structure reads (parents, CPT, ...) live here because they are pure:
the graph never changes after construction.
"""

from __future__ import annotations

from .env import Vec
from .errors import DslRuntimeError
from .model import BayesNet, Node, NodeRef


def _num(x, who: str):
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise DslRuntimeError(f"{who}: expected a number, got {x!r}")
    return x


def _listy(x, who: str):
    if not isinstance(x, list):
        raise DslRuntimeError(f"{who}: expected a list, got {x!r}")
    return x


def _add(*args):
    total = 0
    for a in args:
        total = total + _num(a, "+")
    return total


def _sub(a, b=None):
    if b is None:
        return -_num(a, "-")
    return _num(a, "-") - _num(b, "-")


def _mul(*args):
    total = 1
    for a in args:
        total = total * _num(a, "*")
    return total


def _div(a, b):
    _num(a, "/"), _num(b, "/")
    if b == 0:
        raise DslRuntimeError("division by zero")
    return a / b


def _min(a, b):
    _num(a, "min"), _num(b, "min")
    return b if b < a else a


def _max(a, b):
    _num(a, "max"), _num(b, "max")
    return b if b > a else a


def _eqv(a, b):
    if isinstance(a, (Node, NodeRef)) or isinstance(b, (Node, NodeRef)):
        return a is b
    return a == b


def _member(x, lst):
    for item in _listy(lst, "member"):
        if _eqv(x, item):
            return True
    return False


def _car(lst):
    lst = _listy(lst, "car")
    if not lst:
        raise DslRuntimeError("car of empty list")
    return lst[0]


def _cdr(lst):
    lst = _listy(lst, "cdr")
    if not lst:
        raise DslRuntimeError("cdr of empty list")
    return lst[1:]


def _list_ref(lst, i):
    lst = _listy(lst, "list-ref")
    if not isinstance(i, int) or isinstance(i, bool) or not 0 <= i < len(lst):
        raise DslRuntimeError(f"list-ref: bad index {i!r} for list of length {len(lst)}")
    return lst[i]


def _node(x, who: str) -> Node:
    if isinstance(x, NodeRef):
        return x.node
    if not isinstance(x, Node):
        raise DslRuntimeError(f"{who}: expected a node, got {x!r}")
    return x


# name -> (fn, ir opcode or None when the op has no residual form)
PURE: dict[str, tuple] = {
    "+": (_add, "add"),
    "-": (_sub, "sub"),
    "*": (_mul, "mul"),
    "/": (_div, "div"),
    "=": (lambda a, b: _num(a, "=") == _num(b, "="), "eq"),
    "<": (lambda a, b: _num(a, "<") < _num(b, "<"), "lt"),
    ">": (lambda a, b: _num(a, ">") > _num(b, ">"), "gt"),
    "<=": (lambda a, b: _num(a, "<=") <= _num(b, "<="), "le"),
    ">=": (lambda a, b: _num(a, ">=") >= _num(b, ">="), "ge"),
    "eq?": (_eqv, "eq"),
    "not": (lambda a: a is False, "not"),
    "min": (_min, "min"),
    "max": (_max, "max"),
    "abs": (lambda a: abs(_num(a, "abs")), "abs"),
    "car": (_car, "car"),
    "cdr": (_cdr, "cdr"),
    "cons": (lambda a, d: [a] + _listy(d, "cons"), "cons"),
    "null?": (lambda a: _listy(a, "null?") == [], "nullp"),
    "first": (_car, "car"),
    "second": (lambda lst: _list_ref(lst, 1), "second"),
    "member": (_member, "member"),
    "length": (lambda lst: len(_listy(lst, "length")), "length"),
    "list-ref": (_list_ref, "listref"),
    "list": (lambda *a: list(a), "list"),
    # model structure (fixed after construction)
    "parents": (lambda n: list(_node(n, "parents").parents), "parents"),
    "children": (lambda n: list(_node(n, "children").children), "children"),
    "CPT": (lambda n: _node(n, "CPT").cpt, "cpt"),
    "evidence?": (lambda n: _node(n, "evidence?").is_evidence, "evidencep"),
    "nodes": (lambda net: _nodes(net), "nodes"),
    "array-length": (lambda n: _node(n, "array-length").length or 0, "arraylength"),
}


def _nodes(net):
    if not isinstance(net, BayesNet):
        raise DslRuntimeError(f"nodes: expected a model, got {net!r}")
    return list(net.nodes)


# evaluator-level names (effectful, mutable, or higher-order)
SPECIAL_PRIMS = {
    "flip", "random-index", "require-positive", "print",
    "value", "set-value!",
    "vector", "vector-ref", "vector-set!",
    "normalize", "map", "foldl",
}

ALL_PRIMITIVES = set(PURE) | SPECIAL_PRIMS


def check_bool(x, who: str) -> bool:
    if not isinstance(x, bool):
        raise DslRuntimeError(f"{who}: expected a boolean, got {x!r}")
    return x


def normalize_vec(items: list) -> list:
    """Divide by the running left-to-right sum; all-zero mass is an error."""
    s = 0.0
    for x in items:
        s += _num(x, "normalize")
    if s == 0.0:
        raise DslRuntimeError("normalize: weight vector sums to zero (no accepted mass)")
    return [x / s for x in items]


def vec_of(x, who: str) -> Vec:
    if not isinstance(x, Vec):
        raise DslRuntimeError(f"{who}: expected a vector, got {x!r}")
    return x
