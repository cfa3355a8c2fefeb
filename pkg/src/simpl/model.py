"""Bayes-net model structure: parser, exact oracle, self-specialization plan.

A model is a DAG of boolean nodes. Each node holds either one boolean value
(a scalar slot) or a fixed-length boolean array; its CPT is a nested list
whose depth equals the parent count, with `true` selecting the first element
at each level. Structure size is linear in the declaration count, never in
array lengths.

Model files (`.bn`) are S-expression declarations::

    (node A (parents B E) (cpt ((0.95 0.94) (0.29 0.001))))
    (array Burglary 1000)
    (evidence J #t)            ; broadcast for array nodes
    (evidence Alarm (#t #f ...)) ; or one value per index
    (query B)                  ; optionally (query Burglary 17)
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field

from .errors import DslRuntimeError, ModelError
from .sexpr import SAtom, SList, Symbol, read_all, to_datum

ORACLE_STATE_LIMIT = 1 << 25


class Node:
    """One structural node; value slots are the only mutable state."""

    __slots__ = ("name", "parents", "children", "cpt", "length", "evidence",
                 "value", "values", "index")

    def __init__(self, name: str, parents: list["Node"], cpt, length: int | None):
        self.name = name
        self.parents = parents
        self.children: list[Node] = []
        self.cpt = cpt
        self.length = length  # None for scalar slots
        self.evidence = None  # bool, or list[bool] for array nodes
        self.value = False
        self.values: list[bool] | None = [False] * length if length else None
        self.index = -1  # topological position, set by BayesNet

    @property
    def is_array(self) -> bool:
        return self.length is not None

    @property
    def is_evidence(self) -> bool:
        return self.evidence is not None

    def get(self, i: int | None = None) -> bool:
        if self.is_array:
            if i is None:
                raise DslRuntimeError(f"node {self.name} holds an array; an index is required")
            if not 0 <= i < self.length:
                raise DslRuntimeError(f"index {i} out of range for {self.name}[{self.length}]")
            return self.evidence[i] if self.is_evidence else self.values[i]
        if i is not None:
            raise DslRuntimeError(f"array operation on scalar node {self.name}")
        return self.evidence if self.is_evidence else self.value

    def set(self, v: bool, i: int | None = None) -> None:
        if self.is_evidence:
            raise DslRuntimeError(f"cannot write to evidence node {self.name}")
        if self.is_array:
            if i is None:
                raise DslRuntimeError(f"node {self.name} holds an array; an index is required")
            if not 0 <= i < self.length:
                raise DslRuntimeError(f"index {i} out of range for {self.name}[{self.length}]")
            self.values[i] = v
        else:
            if i is not None:
                raise DslRuntimeError(f"array operation on scalar node {self.name}")
            self.value = v

    def reset(self) -> None:
        if self.is_array:
            self.values = [False] * self.length
        else:
            self.value = False

    def __repr__(self) -> str:
        return f"<node {self.name}>"


@dataclass(frozen=True)
class NodeRef:
    """A query handle: a node plus an optional array index."""

    node: Node
    index: int | None = None

    def label(self) -> str:
        return self.node.name if self.index is None else f"{self.node.name}[{self.index}]"


class BayesNet:
    def __init__(self, nodes: list[Node], query: NodeRef, evidence: list[Node], source: str = ""):
        self.nodes = nodes
        self.query = query
        self.evidence = evidence
        self.source = source
        self.by_name = {n.name: n for n in nodes}
        for i, n in enumerate(nodes):
            n.index = i

    def __iter__(self):
        return iter(self.nodes)

    def reset_values(self) -> None:
        for n in self.nodes:
            if not n.is_evidence:
                n.reset()

    def clone(self) -> "BayesNet":
        """Fresh value slots; required when running samplers concurrently."""
        return parse_model(self.source) if self.source else self

    def __repr__(self) -> str:
        return f"<bayesnet {len(self.nodes)} nodes, query {self.query.label()}>"


# --- parsing -----------------------------------------------------------------

def _cpt_shape_check(cpt, depth: int, name: str, pos) -> None:
    if depth == 0:
        if isinstance(cpt, bool) or not isinstance(cpt, (int, float)):
            raise ModelError(f"CPT for {name}: expected a probability, got {cpt!r}", pos)
        if not 0.0 <= float(cpt) <= 1.0:
            raise ModelError(f"CPT for {name}: probability {cpt} outside [0, 1]", pos)
        return
    if not isinstance(cpt, list) or len(cpt) != 2:
        raise ModelError(f"CPT for {name}: expected a 2-entry list at depth {depth}", pos)
    for sub in cpt:
        _cpt_shape_check(sub, depth - 1, name, pos)


def parse_model(text: str) -> BayesNet:
    """Parse `.bn` source into a topologically sorted net."""
    decls = read_all(text)
    raw_nodes: dict[str, tuple] = {}
    arrays: dict[str, int] = {}
    evidence_decls: list[tuple[str, object, object]] = []
    query_decl = None

    for d in decls:
        if not (isinstance(d, SList) and d.items and isinstance(d.items[0], SAtom)):
            raise ModelError("expected a declaration list", getattr(d, "pos", (1, 1)))
        head = d.items[0].value
        if head == Symbol("node"):
            if len(d.items) != 4:
                raise ModelError("malformed node declaration", d.pos)
            name = str(d.items[1].value)
            if name in raw_nodes:
                raise ModelError(f"duplicate node {name}", d.pos)
            par_sx, cpt_sx = d.items[2], d.items[3]
            if not (isinstance(par_sx, SList) and par_sx.items and par_sx.items[0].value == Symbol("parents")):
                raise ModelError(f"node {name}: expected (parents ...)", d.pos)
            if not (isinstance(cpt_sx, SList) and len(cpt_sx.items) == 2 and cpt_sx.items[0].value == Symbol("cpt")):
                raise ModelError(f"node {name}: expected (cpt ...)", d.pos)
            parents = [str(p.value) for p in par_sx.items[1:]]
            cpt = to_datum(cpt_sx.items[1])
            raw_nodes[name] = (parents, cpt, d.pos)
        elif head == Symbol("array"):
            if len(d.items) != 3 or not isinstance(d.items[2].value, int):
                raise ModelError("malformed array declaration", d.pos)
            arrays[str(d.items[1].value)] = d.items[2].value
        elif head == Symbol("evidence"):
            if len(d.items) != 3:
                raise ModelError("malformed evidence declaration", d.pos)
            evidence_decls.append((str(d.items[1].value), to_datum(d.items[2]), d.pos))
        elif head == Symbol("query"):
            if len(d.items) not in (2, 3):
                raise ModelError("malformed query declaration", d.pos)
            idx = d.items[2].value if len(d.items) == 3 else None
            query_decl = (str(d.items[1].value), idx, d.pos)
        else:
            raise ModelError(f"unknown declaration {head!r}", d.pos)

    for name in arrays:
        if name not in raw_nodes:
            raise ModelError(f"array declaration for unknown node {name}")

    # topological order with declaration-order tiebreak
    decl_order = list(raw_nodes)
    for name, (parents, _, pos) in raw_nodes.items():
        for p in parents:
            if p not in raw_nodes:
                raise ModelError(f"node {name} references unknown parent {p}", pos)
    order: list[str] = []
    placed: set[str] = set()
    remaining = list(decl_order)
    while remaining:
        progressed = False
        for name in list(remaining):
            if all(p in placed for p in raw_nodes[name][0]):
                order.append(name)
                placed.add(name)
                remaining.remove(name)
                progressed = True
        if not progressed:
            raise ModelError(f"cycle detected among nodes {sorted(remaining)}")

    nodes: dict[str, Node] = {}
    for name in order:
        parents_n, cpt, pos = raw_nodes[name]
        parent_nodes = [nodes[p] for p in parents_n]
        _cpt_shape_check(cpt, len(parent_nodes), name, pos)
        node = Node(name, parent_nodes, cpt, arrays.get(name))
        nodes[name] = node
    for node in nodes.values():
        for p in node.parents:
            p.children.append(node)
    # deterministic children order: topological position
    for node in nodes.values():
        node.children.sort(key=lambda c: order.index(c.name))

    # slot compatibility: array nodes take scalar or same-length array parents;
    # scalar nodes take scalar parents only (an element index would be ambiguous)
    for node in nodes.values():
        for p in node.parents:
            if node.is_array and p.is_array and p.length != node.length:
                raise ModelError(f"array node {node.name} has parent {p.name} of different length")
            if not node.is_array and p.is_array:
                raise ModelError(f"scalar node {node.name} cannot have array parent {p.name}")

    evidence_nodes: list[Node] = []
    for name, val, pos in evidence_decls:
        if name not in nodes:
            raise ModelError(f"evidence for unknown node {name}", pos)
        node = nodes[name]
        if node.is_evidence:
            raise ModelError(f"duplicate evidence for {name}", pos)
        if node.is_array:
            if isinstance(val, bool):
                node.evidence = [val] * node.length
            elif isinstance(val, list) and all(isinstance(v, bool) for v in val):
                if len(val) != node.length:
                    raise ModelError(f"evidence for {name}: {len(val)} values for length {node.length}", pos)
                node.evidence = list(val)
            else:
                raise ModelError(f"evidence for array node {name} must be a boolean or a boolean list", pos)
        else:
            if not isinstance(val, bool):
                raise ModelError(f"evidence for {name} must be a boolean", pos)
            node.evidence = val
        evidence_nodes.append(node)
    evidence_nodes.sort(key=lambda n: order.index(n.name))

    if query_decl is None:
        raise ModelError("model has no query declaration")
    qname, qidx, qpos = query_decl
    if qname not in nodes:
        raise ModelError(f"query references unknown node {qname}", qpos)
    qnode = nodes[qname]
    if qnode.is_array:
        if qidx is None:
            raise ModelError(f"query on array node {qname} needs an index", qpos)
        if not 0 <= qidx < qnode.length:
            raise ModelError(f"query index {qidx} out of range for {qname}[{qnode.length}]", qpos)
    elif qidx is not None:
        raise ModelError(f"query index given for scalar node {qname}", qpos)

    return BayesNet([nodes[n] for n in order], NodeRef(qnode, qidx), evidence_nodes, source=text)


# --- exact oracle ------------------------------------------------------------

def _cpt_select(cpt, parent_values: list[bool]) -> float:
    for v in parent_values:
        cpt = cpt[0] if v else cpt[1]
    return float(cpt)


def exact_posterior(net: BayesNet, query: NodeRef | None = None) -> float:
    """P(query = true | evidence) by exhaustive enumeration.

    Scalar nets are enumerated directly (refusing state spaces beyond
    2^25). Nets with array nodes are handled exactly by factorization:
    scalar nodes are enumerated, and conditioned on them the array indices
    are independent, so each index contributes a small product-sum.
    """
    query = query or net.query
    if any(n.is_array for n in net.nodes):
        return _exact_posterior_arrays(net, query)

    free = [n for n in net.nodes if not n.is_evidence]
    if 2 ** len(free) > ORACLE_STATE_LIMIT:
        raise DslRuntimeError(
            f"oracle refuses state space 2^{len(free)} > 2^25; use sampling instead")

    def joint(assign: dict[Node, bool]) -> float:
        p = 1.0
        for n in net.nodes:
            val = assign[n] if n in assign else n.evidence
            base = _cpt_select(n.cpt, [assign[q] if q in assign else q.evidence for q in n.parents])
            p *= base if val else 1.0 - base
        return p

    num = 0.0
    den = 0.0
    for bits in itertools.product([True, False], repeat=len(free)):
        assign = dict(zip(free, bits))
        p = joint(assign)
        den += p
        qv = assign[query.node] if query.node in assign else query.node.evidence
        if qv:
            num += p
    if den == 0.0:
        raise DslRuntimeError("evidence has zero probability under the model")
    return num / den


def _exact_posterior_arrays(net: BayesNet, query: NodeRef) -> float:
    scalars = [n for n in net.nodes if not n.is_array]
    array_nodes = [n for n in net.nodes if n.is_array]
    free_scalars = [n for n in scalars if not n.is_evidence]
    if 2 ** len(free_scalars) > ORACLE_STATE_LIMIT:
        raise DslRuntimeError("oracle refuses state space beyond 2^25")
    length = array_nodes[0].length
    if any(n.length != length for n in array_nodes):
        raise DslRuntimeError("oracle requires equal-length array nodes")

    def index_factor(i: int, sval: dict[Node, bool], constraint: dict[Node, bool]) -> float:
        """Sum over free array-node values at index i of the per-index product."""
        free = [n for n in array_nodes if not n.is_evidence and n not in constraint]
        total = 0.0
        for bits in itertools.product([True, False], repeat=len(free)):
            assign = dict(zip(free, bits))
            assign.update(constraint)
            p = 1.0
            for n in array_nodes:
                val = assign[n] if n in assign else n.evidence[i]
                pv = []
                for q in n.parents:
                    if q.is_array:
                        pv.append(assign[q] if q in assign else q.evidence[i])
                    else:
                        pv.append(sval[q] if q in sval else q.evidence)
                base = _cpt_select(n.cpt, pv)
                p *= base if val else 1.0 - base
            total += p
        return total

    def scalar_weight(sval: dict[Node, bool]) -> float:
        p = 1.0
        for n in scalars:
            val = sval[n] if n in sval else n.evidence
            base = _cpt_select(n.cpt, [sval[q] if q in sval else q.evidence for q in n.parents])
            p *= base if val else 1.0 - base
        return p

    num = 0.0
    den = 0.0
    for bits in itertools.product([True, False], repeat=len(free_scalars)):
        sval = dict(zip(free_scalars, bits))
        w = scalar_weight(sval)
        if w == 0.0:
            continue
        prod = 1.0
        for i in range(length):
            prod *= index_factor(i, sval, {})
        den += w * prod
        if query.node.is_array:
            i = query.index
            base = index_factor(i, sval, {})
            if base == 0.0:
                continue
            with_q = index_factor(i, sval, {query.node: True})
            num += w * prod * (with_q / base)
        else:
            qv = sval[query.node] if query.node in sval else query.node.evidence
            if qv:
                num += w * prod
    if den == 0.0:
        raise DslRuntimeError("evidence has zero probability under the model")
    return num / den


def oracle_record(net: BayesNet) -> dict:
    """JSON-exportable oracle result for the net's own query."""
    ev = {}
    for n in net.evidence:
        ev[n.name] = n.evidence if not n.is_array else {
            "broadcast": n.evidence[0]} if len(set(n.evidence)) == 1 else list(n.evidence)
    return {"query": net.query.label(), "evidence": ev, "probability": exact_posterior(net)}


def dump_oracle(net: BayesNet) -> str:
    return json.dumps(oracle_record(net))


# --- self-specialization -----------------------------------------------------

VALUE_READ = "value-read"
VALUE_WRITE = "value-write"


@dataclass(frozen=True)
class PlanEntry:
    kind: str  # "const" | "cell" | "array" | "const-array"
    name: str  # residual cell name ("" for inlined constants)
    const: object = None  # bool for "const", tuple[bool] for "const-array"
    length: int = 0


@dataclass
class ModelCodePlan:
    """Residual representation chosen for each node.

    Evidence nodes become constants (or a read-only constant array when the
    per-index values differ); everything else becomes one boolean variable or
    one boolean array. No graph structure survives.
    """

    entries: dict[str, PlanEntry] = field(default_factory=dict)
    required: frozenset = frozenset()

    def entry(self, node: Node) -> PlanEntry:
        return self.entries[node.name]


def _cell_name(name: str) -> str:
    safe = "".join(c if c.isalnum() else "_" for c in name)
    return f"n_{safe}"


def specialize_model(net: BayesNet, required: set[str] | None = None) -> ModelCodePlan:
    """Pick the minimal runtime representation for each node.

    `required` is the set of runtime operations the residual needs, a subset
    of {value-read, value-write}. The plan size is O(structural node count),
    independent of array lengths.
    """
    required = frozenset(required if required is not None else {VALUE_READ, VALUE_WRITE})
    bad = required - {VALUE_READ, VALUE_WRITE}
    if bad:
        raise DslRuntimeError(f"unknown model operations {sorted(bad)}")
    plan = ModelCodePlan(required=required)
    for n in net.nodes:
        if n.is_evidence:
            if n.is_array and len(set(n.evidence)) > 1:
                plan.entries[n.name] = PlanEntry("const-array", "ev_" + _cell_name(n.name)[2:],
                                                 tuple(n.evidence), n.length)
            elif n.is_array:
                plan.entries[n.name] = PlanEntry("const", "", n.evidence[0], n.length)
            else:
                plan.entries[n.name] = PlanEntry("const", "", n.evidence)
        elif n.is_array:
            plan.entries[n.name] = PlanEntry("array", _cell_name(n.name), None, n.length)
        else:
            plan.entries[n.name] = PlanEntry("cell", _cell_name(n.name))
    return plan
