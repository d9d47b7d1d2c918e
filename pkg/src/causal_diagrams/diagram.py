"""Network diagrams: single-output boxes wired with implicit copies.

A wire may feed any number of node inputs and may be listed among the
outputs; that fan-out stands for a copy map.  A wire nobody reads is
discarded.  Extended (non-strict) diagrams additionally allow constant
nodes: sharp states, sharp effects and generic named states/effects.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

import numpy as np

from .contraction import contract
from .graph import Dag, GraphError, OpenDag, topological_order
from .semantics import FinObject, Morphism

MECHANISM = "mechanism"
SHARP_STATE = "sharp_state"
SHARP_EFFECT = "sharp_effect"
GENERIC_STATE = "generic_state"
GENERIC_EFFECT = "generic_effect"
NODE_KINDS = (MECHANISM, SHARP_STATE, SHARP_EFFECT, GENERIC_STATE, GENERIC_EFFECT)
CONSTANT_KINDS = (SHARP_STATE, SHARP_EFFECT, GENERIC_STATE, GENERIC_EFFECT)

RULES = ("discard_fallthrough", "drop_discarded_copy_leg", "copy_through_deterministic",
         "sharp_effect_split", "copy_out_discard", "absorb_noise_into_channel")


class DiagramError(ValueError):
    pass


@dataclass(frozen=True)
class Node:
    """One box of a diagram.

    ``box`` names the interpretation entry for mechanisms and generic
    constants; ``value`` is the point for sharp constants.
    """

    id: str
    kind: str
    box: str | None = None
    inputs: tuple = ()
    output: str | None = None
    value: tuple | None = None

    def __post_init__(self):
        if self.kind not in NODE_KINDS:
            raise DiagramError(f"unknown node kind {self.kind!r}")
        object.__setattr__(self, "inputs", tuple(self.inputs))
        if self.value is not None:
            object.__setattr__(self, "value", tuple(int(v) for v in self.value))
        has_out = self.output is not None
        if self.kind in (SHARP_EFFECT, GENERIC_EFFECT) and has_out:
            raise DiagramError(f"effect node {self.id} cannot have an output")
        if self.kind in (MECHANISM, SHARP_STATE, GENERIC_STATE) and not has_out:
            raise DiagramError(f"node {self.id} needs an output wire")
        if self.kind in (SHARP_STATE, GENERIC_STATE) and self.inputs:
            raise DiagramError(f"state node {self.id} cannot have inputs")
        if self.kind in (SHARP_STATE, SHARP_EFFECT) and self.value is None:
            raise DiagramError(f"sharp node {self.id} needs a value")


@dataclass(frozen=True)
class Derivation:
    """A box computed from others: ``box = f ∘ (id ⊗ noise)`` at ``position``."""

    box: str
    mechanism: str
    noise: str
    position: int


@dataclass(frozen=True)
class NetworkDiagram:
    """Syntax of a (possibly open, possibly extended) network diagram.

    Parameters
    ----------
    wires : dict
        Wire label to cardinality.
    nodes : tuple of Node
    inputs, outputs : tuple of str
        Open input wires and exposed output wires.  Outputs may repeat a
        wire in extended mode; ``out_names`` then keeps the exposed atom
        names distinct.
    types : dict
        Wire label to variable name (defaults to the label).
    strict : bool
        Pure network diagram: mechanisms only, each output listed once.
    derived : tuple of Derivation
        Boxes introduced by noise absorption, evaluated from their parts.
    """

    wires: dict
    nodes: tuple = ()
    inputs: tuple = ()
    outputs: tuple = ()
    types: dict = field(default_factory=dict)
    strict: bool = True
    out_names: tuple | None = None
    derived: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "wires", {str(k): int(v) for k, v in dict(self.wires).items()})
        object.__setattr__(self, "nodes", tuple(self.nodes))
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        types = {w: self.wires_type_default(w) for w in self.wires}
        types.update({k: v for k, v in dict(self.types).items() if k in self.wires})
        object.__setattr__(self, "types", types)
        names = tuple(self.outputs) if self.out_names is None else tuple(self.out_names)
        if len(names) != len(self.outputs):
            raise DiagramError("out_names must match outputs")
        object.__setattr__(self, "out_names", names)
        object.__setattr__(self, "derived", tuple(self.derived))

    @staticmethod
    def wires_type_default(label: str) -> str:
        return label.split("#", 1)[0]

    # structure ----------------------------------------------------------
    def node(self, node_id: str) -> Node:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(f"no node {node_id!r}")

    def producers(self) -> dict:
        out = {}
        for n in self.nodes:
            if n.output is not None:
                out.setdefault(n.output, []).append(n.id)
        for w in self.inputs:
            out.setdefault(w, []).append(None)
        return out

    def producer(self, wire: str) -> Node | None:
        for n in self.nodes:
            if n.output == wire:
                return n
        return None

    def consumers(self, wire: str) -> list:
        """``(node_id, position)`` pairs reading ``wire``."""
        return [(n.id, k) for n in self.nodes for k, w in enumerate(n.inputs) if w == wire]

    def uses(self, wire: str) -> int:
        return len(self.consumers(wire)) + sum(1 for o in self.outputs if o == wire)

    def wire_object(self, wires: Iterable[str]) -> FinObject:
        return FinObject(tuple((w, self.wires[w]) for w in wires))

    def boxes(self) -> list:
        return sorted(n.box for n in self.nodes if n.kind == MECHANISM)

    def with_changes(self, **kw) -> "NetworkDiagram":
        return replace(self, **kw)

    def fresh_label(self, base: str) -> str:
        k = 1
        label = base
        while label in self.wires:
            label = f"{base}~{k}"
            k += 1
        return label

    def fresh_node_id(self, base: str) -> str:
        ids = {n.id for n in self.nodes}
        k = 1
        nid = base
        while nid in ids:
            nid = f"{base}~{k}"
            k += 1
        return nid


class Interpretation(dict):
    """Box name to :class:`Morphism` (positional domain in input order)."""

    def resolve(self, diagram: NetworkDiagram, box: str) -> Morphism:
        if box in self:
            return self[box]
        for d in diagram.derived:
            if d.box == box:
                return absorbed_box(self.resolve(diagram, d.mechanism),
                                    self.resolve(diagram, d.noise), d.position)
        raise DiagramError(f"missing interpretation for box {box!r}")


def absorbed_box(mech: Morphism, noise: Morphism, position: int) -> Morphism:
    """Plug the state ``noise`` into input ``position`` of ``mech``."""
    arr = np.tensordot(mech.array, noise.array, axes=([position], [0]))
    rest_dom = [a for k, a in enumerate(mech.dom.atoms) if k != position]
    return Morphism(FinObject(tuple(rest_dom)), mech.cod, arr, check=False)


# validation -------------------------------------------------------------------

@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    problems: tuple = ()

    def __bool__(self):
        return self.ok


def _wire_graph(d: NetworkDiagram) -> frozenset:
    edges = set()
    for n in d.nodes:
        if n.output is not None:
            for w in n.inputs:
                if w in d.wires and n.output in d.wires:
                    edges.add((w, n.output))
    return frozenset(edges)


def validate(d: NetworkDiagram, strict: bool | None = None) -> ValidationReport:
    strict = d.strict if strict is None else strict
    problems = []
    prods = d.producers()
    for w, ps in prods.items():
        if len(ps) > 1:
            problems.append(f"multiple producers for wire {w!r}")
        if w not in d.wires:
            problems.append(f"wire {w!r} has no declared cardinality")
    ids = [n.id for n in d.nodes]
    if len(set(ids)) != len(ids):
        problems.append("duplicate node ids")
    for n in d.nodes:
        for w in n.inputs:
            if w not in prods:
                problems.append(f"wire {w!r} read by {n.id} is never produced")
        if strict and len(set(n.inputs)) != len(n.inputs):
            problems.append(f"node {n.id} reads a wire twice")
        if strict and n.kind != MECHANISM:
            problems.append(f"constant node {n.id} in a strict diagram")
    for w in d.outputs:
        if w not in prods:
            problems.append(f"output wire {w!r} is never produced")
    if strict and len(set(d.outputs)) != len(d.outputs) and d.out_names == d.outputs:
        problems.append("a wire appears among the outputs more than once")
    if len(set(d.out_names)) != len(d.out_names):
        problems.append("output names are not distinct")
    if len(set(d.inputs)) != len(d.inputs):
        problems.append("a wire appears among the inputs more than once")
    edges = _wire_graph(d)
    try:
        topological_order(_SimpleGraph(tuple(d.wires), edges))
    except GraphError:
        problems.append("wiring is not acyclic")
    return ValidationReport(not problems, tuple(problems))


@dataclass(frozen=True)
class _SimpleGraph:
    vertices: tuple
    edges: frozenset


# DAG correspondence ------------------------------------------------------------

def diagram_from_dag(g: Dag, inputs: Iterable = (), outputs: Iterable = (),
                     cards: Mapping | None = None,
                     parent_order: Mapping | None = None) -> NetworkDiagram:
    """One box ``c_X`` per non-input vertex, fed by the vertex's parents.

    Parents are read in sorted order unless ``parent_order`` says otherwise.
    """
    inputs, outputs = tuple(inputs), tuple(outputs)
    OpenDag(g, inputs, outputs)
    cards = dict(cards or {})
    wires = {v: cards.get(v, 2) for v in g.vertices}
    nodes = []
    inset = set(inputs)
    for v in g.vertices:
        if v in inset:
            continue
        pa = tuple(parent_order[v]) if parent_order and v in parent_order else tuple(g.parents(v))
        if sorted(pa) != g.parents(v):
            raise DiagramError(f"parent order for {v} does not match the graph")
        nodes.append(Node(f"c_{v}", MECHANISM, f"c_{v}", pa, v))
    return NetworkDiagram(wires, tuple(nodes), inputs, outputs)


def open_dag_from_diagram(d: NetworkDiagram) -> OpenDag:
    if not d.strict or not validate(d, strict=True):
        raise DiagramError("only strict valid diagrams correspond to open DAGs")
    edges = set()
    for n in d.nodes:
        for w in n.inputs:
            edges.add((w, n.output))
    return OpenDag(Dag(tuple(d.wires), frozenset(edges)), d.inputs, d.outputs)


# evaluation --------------------------------------------------------------------

def _node_factor(d: NetworkDiagram, n: Node, interp: Interpretation):
    if n.kind == SHARP_STATE:
        arr = np.zeros(d.wires[n.output])
        arr[n.value[0]] = 1.0
        return arr, [n.output]
    if n.kind == SHARP_EFFECT:
        arr = np.zeros(d.wires[n.inputs[0]])
        arr[n.value[0]] = 1.0
        return arr, [n.inputs[0]]
    m = interp.resolve(d, n.box)
    labels = list(n.inputs) + ([n.output] if n.output is not None else [])
    expected = tuple(d.wires[w] for w in labels)
    if m.array.shape != expected:
        raise DiagramError(
            f"box {n.box!r} has shape {m.array.shape}, wiring expects {expected}")
    return m.array, labels


def evaluate(d: NetworkDiagram, interp: Mapping, method: str = "greedy") -> Morphism:
    """Contract the diagram into a morphism from its inputs to its outputs."""
    if not isinstance(interp, Interpretation):
        interp = Interpretation(interp)
    report = validate(d, strict=False)
    if not report:
        raise DiagramError("; ".join(report.problems))
    factors = []
    order = _node_order(d)
    for n in order:
        factors.append(_node_factor(d, n, interp))
    # input wires carry their own index; outputs reusing a wire get a copy
    open_in = [("in", w) for w in d.inputs]
    in_set = set(d.inputs)
    factors = [(a, [("in", l) if l in in_set else ("w", l) for l in ls]) for a, ls in factors]
    open_out = []
    first_seen = set()
    for k, w in enumerate(d.outputs):
        src = ("in", w) if w in in_set else ("w", w)
        if w in in_set or w in first_seen:
            lab = ("out", k)
            factors.append((np.eye(d.wires[w]), [src, lab]))
        else:
            lab = src
            first_seen.add(w)
        open_out.append(lab)
    for w in d.inputs:
        # unread inputs are discarded
        factors.append((np.ones(d.wires[w]), [("in", w)]))
    arr = contract(factors, open_in + open_out, method=method)
    dom = FinObject(tuple((w, d.wires[w]) for w in d.inputs))
    cod = FinObject(tuple((name, d.wires[w]) for name, w in zip(d.out_names, d.outputs)))
    return Morphism(dom, cod, arr, check=False)


def _node_order(d: NetworkDiagram) -> list:
    """Nodes in a topological order of their wires, ties by node id."""
    edges = set()
    ids = {n.id for n in d.nodes}
    prod = {n.output: n.id for n in d.nodes if n.output is not None}
    for n in d.nodes:
        for w in n.inputs:
            if w in prod:
                edges.add((prod[w], n.id))
    order = topological_order(_SimpleGraph(tuple(sorted(ids)), frozenset(edges)))
    by_id = {n.id: n for n in d.nodes}
    return [by_id[i] for i in order]


# rewriting ---------------------------------------------------------------------

@dataclass(frozen=True)
class RewriteResult:
    diagram: NetworkDiagram
    applied: bool
    note: str = ""


def _drop_nodes(d: NetworkDiagram, ids: set) -> tuple:
    return tuple(n for n in d.nodes if n.id not in ids)


def _is_normalised_producer(n: Node) -> bool:
    return n.kind in (MECHANISM, SHARP_STATE, GENERIC_STATE)


def input_signature(d: NetworkDiagram, n: Node) -> tuple:
    """Inputs of ``n`` with sharp-state-fed wires replaced by their value."""
    sig = []
    for w in n.inputs:
        p = d.producer(w)
        if p is not None and p.kind == SHARP_STATE:
            sig.append(("sharp", d.types[w], p.value))
        else:
            sig.append(("wire", w))
    return tuple(sig)


def _discard_fallthrough(d, site):
    n = d.node(site)
    if not _is_normalised_producer(n):
        return RewriteResult(d, False, "only channels and normalised states fall through")
    if d.uses(n.output):
        return RewriteResult(d, False, "output wire is still used")
    return RewriteResult(d.with_changes(nodes=_drop_nodes(d, {n.id})), True)


def _drop_discarded_copy_leg(d, site):
    w = site
    if w not in d.wires:
        return RewriteResult(d, False, "unknown wire")
    if w in d.producers() or d.uses(w):
        return RewriteResult(d, False, "wire is still produced or read")
    wires = {k: v for k, v in d.wires.items() if k != w}
    types = {k: v for k, v in d.types.items() if k != w}
    return RewriteResult(d.with_changes(wires=wires, types=types), True)


def _cleanup_unused_sharp(d: NetworkDiagram, candidates: Iterable[str]) -> NetworkDiagram:
    for w in candidates:
        p = d.producer(w)
        if p is not None and p.kind == SHARP_STATE and not d.uses(w):
            d = _discard_fallthrough(d, p.id).diagram
            d = _drop_discarded_copy_leg(d, w).diagram
    return d


def _redirect(d: NetworkDiagram, old: str, new: str, skip: set = frozenset()) -> NetworkDiagram:
    nodes = []
    for n in d.nodes:
        if n.id in skip:
            nodes.append(n)
            continue
        nodes.append(replace(n, inputs=tuple(new if w == old else w for w in n.inputs)))
    outputs = tuple(new if w == old else w for w in d.outputs)
    return d.with_changes(nodes=tuple(nodes), outputs=outputs)


def _copy_through_deterministic(d, site):
    a_id, b_id = site
    if a_id == b_id:
        return RewriteResult(d, False, "need two distinct nodes")
    a, b = d.node(a_id), d.node(b_id)
    if a.kind != MECHANISM or b.kind != MECHANISM or a.box != b.box:
        return RewriteResult(d, False, "nodes are not occurrences of the same mechanism")
    if input_signature(d, a) != input_signature(d, b):
        return RewriteResult(d, False, "nodes do not share their inputs")
    # b's output wire now carries a's output
    d2 = d.with_changes(nodes=_drop_nodes(d, {b.id}))
    d2 = _redirect(d2, b.output, a.output)
    d2 = _drop_discarded_copy_leg(d2, b.output).diagram
    d2 = _cleanup_unused_sharp(d2, b.inputs)
    return RewriteResult(d2, True)


def _sharp_effect_split(d, site):
    e = d.node(site)
    if e.kind != SHARP_EFFECT:
        return RewriteResult(d, False, "not a sharp effect")
    w = e.inputs[0]
    others = [(nid, k) for nid, k in d.consumers(w) if nid != e.id]
    if not others and w not in d.outputs:
        return RewriteResult(d, False, "the effect is the only reader of its wire")
    new = d.fresh_label(f"{w}={e.value[0]}")
    wires = dict(d.wires)
    wires[new] = d.wires[w]
    types = dict(d.types)
    types[new] = d.types[w]
    d2 = d.with_changes(wires=wires, types=types)
    d2 = _redirect(d2, w, new, skip={e.id})
    state = Node(d2.fresh_node_id(f"sharp:{new}"), SHARP_STATE, None, (), new, e.value)
    d2 = d2.with_changes(nodes=d2.nodes + (state,))
    return RewriteResult(d2, True)


def _copy_out_discard(d, site):
    s = d.node(site)
    if s.kind != SHARP_STATE:
        return RewriteResult(d, False, "not a sharp state")
    w = s.output
    readers = d.consumers(w)
    n_out = sum(1 for o in d.outputs if o == w)
    if len(readers) + n_out <= 1:
        return RewriteResult(d, False, "nothing to copy out")
    nodes = list(d.nodes)
    wires = dict(d.wires)
    types = dict(d.types)
    first = True
    by_id = {n.id: k for k, n in enumerate(nodes)}
    for nid, pos in readers:
        if first:
            first = False
            continue
        label = _fresh_in(wires, f"{w}")
        wires[label] = d.wires[w]
        types[label] = d.types[w]
        k = by_id[nid]
        ins = list(nodes[k].inputs)
        ins[pos] = label
        nodes[k] = replace(nodes[k], inputs=tuple(ins))
        nodes.append(Node(_fresh_id(nodes, f"sharp:{label}"), SHARP_STATE, None, (), label, s.value))
    outputs = list(d.outputs)
    for k, o in enumerate(outputs):
        if o != w:
            continue
        if first:
            first = False
            continue
        label = _fresh_in(wires, f"{w}")
        wires[label] = d.wires[w]
        types[label] = d.types[w]
        outputs[k] = label
        nodes.append(Node(_fresh_id(nodes, f"sharp:{label}"), SHARP_STATE, None, (), label, s.value))
    return RewriteResult(d.with_changes(nodes=tuple(nodes), wires=wires, types=types,
                                        outputs=tuple(outputs)), True)


def _fresh_in(taken, base):
    k = 1
    label = f"{base}~{k}"
    while label in taken:
        k += 1
        label = f"{base}~{k}"
    return label


def _fresh_id(nodes, base):
    ids = {n.id for n in nodes}
    k = 1
    nid = base
    while nid in ids:
        nid = f"{base}~{k}"
        k += 1
    return nid


def absorbed_name(d: NetworkDiagram, wire: str) -> str:
    return f"c_{d.types[wire]}"


def _absorb_noise(d, site):
    lam = d.node(site)
    if lam.kind != GENERIC_STATE:
        return RewriteResult(d, False, "not a noise state")
    u = lam.output
    readers = d.consumers(u)
    if len(readers) != 1 or u in d.outputs:
        return RewriteResult(d, False, "noise wire must have exactly one reader")
    nid, pos = readers[0]
    f = d.node(nid)
    if f.kind != MECHANISM:
        return RewriteResult(d, False, "noise must feed a mechanism")
    name = absorbed_name(d, f.output)
    taken = {n.box for n in d.nodes if n.box} | {x.box for x in d.derived}
    base, k = name, 1
    while name in taken:
        name = f"{base}~{k}"
        k += 1
    new_inputs = tuple(w for j, w in enumerate(f.inputs) if j != pos)
    node = replace(f, box=name, inputs=new_inputs, id=f.id)
    nodes = tuple(node if n.id == f.id else n for n in d.nodes if n.id != lam.id)
    derived = d.derived + (Derivation(name, f.box, lam.box, pos),)
    d2 = d.with_changes(nodes=nodes, derived=derived)
    d2 = _drop_discarded_copy_leg(d2, u).diagram
    return RewriteResult(d2, True)


_RULE_IMPL = {
    "discard_fallthrough": _discard_fallthrough,
    "drop_discarded_copy_leg": _drop_discarded_copy_leg,
    "copy_through_deterministic": _copy_through_deterministic,
    "sharp_effect_split": _sharp_effect_split,
    "copy_out_discard": _copy_out_discard,
    "absorb_noise_into_channel": _absorb_noise,
}


def apply_rewrite(d: NetworkDiagram, rule: str, site) -> RewriteResult:
    """Apply one rewrite at ``site``; a pattern mismatch is a no-op report.

    Sites are node ids, except ``drop_discarded_copy_leg`` (a wire label)
    and ``copy_through_deterministic`` (a pair of node ids).  The result
    is always an extended diagram.
    """
    if rule not in _RULE_IMPL:
        raise ValueError(f"unknown rewrite rule {rule!r}")
    try:
        res = _RULE_IMPL[rule](d, site)
    except KeyError as exc:
        return RewriteResult(d, False, f"no such site: {exc}")
    if res.applied:
        res = RewriteResult(res.diagram.with_changes(strict=False), True, res.note)
    return res


def rewrite_sites(d: NetworkDiagram, rule: str) -> list:
    """Every site where ``rule`` currently applies, in a fixed order."""
    if rule == "drop_discarded_copy_leg":
        cands = sorted(d.wires)
    elif rule == "copy_through_deterministic":
        mechs = sorted(n.id for n in d.nodes if n.kind == MECHANISM)
        cands = [(a, b) for i, a in enumerate(mechs) for b in mechs[i + 1:]]
    else:
        cands = sorted(n.id for n in d.nodes)
    return [s for s in cands if _RULE_IMPL[rule](d, s).applied]


def rewrite_fixpoint(d: NetworkDiagram, rules: Iterable[str], limit: int = 10000) -> NetworkDiagram:
    """Apply the first applicable (rule, site) until none applies."""
    rules = list(rules)
    for _ in range(limit):
        for rule in rules:
            sites = rewrite_sites(d, rule)
            if sites:
                d = apply_rewrite(d, rule, sites[0]).diagram
                break
        else:
            return d
    raise DiagramError("rewriting did not terminate")


# DOT -------------------------------------------------------------------------

def _q(s) -> str:
    return '"' + str(s).replace("\\", "\\\\").replace('"', '\\"') + '"'


_SHAPES = {MECHANISM: "box", SHARP_STATE: "invtriangle", SHARP_EFFECT: "triangle",
           GENERIC_STATE: "invhouse", GENERIC_EFFECT: "house"}


def to_dot(d: NetworkDiagram, name: str = "D") -> str:
    """Deterministic DOT text: boxes as nodes, wires as labelled edges."""
    lines = [f"digraph {name} {{", "  rankdir=BT;"]
    if not d.nodes and not d.inputs and not d.outputs:
        return f"digraph {name} {{ }}\n"
    for k, w in enumerate(d.inputs):
        lines.append(f"  {_q('in:' + w)} [shape=point, label={_q(w)}];")
    if d.inputs:
        lines.append("  { rank=min; " + " ".join(_q("in:" + w) for w in d.inputs) + " }")
    for n in sorted(d.nodes, key=lambda n: n.id):
        if n.kind in (SHARP_STATE, SHARP_EFFECT):
            label = f"{d.types.get(n.inputs[0] if n.inputs else n.output)}={n.value[0]}"
        else:
            label = n.box
        lines.append(f"  {_q(n.id)} [shape={_SHAPES[n.kind]}, label={_q(label)}];")
    for k, name_ in enumerate(d.out_names):
        lines.append(f"  {_q('out:' + name_)} [shape=point, label={_q(name_)}];")
    if d.outputs:
        lines.append("  { rank=max; " + " ".join(_q("out:" + o) for o in d.out_names) + " }")
    src = {w: "in:" + w for w in d.inputs}
    for n in d.nodes:
        if n.output is not None:
            src[n.output] = n.id
    edges = []
    for n in d.nodes:
        for w in n.inputs:
            edges.append((src[w], n.id, w))
    for name_, w in zip(d.out_names, d.outputs):
        edges.append((src[w], "out:" + name_, w))
    for a, b, w in sorted(edges):
        lines.append(f"  {_q(a)} -> {_q(b)} [label={_q(w)}];")
    lines.append("}")
    return "\n".join(lines) + "\n"
