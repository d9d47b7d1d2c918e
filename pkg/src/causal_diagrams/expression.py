"""Symbolic identifying expressions over interventional data tables.

Terms have named input and output wires.  Composition plugs outputs into
same-named inputs; outputs that are not consumed pass through, inputs that
are not supplied become inputs of the composite.  Inputs that share a
name are fed from one (copied) wire.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import semantics as sem
from .contraction import contract
from .semantics import UNIT, FinObject, Morphism


class ExpressionError(ValueError):
    pass


# data tables -------------------------------------------------------------------

@dataclass(frozen=True)
class PStarTables:
    """Interventional tables ``P(O \\ X ; do X)`` keyed by do-set.

    Parameters
    ----------
    roster : tuple of (str, int)
        Observed variables and cardinalities, in a fixed order.
    tables : dict
        ``frozenset(X) -> Morphism`` with domain ``X`` and codomain
        ``O \\ X``, both in roster order.  The empty do-set holds ``P(O)``.
    """

    roster: tuple
    tables: dict

    def __post_init__(self):
        roster = tuple((str(n), int(c)) for n, c in self.roster)
        object.__setattr__(self, "roster", roster)
        tabs = {}
        names = [n for n, _ in roster]
        for key, mor in dict(self.tables).items():
            key = frozenset(key)
            if not key <= set(names):
                raise ExpressionError(f"do-set {sorted(key)} is not in the roster")
            dom = self.obj([n for n in names if n in key])
            cod = self.obj([n for n in names if n not in key])
            if mor.dom.cards != dom.cards or mor.cod.cards != cod.cards:
                raise ExpressionError(f"table for do{sorted(key)} has the wrong shape")
            # unseen intervention values leave zero columns (partial channels)
            if not sem.classify(mor, 1e-6).is_partial_channel:
                raise ExpressionError(f"table for do{sorted(key)} is not a channel")
            tabs[key] = mor.with_types(dom, cod)
        object.__setattr__(self, "tables", tabs)

    @property
    def names(self) -> tuple:
        return tuple(n for n, _ in self.roster)

    @property
    def cards(self) -> dict:
        return dict(self.roster)

    def obj(self, names: Iterable[str]) -> FinObject:
        c = self.cards
        return FinObject(tuple((n, c[n]) for n in names))

    def table(self, doset: Iterable[str]) -> Morphism:
        key = frozenset(doset)
        if key not in self.tables:
            raise ExpressionError(f"no table for do({', '.join(sorted(key))})")
        return self.tables[key]

    def has(self, doset: Iterable[str]) -> bool:
        return frozenset(doset) in self.tables

    @property
    def observational(self) -> Morphism:
        return self.table(())


# terms -------------------------------------------------------------------------

class Term:
    """Base class; subclasses set ``dom`` and ``cod`` (named FinObjects)."""

    dom: FinObject
    cod: FinObject

    def children(self) -> tuple:
        return ()


def _check_distinct(names, what):
    if len(set(names)) != len(names):
        raise ExpressionError(f"{what} names must be distinct: {list(names)}")


@dataclass(frozen=True, eq=False)
class DataRef(Term):
    """``P(outputs ; do doset)``, with optional renaming of wires."""

    doset: tuple
    outputs: tuple
    rename: tuple
    dom: FinObject
    cod: FinObject

    @classmethod
    def make(cls, roster: Sequence, doset: Iterable[str], outputs: Iterable[str],
             rename: Mapping | None = None) -> "DataRef":
        cards = dict(roster)
        names = [n for n, _ in roster]
        doset = tuple(n for n in names if n in set(doset))
        outputs = tuple(outputs)
        for n in doset + outputs:
            if n not in cards:
                raise ExpressionError(f"{n} is not an observed variable")
        if set(doset) & set(outputs):
            raise ExpressionError("outputs must avoid the do-set")
        rename = dict(rename or {})
        dom = FinObject(tuple((rename.get(n, n), cards[n]) for n in doset))
        cod = FinObject(tuple((rename.get(n, n), cards[n]) for n in outputs))
        return cls(doset, outputs, tuple(sorted(rename.items())), dom, cod)


@dataclass(frozen=True, eq=False)
class Compose(Term):
    first: Term
    second: Term
    dom: FinObject = field(init=False)
    cod: FinObject = field(init=False)

    def __post_init__(self):
        f, g = self.first, self.second
        fc = set(f.cod.names)
        dom = list(f.dom.atoms)
        seen = set(f.dom.names)
        for a in g.dom.atoms:
            if a[0] not in fc and a[0] not in seen:
                dom.append(a)
                seen.add(a[0])
        for a in g.dom.atoms:
            if a[0] in fc and f.cod.card(a[0]) != a[1]:
                raise ExpressionError(f"wire {a[0]} changes cardinality")
        cod = [a for a in f.cod.atoms if a[0] not in set(g.dom.names)] + list(g.cod.atoms)
        _check_distinct([a[0] for a in cod], "output")
        object.__setattr__(self, "dom", FinObject(tuple(dom)))
        object.__setattr__(self, "cod", FinObject(tuple(cod)))

    def children(self):
        return (self.first, self.second)


@dataclass(frozen=True, eq=False)
class Tensor(Term):
    left: Term
    right: Term
    dom: FinObject = field(init=False)
    cod: FinObject = field(init=False)

    def __post_init__(self):
        l, r = self.left, self.right
        dom = list(l.dom.atoms) + [a for a in r.dom.atoms if a[0] not in set(l.dom.names)]
        cod = list(l.cod.atoms) + list(r.cod.atoms)
        _check_distinct([a[0] for a in cod], "output")
        object.__setattr__(self, "dom", FinObject(tuple(dom)))
        object.__setattr__(self, "cod", FinObject(tuple(cod)))

    def children(self):
        return (self.left, self.right)


@dataclass(frozen=True, eq=False)
class CopyFanout(Term):
    """Copy ``source`` onto ``targets``; no targets discards, one renames."""

    source: str
    card: int
    targets: tuple
    dom: FinObject = field(init=False)
    cod: FinObject = field(init=False)

    def __post_init__(self):
        _check_distinct(self.targets, "copy target")
        object.__setattr__(self, "dom", FinObject(((self.source, self.card),)))
        object.__setattr__(self, "cod", FinObject(tuple((t, self.card) for t in self.targets)))


@dataclass(frozen=True, eq=False)
class Discard(Term):
    wires: FinObject
    dom: FinObject = field(init=False)
    cod: FinObject = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "dom", self.wires)
        object.__setattr__(self, "cod", UNIT)


@dataclass(frozen=True, eq=False)
class SharpState(Term):
    name: str
    card: int
    value: int
    dom: FinObject = field(init=False)
    cod: FinObject = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "dom", UNIT)
        object.__setattr__(self, "cod", FinObject(((self.name, self.card),)))


@dataclass(frozen=True, eq=False)
class SharpEffect(Term):
    name: str
    card: int
    value: int
    dom: FinObject = field(init=False)
    cod: FinObject = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "dom", FinObject(((self.name, self.card),)))
        object.__setattr__(self, "cod", UNIT)


@dataclass(frozen=True, eq=False)
class Conditional(Term):
    """``body|_on``: the listed outputs of ``body`` become inputs."""

    body: Term
    on: tuple
    dom: FinObject = field(init=False)
    cod: FinObject = field(init=False)

    def __post_init__(self):
        b = self.body
        on = tuple(self.on)
        for n in on:
            if n not in b.cod.names:
                raise ExpressionError(f"cannot condition on {n}: not an output")
        if set(on) & set(b.dom.names):
            raise ExpressionError("conditioned wires clash with inputs")
        object.__setattr__(self, "on", on)
        object.__setattr__(self, "dom", b.dom.tensor(b.cod.sub(on)))
        object.__setattr__(self, "cod", b.cod.without(on))

    def children(self):
        return (self.body,)


@dataclass(frozen=True, eq=False)
class Marginal(Term):
    """Keep the listed outputs (in that order), discarding the rest."""

    body: Term
    keep: tuple
    dom: FinObject = field(init=False)
    cod: FinObject = field(init=False)

    def __post_init__(self):
        keep = tuple(self.keep)
        object.__setattr__(self, "keep", keep)
        object.__setattr__(self, "dom", self.body.dom)
        object.__setattr__(self, "cod", self.body.cod.sub(keep))

    def children(self):
        return (self.body,)


@dataclass(frozen=True, eq=False)
class NormalizeBox(Term):
    body: Term
    dom: FinObject = field(init=False)
    cod: FinObject = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "dom", self.body.dom)
        object.__setattr__(self, "cod", self.body.cod)

    def children(self):
        return (self.body,)


@dataclass(frozen=True, eq=False)
class Constant(Term):
    """A known morphism (e.g. a general intervention ``η``)."""

    label: str
    morphism: Morphism
    dom: FinObject = field(init=False)
    cod: FinObject = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "dom", self.morphism.dom)
        object.__setattr__(self, "cod", self.morphism.cod)


@dataclass(frozen=True, eq=False)
class Contraction(Term):
    """Terms joined by wire name into one tensor network.

    Each wire is produced by at most one factor; wires nobody produces are
    inputs of the whole, wires read by several factors are copied, and
    every wire not listed in ``outputs`` is summed out.  Unlike
    :class:`Compose` the factors need no sequential order.
    """

    factors: tuple
    outputs: tuple
    names: tuple = None
    dom: FinObject = field(init=False)
    cod: FinObject = field(init=False)

    def __post_init__(self):
        factors = tuple(self.factors)
        outputs = tuple(self.outputs)
        names = outputs if self.names is None else tuple(self.names)
        if len(names) != len(outputs):
            raise ExpressionError("one name per output wire")
        _check_distinct(names, "output")
        cards, produced = {}, set()
        for f in factors:
            for n, c in f.cod.atoms:
                if n in produced:
                    raise ExpressionError(f"wire {n} is produced twice")
                produced.add(n)
            for n, c in f.dom.atoms + f.cod.atoms:
                if cards.setdefault(n, c) != c:
                    raise ExpressionError(f"wire {n} changes cardinality")
        for o in outputs:
            if o not in cards:
                raise ExpressionError(f"output {o} is not a wire of the network")
        dom = []
        for f in factors:
            for n, c in f.dom.atoms:
                if n not in produced and all(n != d[0] for d in dom):
                    dom.append((n, c))
        object.__setattr__(self, "factors", factors)
        object.__setattr__(self, "outputs", outputs)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "dom", FinObject(tuple(dom)))
        object.__setattr__(self, "cod", FinObject(tuple((m, cards[o]) for m, o in zip(names, outputs))))

    def children(self):
        return self.factors


# evaluation --------------------------------------------------------------------

def evaluate_expression(e: Term, data: PStarTables) -> Morphism:
    """Evaluate bottom-up; zero-support conditioning yields zero, never raises."""
    if isinstance(e, DataRef):
        tab = data.table(e.doset)
        names = data.names
        rest = [n for n in names if n not in set(e.doset)]
        full = tab.with_types(data.obj(e.doset), data.obj(rest))
        m = sem.marginalize(full, e.outputs)
        return m.with_types(e.dom, e.cod)
    if isinstance(e, Compose):
        f = evaluate_expression(e.first, data)
        g = evaluate_expression(e.second, data)
        fc = set(f.cod.names)
        f_labels = [("i", n) for n in f.dom.names] + [("w", n) for n in f.cod.names]
        g_labels = ([("w", n) if n in fc else ("i", n) for n in g.dom.names]
                    + [("o", n) for n in g.cod.names])
        dom_labels = [("i", n) for n in e.dom.names]
        gin = set(g.dom.names)
        cod_labels = [("w", n) for n in f.cod.names if n not in gin] + [("o", n) for n in g.cod.names]
        arr = contract([(f.array, f_labels), (g.array, g_labels)], dom_labels + cod_labels)
        return Morphism(e.dom, e.cod, arr, check=False)
    if isinstance(e, Tensor):
        l = evaluate_expression(e.left, data)
        r = evaluate_expression(e.right, data)
        l_labels = [("i", n) for n in l.dom.names] + [("l", n) for n in l.cod.names]
        r_labels = [("i", n) for n in r.dom.names] + [("r", n) for n in r.cod.names]
        out = ([("i", n) for n in e.dom.names] + [("l", n) for n in l.cod.names]
               + [("r", n) for n in r.cod.names])
        arr = contract([(l.array, l_labels), (r.array, r_labels)], out)
        return Morphism(e.dom, e.cod, arr, check=False)
    if isinstance(e, CopyFanout):
        return sem.copy(e.dom, len(e.targets)).with_types(e.dom, e.cod)
    if isinstance(e, Discard):
        return sem.discard(e.dom)
    if isinstance(e, SharpState):
        return sem.sharp_state(e.cod, (e.value,))
    if isinstance(e, SharpEffect):
        return sem.sharp_effect(e.dom, (e.value,))
    if isinstance(e, Conditional):
        b = evaluate_expression(e.body, data)
        return sem.conditional(b, e.on).with_types(e.dom, e.cod)
    if isinstance(e, Marginal):
        return sem.marginalize(evaluate_expression(e.body, data), e.keep)
    if isinstance(e, NormalizeBox):
        return sem.normalize(evaluate_expression(e.body, data))
    if isinstance(e, Constant):
        return e.morphism
    if isinstance(e, Contraction):
        factors = []
        for f in e.factors:
            m = evaluate_expression(f, data)
            factors.append((m.array, [("w", n) for n in m.dom.names + m.cod.names]))
        open_out, seen = [], set()
        for k, o in enumerate(e.outputs):
            if o in seen or o in e.dom.names:
                lab = ("o", k)
                factors.append((np.eye(e.cod.cards[k]), [("w", o), lab]))
            else:
                lab = ("w", o)
                seen.add(o)
            open_out.append(lab)
        open_in = [("w", n) for n in e.dom.names]
        if not factors:
            arr = np.ones(())
        else:
            arr = contract(factors, open_in + open_out)
        return Morphism(e.dom, e.cod, arr, check=False)
    raise ExpressionError(f"unknown term {e!r}")


def leaves(e: Term) -> list:
    if isinstance(e, DataRef):
        return [e]
    return [l for c in e.children() for l in leaves(c)]


def check_roster(e: Term, data: PStarTables) -> None:
    for leaf in leaves(e):
        data.table(leaf.doset)


# network builder ---------------------------------------------------------------

class NetworkBuilder:
    """Assemble a term from boxes wired by name, with implicit fan-out.

    Boxes are added in a topological order.  A wire read by several boxes
    (or also exposed as an output) is copied; unread wires are discarded.
    """

    def __init__(self):
        self.boxes = []

    def add(self, term: Term) -> "NetworkBuilder":
        self.boxes.append(term)
        return self

    def build(self, outputs: Sequence[str]) -> Term:
        return build_network(self.boxes, outputs)


def build_network(boxes: Sequence[Term], outputs: Sequence[str]) -> Term:
    """Chain ``boxes`` by wire name, copying wires that are read again later."""
    outputs = list(outputs)
    produced = {}
    for k, b in enumerate(boxes):
        for n in b.cod.names:
            if n in produced:
                raise ExpressionError(f"wire {n} is produced twice")
            produced[n] = k
    term = None
    for k, b in enumerate(boxes):
        if term is None:
            term = b
            continue
        live = set(term.cod.names)
        shared = [n for n in b.dom.names if n in live
                  and (n in outputs or any(n in bb.dom.names for bb in boxes[k + 1:]))]
        rename = {}
        for n in shared:
            keep = f"{n}@{k}"
            term = Compose(term, CopyFanout(n, term.cod.card(n), (n, keep)))
            rename[keep] = n
        term = Compose(term, b)
        for keep, n in rename.items():
            term = Compose(term, CopyFanout(keep, term.cod.card(keep), (n,)))
    if term is None:
        raise ExpressionError("empty network")
    return Marginal(term, tuple(outputs))


# printing and serialisation ----------------------------------------------------

def _names(obj: FinObject) -> str:
    return ",".join(obj.names)


def to_text(e: Term) -> str:
    if isinstance(e, DataRef):
        ren = dict(e.rename)
        outs = ",".join(e.outputs)
        s = f"P({outs}" + (f"; do({','.join(e.doset)})" if e.doset else "") + ")"
        if ren:
            s += "[" + ",".join(f"{a}->{b}" for a, b in sorted(ren.items())) + "]"
        return s
    if isinstance(e, Compose):
        return f"({to_text(e.first)} ; {to_text(e.second)})"
    if isinstance(e, Tensor):
        return f"({to_text(e.left)} ⊗ {to_text(e.right)})"
    if isinstance(e, CopyFanout):
        if not e.targets:
            return f"discard[{e.source}]"
        return f"copy[{e.source}->{','.join(e.targets)}]"
    if isinstance(e, Discard):
        return f"discard[{_names(e.wires)}]"
    if isinstance(e, SharpState):
        return f"{e.name}={e.value}"
    if isinstance(e, SharpEffect):
        return f"[{e.name}={e.value}]†"
    if isinstance(e, Conditional):
        if not e.on:
            return to_text(e.body)
        return f"{to_text(e.body)}|{','.join(e.on)}"
    if isinstance(e, Marginal):
        return f"marg[{','.join(e.keep)}]{to_text(e.body)}"
    if isinstance(e, NormalizeBox):
        return f"norm[{to_text(e.body)}]"
    if isinstance(e, Constant):
        return e.label
    if isinstance(e, Contraction):
        inner = " · ".join(to_text(f) for f in e.factors)
        outs = ",".join(e.names)
        return f"Σ[{outs}]{{{inner}}}"
    raise ExpressionError(f"unknown term {e!r}")


def _obj_json(o: FinObject):
    return [[n, c] for n, c in o.atoms]


def _obj_from(js) -> FinObject:
    return FinObject(tuple((n, int(c)) for n, c in js))


def to_json(e: Term) -> dict:
    if isinstance(e, DataRef):
        return {"kind": "data_ref", "doset": list(e.doset), "outputs": list(e.outputs),
                "rename": dict(e.rename)}
    if isinstance(e, Compose):
        return {"kind": "compose", "first": to_json(e.first), "second": to_json(e.second)}
    if isinstance(e, Tensor):
        return {"kind": "tensor", "left": to_json(e.left), "right": to_json(e.right)}
    if isinstance(e, CopyFanout):
        return {"kind": "copy_fanout", "source": e.source, "card": e.card,
                "targets": list(e.targets)}
    if isinstance(e, Discard):
        return {"kind": "discard", "wires": _obj_json(e.wires)}
    if isinstance(e, SharpState):
        return {"kind": "sharp_state", "name": e.name, "card": e.card, "value": e.value}
    if isinstance(e, SharpEffect):
        return {"kind": "sharp_effect", "name": e.name, "card": e.card, "value": e.value}
    if isinstance(e, Conditional):
        return {"kind": "conditional", "body": to_json(e.body), "on": list(e.on)}
    if isinstance(e, Marginal):
        return {"kind": "marginal", "body": to_json(e.body), "keep": list(e.keep)}
    if isinstance(e, NormalizeBox):
        return {"kind": "normalize_box", "body": to_json(e.body)}
    if isinstance(e, Constant):
        m = e.morphism
        return {"kind": "constant", "label": e.label, "dom": _obj_json(m.dom),
                "cod": _obj_json(m.cod), "entries": [float(x) for x in m.array.ravel()]}
    if isinstance(e, Contraction):
        return {"kind": "contraction", "factors": [to_json(f) for f in e.factors],
                "outputs": list(e.outputs), "names": list(e.names)}
    raise ExpressionError(f"unknown term {e!r}")


def from_json(js: Mapping, roster: Sequence) -> Term:
    k = js["kind"]
    if k == "data_ref":
        return DataRef.make(roster, js["doset"], js["outputs"], js.get("rename"))
    if k == "compose":
        return Compose(from_json(js["first"], roster), from_json(js["second"], roster))
    if k == "tensor":
        return Tensor(from_json(js["left"], roster), from_json(js["right"], roster))
    if k == "copy_fanout":
        return CopyFanout(js["source"], int(js["card"]), tuple(js["targets"]))
    if k == "discard":
        return Discard(_obj_from(js["wires"]))
    if k == "sharp_state":
        return SharpState(js["name"], int(js["card"]), int(js["value"]))
    if k == "sharp_effect":
        return SharpEffect(js["name"], int(js["card"]), int(js["value"]))
    if k == "conditional":
        return Conditional(from_json(js["body"], roster), tuple(js["on"]))
    if k == "marginal":
        return Marginal(from_json(js["body"], roster), tuple(js["keep"]))
    if k == "normalize_box":
        return NormalizeBox(from_json(js["body"], roster))
    if k == "constant":
        return Constant(js["label"], Morphism(_obj_from(js["dom"]), _obj_from(js["cod"]),
                                              js["entries"]))
    if k == "contraction":
        return Contraction(tuple(from_json(f, roster) for f in js["factors"]),
                           tuple(js["outputs"]), tuple(js.get("names", js["outputs"])))
    raise ExpressionError(f"unknown term kind {k!r}")


def to_dot(e: Term, name: str = "E") -> str:
    """Deterministic DOT rendering of the term tree."""
    lines = [f"digraph {name} {{", "  node [shape=box];"]
    counter = itertools.count()

    def visit(t):
        nid = f"t{next(counter)}"
        if isinstance(t, (DataRef, CopyFanout, Discard, SharpState, SharpEffect, Constant)):
            label = to_text(t)
        else:
            label = {Compose: "compose", Tensor: "tensor", NormalizeBox: "normalize",
                     Contraction: "contract"}.get(type(t))
            if label is None:
                label = (f"conditional |{','.join(t.on)}" if isinstance(t, Conditional)
                         else f"marginal [{','.join(t.keep)}]")
        lines.append(f'  {nid} [label="{label}"];')
        for c in t.children():
            cid = visit(c)
            lines.append(f"  {nid} -> {cid};")
        return nid

    visit(e)
    lines.append("}")
    return "\n".join(lines) + "\n"
