"""Causal models as interpreted network diagrams, and functional models."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from . import semantics as sem
from .diagram import (MECHANISM, Interpretation, NetworkDiagram, Node,
                      absorbed_box, diagram_from_dag, evaluate, open_dag_from_diagram,
                      validate)
from .graph import Dag, OpenDag, topological_order
from .semantics import FinObject, Morphism


class ModelError(ValueError):
    pass


def mechanism_box(var: str) -> str:
    return f"c_{var}"


@dataclass(frozen=True)
class CausalModel:
    """A strict network diagram with a channel for every mechanism.

    Variables are the diagram's wires; inputs are variables without a
    mechanism.  A closed model has no inputs.
    """

    diagram: NetworkDiagram
    interp: Interpretation

    def __post_init__(self):
        if not isinstance(self.interp, Interpretation):
            object.__setattr__(self, "interp", Interpretation(self.interp))
        report = validate(self.diagram, strict=True)
        if not report:
            raise ModelError("; ".join(report.problems))
        for n in self.diagram.nodes:
            m = self.interp.get(n.box)
            if m is None:
                raise ModelError(f"no mechanism for {n.output}")
            shape = tuple(self.diagram.wires[w] for w in n.inputs + (n.output,))
            if m.array.shape != shape:
                raise ModelError(f"mechanism {n.box} has shape {m.array.shape}, expected {shape}")
            if not sem.classify(m, 1e-9).is_channel:
                raise ModelError(f"mechanism {n.box} is not a channel")

    # construction ------------------------------------------------------
    @classmethod
    def from_cpts(cls, dag: Dag, cards: Mapping, cpts: Mapping, inputs: Iterable = (),
                  outputs: Iterable | None = None,
                  parent_order: Mapping | None = None) -> "CausalModel":
        """Build from conditional tables ``cpts[X][parents..., x]``.

        Parents are ordered as ``dag.parents(X)`` (sorted) unless
        ``parent_order`` gives another order.
        """
        inputs = tuple(inputs)
        outputs = tuple(dag.vertices if outputs is None else outputs)
        d = diagram_from_dag(dag, inputs, outputs, cards, parent_order)
        interp = Interpretation()
        for n in d.nodes:
            var = n.output
            dom = d.wire_object(n.inputs)
            cod = d.wire_object([var])
            interp[n.box] = Morphism(dom, cod, cpts[var])
        return cls(d, interp)

    # structure ------------------------------------------------------------
    @property
    def variables(self) -> tuple:
        return tuple(self.diagram.wires)

    @property
    def inputs(self) -> tuple:
        return self.diagram.inputs

    @property
    def outputs(self) -> tuple:
        return self.diagram.outputs

    @property
    def cards(self) -> dict:
        return dict(self.diagram.wires)

    @property
    def open_dag(self) -> OpenDag:
        return open_dag_from_diagram(self.diagram)

    @property
    def dag(self) -> Dag:
        return self.open_dag.dag

    def node_for(self, var: str) -> Node:
        n = self.diagram.producer(var)
        if n is None:
            raise KeyError(f"{var} has no mechanism")
        return n

    def parents(self, var: str) -> tuple:
        n = self.diagram.producer(var)
        return () if n is None else n.inputs

    def mechanism(self, var: str) -> Morphism:
        return self.interp[self.node_for(var).box]

    def mechanisms(self) -> dict:
        return {n.output: self.interp[n.box] for n in self.diagram.nodes}

    def is_closed(self) -> bool:
        return not self.diagram.inputs

    def topological_variables(self) -> list:
        return topological_order(self.dag)

    def with_outputs(self, outputs: Iterable) -> "CausalModel":
        return CausalModel(self.diagram.with_changes(outputs=tuple(outputs), out_names=None),
                           self.interp)


def output_state(m: CausalModel) -> Morphism:
    if not m.is_closed():
        raise TypeError("output_state needs a closed model; use channel_of")
    return evaluate(m.diagram, m.interp)


def channel_of(m: CausalModel) -> Morphism:
    return evaluate(m.diagram, m.interp)


def full_joint(m: CausalModel, order: Iterable | None = None) -> Morphism:
    """Joint state over all variables (inputs must be absent)."""
    order = tuple(m.variables if order is None else order)
    return output_state(m.with_outputs(order))


def product_of_mechanisms(m: CausalModel, order: Iterable | None = None) -> Morphism:
    """``Π P(X | Pa(X))`` evaluated entrywise by direct enumeration."""
    order = tuple(m.variables if order is None else order)
    cards = m.cards
    obj = FinObject(tuple((v, cards[v]) for v in order))
    arr = np.ones(obj.cards)
    pos = {v: k for k, v in enumerate(order)}
    for vals in itertools.product(*[range(cards[v]) for v in order]):
        p = 1.0
        for n in m.diagram.nodes:
            mech = m.interp[n.box]
            idx = tuple(vals[pos[w]] for w in n.inputs) + (vals[pos[n.output]],)
            p *= mech.array[idx]
        arr[vals] = p
    return Morphism(sem.UNIT, obj, arr)


def markov_check(m: CausalModel, tol: float = 1e-9, joint: Morphism | None = None) -> bool:
    """Whether the (given or computed) full joint factorises along the DAG."""
    order = m.variables
    joint = full_joint(m, order) if joint is None else joint
    return joint.allclose(product_of_mechanisms(m, order), tol)


def conditionally_independent(omega: Morphism, xs: Iterable, ys: Iterable,
                              zs: Iterable = (), tol: float = 1e-9) -> bool:
    """Whether ``X ⊥ Y | Z`` holds in the state ``omega``."""
    xs, ys, zs = list(xs), list(ys), list(zs)
    if set(xs) & set(ys) or set(xs) & set(zs) or set(ys) & set(zs):
        raise ValueError("variable sets must be disjoint")
    if not omega.is_state:
        raise TypeError("conditional independence is a property of states")
    joint = sem.conditional(sem.marginalize(omega, xs + ys + zs), zs)
    cx = sem.conditional(sem.marginalize(omega, xs + zs), zs)
    cy = sem.conditional(sem.marginalize(omega, ys + zs), zs)
    nz = len(zs)
    # joint has axes (Z..., X..., Y...)
    lhs = joint.array
    prod = (cx.array.reshape(cx.array.shape + (1,) * len(ys))
            * cy.array.reshape(cy.array.shape[:nz] + (1,) * len(xs) + cy.array.shape[nz:]))
    return bool(np.max(np.abs(lhs - prod), initial=0.0) <= tol)


def signalling_parents(mech: Morphism, tol: float = 1e-9) -> list:
    """For each input position, whether it can change the output."""
    arr = mech.array
    k = len(mech.dom)
    out = []
    for i in range(k):
        moved = np.moveaxis(arr, i, 0)
        spread = np.max(moved, axis=0) - np.min(moved, axis=0)
        out.append(bool(np.max(spread, initial=0.0) > tol))
    return out


def mechanism_faithful(m: CausalModel, tol: float = 1e-9) -> dict:
    """``{X: {parent: signals}}`` for every mechanism."""
    report = {}
    for n in m.diagram.nodes:
        flags = signalling_parents(m.interp[n.box], tol)
        report[n.output] = dict(zip(n.inputs, flags))
    return report


def is_mechanism_faithful(m: CausalModel, tol: float = 1e-9) -> bool:
    return all(all(r.values()) for r in mechanism_faithful(m, tol).values())


# functional causal models -----------------------------------------------------

def noise_wire(var: str) -> str:
    return f"U_{var}"


def function_box(var: str) -> str:
    return f"f_{var}"


def noise_box(var: str) -> str:
    return f"lambda_{var}"


@dataclass(frozen=True)
class Fcm:
    """Deterministic mechanisms ``f_X(parents, U_X)`` with noise states ``λ_X``.

    Parameters
    ----------
    variables : tuple of str
        Endogenous variables in a topological order.
    parents : dict
        Endogenous parents of each variable (ordered).
    cards : dict
        Cardinality of every endogenous variable.
    functions : dict
        ``f_X`` with domain ``parents ⊗ U_X`` and codomain ``X``.
    noises : dict
        ``λ_X`` as a normalised state on ``U_X``.
    outputs : tuple of str
    """

    variables: tuple
    parents: dict
    cards: dict
    functions: dict
    noises: dict
    outputs: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "outputs", tuple(self.outputs or self.variables))
        object.__setattr__(self, "parents", {v: tuple(self.parents.get(v, ())) for v in self.variables})
        for v in self.variables:
            f = self.functions[v]
            lam = self.noises[v]
            cls_ = sem.classify(f, 1e-9)
            if not (cls_.is_channel and cls_.is_deterministic):
                raise ModelError(f"f_{v} is not a deterministic channel")
            if not sem.classify(lam, 1e-9).is_normalised_state:
                raise ModelError(f"lambda_{v} is not a normalised state")
            exp = tuple(self.cards[p] for p in self.parents[v]) + (self.noise_card(v), self.cards[v])
            if f.array.shape != exp:
                raise ModelError(f"f_{v} has shape {f.array.shape}, expected {exp}")
        Dag(self.variables, frozenset((p, v) for v in self.variables for p in self.parents[v]))

    def noise_card(self, var: str) -> int:
        return self.noises[var].cod.size

    @property
    def dag(self) -> Dag:
        return Dag(self.variables,
                   frozenset((p, v) for v in self.variables for p in self.parents[v]))

    def function_table(self, var: str) -> np.ndarray:
        """Integer table ``value[parents..., u]`` of the deterministic map."""
        return np.argmax(self.functions[var].array, axis=-1)

    def as_model(self) -> CausalModel:
        """The FCM as a causal model whose noises are explicit variables."""
        wires = {}
        nodes = []
        interp = Interpretation()
        for v in self.variables:
            u = noise_wire(v)
            wires[u] = self.noise_card(v)
            nodes.append(Node(noise_box(v), MECHANISM, noise_box(v), (), u))
            interp[noise_box(v)] = self.noises[v].with_types(cod=FinObject(((u, wires[u]),)))
        for v in self.variables:
            wires[v] = self.cards[v]
        for v in self.variables:
            ins = self.parents[v] + (noise_wire(v),)
            nodes.append(Node(function_box(v), MECHANISM, function_box(v), ins, v))
            dom = FinObject(tuple((w, wires[w]) for w in ins))
            interp[function_box(v)] = self.functions[v].with_types(dom, FinObject(((v, wires[v]),)))
        d = NetworkDiagram(wires, tuple(nodes), (), self.outputs)
        return CausalModel(d, interp)


def fcm_from_model(m: CausalModel) -> Fcm:
    if not m.is_closed():
        raise ModelError("functional dilation needs a closed model")
    order = m.topological_variables()
    functions, noises, parents = {}, {}, {}
    for v in order:
        c = m.mechanism(v)
        f, u, lam = sem.functional_dilation(c, noise_wire(v))
        if u.is_unit:
            # deterministic: a one-element noise keeps every f_X uniform in shape
            u = FinObject(((noise_wire(v), 1),))
            f = Morphism(c.dom.tensor(u), c.cod, c.array.reshape(c.dom.cards + (1,) + c.cod.cards))
            lam = Morphism(sem.UNIT, u, [1.0])
        functions[v] = f
        noises[v] = lam
        parents[v] = m.parents(v)
    return Fcm(tuple(order), parents, m.cards, functions, noises, m.outputs)


def model_from_fcm(fcm: Fcm) -> CausalModel:
    """Collapse every ``(f_X, λ_X)`` pair into a channel ``c_X``."""
    cpts = {}
    for v in fcm.variables:
        c = absorbed_box(fcm.functions[v], fcm.noises[v], len(fcm.parents[v]))
        cpts[v] = c.array
    return CausalModel.from_cpts(fcm.dag, fcm.cards, cpts, (), fcm.outputs, fcm.parents)
