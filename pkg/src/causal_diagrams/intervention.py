"""Interventions on causal models and the open-model toolkit.

Every intervention returns a new :class:`CausalModel` over the same
variables, inputs and outputs; only mechanisms (and with them the DAG)
change.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import semantics as sem
from .diagram import MECHANISM, Interpretation, NetworkDiagram, Node, validate
from .graph import GraphError
from .model import CausalModel, ModelError, signalling_parents
from .semantics import FinObject, Morphism


class InterventionError(ValueError):
    pass


@dataclass(frozen=True)
class Do:
    var: str
    value: int


@dataclass(frozen=True)
class Break:
    var: str
    state: Morphism


@dataclass(frozen=True)
class Cut:
    var: str


@dataclass(frozen=True)
class Local:
    """Post-compose ``eta : X -> X`` onto the mechanism of ``var``."""
    var: str
    eta: Morphism


@dataclass(frozen=True)
class WideLocal:
    """Post-compose ``eta : A ⊗ X -> X``, making ``A`` extra parents."""
    var: str
    extra: tuple
    eta: Morphism


@dataclass(frozen=True)
class Trim:
    var: str


@dataclass(frozen=True)
class Pad:
    var: str
    extra: tuple


@dataclass(frozen=True)
class Rewire:
    """``X_i`` gets mechanism ``maps[X_i] ∘ c_{perm[X_i]}``.

    ``perm`` maps each rewired variable to the variable whose mechanism
    (and parents) it takes over; it must be a permutation of its keys.
    """
    perm: dict
    maps: dict


def _box_name(m: CausalModel, base: str) -> str:
    taken = set(m.interp) | {n.box for n in m.diagram.nodes}
    name, k = base, 1
    while name in taken:
        name = f"{base}~{k}"
        k += 1
    return name


def _replace_mechanisms(m: CausalModel, updates: Mapping) -> CausalModel:
    """``updates[var] = (box, inputs, morphism)``; rebuild and re-validate."""
    d = m.diagram
    nodes = []
    interp = Interpretation(m.interp)
    dropped = set()
    for n in d.nodes:
        if n.output in updates:
            box, ins, mor = updates[n.output]
            dropped.add(n.box)
            nodes.append(Node(box, MECHANISM, box, tuple(ins), n.output))
            interp[box] = mor.with_types(d.wire_object(ins), d.wire_object([n.output]))
        else:
            nodes.append(n)
    used = {n.box for n in nodes}
    for b in dropped - used:
        interp.pop(b, None)
    new = d.with_changes(nodes=tuple(nodes))
    report = validate(new, strict=True)
    if not report:
        raise InterventionError("; ".join(report.problems))
    try:
        return CausalModel(new, interp)
    except GraphError as exc:
        raise InterventionError(str(exc)) from exc


def _state_on(m: CausalModel, var: str, arr) -> Morphism:
    return Morphism(sem.UNIT, m.diagram.wire_object([var]), arr)


def trimmed(mech: Morphism, tol: float = 1e-9) -> tuple:
    """Drop non-signalling inputs; returns ``(kept_positions, morphism)``.

    Borderline parents (spread within ``tol``) are dropped only when they
    are non-signalling at that tolerance, so near-ties keep the parent.
    """
    flags = signalling_parents(mech, tol)
    keep = [k for k, f in enumerate(flags) if f]
    idx = tuple(slice(None) if k in keep else 0 for k in range(len(mech.dom)))
    arr = mech.array[idx]
    dom = FinObject(tuple(mech.dom.atoms[k] for k in keep))
    return keep, Morphism(dom, mech.cod, arr, check=False)


def apply(m: CausalModel, sigma) -> CausalModel:
    """Apply one intervention (or a sequence of them, in order)."""
    if isinstance(sigma, (list, tuple)):
        for s in sigma:
            m = apply(m, s)
        return m
    d = m.diagram
    var = getattr(sigma, "var", None)
    if var is not None and d.producer(var) is None:
        raise InterventionError(f"{var} has no mechanism to intervene on")

    if isinstance(sigma, Do):
        arr = np.zeros(d.wires[var])
        if not 0 <= sigma.value < d.wires[var]:
            raise InterventionError(f"value {sigma.value} out of range for {var}")
        arr[sigma.value] = 1.0
        box = _box_name(m, f"do[{var}={sigma.value}]")
        return _replace_mechanisms(m, {var: (box, (), _state_on(m, var, arr))})
    if isinstance(sigma, Break):
        st = sigma.state
        if not sem.classify(st).is_normalised_state or st.cod.size != d.wires[var]:
            raise InterventionError("a breaking intervention needs a normalised state on the variable")
        box = _box_name(m, f"break[{var}]")
        return _replace_mechanisms(m, {var: (box, (), _state_on(m, var, st.array))})
    if isinstance(sigma, Cut):
        box = _box_name(m, f"cut[{var}]")
        arr = np.full(d.wires[var], 1.0 / d.wires[var])
        return _replace_mechanisms(m, {var: (box, (), _state_on(m, var, arr))})
    if isinstance(sigma, Local):
        if not sem.classify(sigma.eta).is_channel:
            raise InterventionError("local interventions need a channel")
        c = m.mechanism(var)
        new = sem.compose(c, sigma.eta)
        box = _box_name(m, f"local[{var}]")
        return _replace_mechanisms(m, {var: (box, m.parents(var), new)})
    if isinstance(sigma, WideLocal):
        extra = tuple(sigma.extra)
        if not sem.classify(sigma.eta).is_channel:
            raise InterventionError("wide local interventions need a channel")
        desc = m.dag.descendants([var])
        if set(extra) & desc:
            raise InterventionError("extra parents must not be descendants of the variable")
        pa = m.parents(var)
        new_in = pa + tuple(a for a in extra if a not in pa)
        c = m.mechanism(var).array  # (pa..., x)
        eta = sigma.eta.array        # (a..., x, x')
        k_pa = len(pa)
        # build c'(x'|new_in) = Σ_x η(x'|a, x) c(x|pa)
        shape = tuple(d.wires[w] for w in new_in) + (d.wires[var],)
        out = np.zeros(shape)
        pos = {w: k for k, w in enumerate(new_in)}
        for idx in np.ndindex(*shape[:-1]):
            pa_vals = idx[:k_pa]
            a_vals = tuple(idx[pos[a]] for a in extra)
            out[idx] = c[pa_vals] @ eta[a_vals]
        box = _box_name(m, f"widelocal[{var}]")
        return _replace_mechanisms(m, {var: (box, new_in, _raw(out))})
    if isinstance(sigma, Trim):
        keep, mor = trimmed(m.mechanism(var))
        pa = m.parents(var)
        box = _box_name(m, f"trim[{var}]")
        return _replace_mechanisms(m, {var: (box, tuple(pa[k] for k in keep), mor)})
    if isinstance(sigma, Pad):
        pa = m.parents(var)
        extra = tuple(s for s in sigma.extra if s not in pa)
        if var in extra:
            raise InterventionError("a variable cannot be padded with itself")
        if set(extra) & m.dag.descendants([var]):
            raise InterventionError("padding would create a cycle")
        c = m.mechanism(var).array
        shape = c.shape[:-1] + tuple(d.wires[s] for s in extra) + c.shape[-1:]
        arr = np.broadcast_to(
            c.reshape(c.shape[:-1] + (1,) * len(extra) + c.shape[-1:]), shape).copy()
        box = _box_name(m, f"pad[{var}]")
        return _replace_mechanisms(m, {var: (box, pa + extra, _raw(arr))})
    if isinstance(sigma, Rewire):
        perm = dict(sigma.perm)
        if sorted(perm) != sorted(perm.values()):
            raise InterventionError("rewiring needs a permutation of the rewired variables")
        updates = {}
        for xi, src in perm.items():
            f = sigma.maps.get(xi)
            c = m.mechanism(src)
            if f is None:
                if d.wires[src] != d.wires[xi]:
                    raise InterventionError(f"rewiring {src} into {xi} needs a map")
                f = sem.identity(FinObject(((xi, d.wires[xi]),)))
            if not sem.classify(f).is_channel:
                raise InterventionError("rewiring maps must be channels")
            new = sem.compose(c, f.with_types(c.cod, f.cod))
            box = _box_name(m, f"rewire[{xi}<-{src}]")
            updates[xi] = (box, m.parents(src), new)
        return _replace_mechanisms(m, updates)
    raise InterventionError(f"unknown intervention {sigma!r}")


def _raw(arr) -> Morphism:
    """A morphism whose types are fixed up by :func:`_replace_mechanisms`."""
    arr = np.asarray(arr, dtype=float)
    dom = FinObject(tuple((f"i{k}", s) for k, s in enumerate(arr.shape[:-1])))
    cod = FinObject((("o", arr.shape[-1]),))
    return Morphism(dom, cod, arr)


def is_determinism_preserving(sigma) -> bool:
    """Do, Trim, Pad, Rewire-with-deterministic-maps keep an FCM functional."""
    if isinstance(sigma, (Do, Trim, Pad)):
        return True
    if isinstance(sigma, Rewire):
        return all(sem.classify(f).is_deterministic for f in sigma.maps.values())
    if isinstance(sigma, (Local, WideLocal)):
        return sem.classify(sigma.eta).is_deterministic
    if isinstance(sigma, Break):
        return sem.classify(sigma.state).is_sharp
    return False


# open models --------------------------------------------------------------------

def open_at(m: CausalModel, s: Iterable) -> CausalModel:
    """Remove the mechanisms of ``s`` and turn those variables into inputs."""
    s = [v for v in m.variables if v in set(s)]
    d = m.diagram
    nodes = tuple(n for n in d.nodes if n.output not in s)
    new_inputs = d.inputs + tuple(v for v in s if v not in d.inputs)
    interp = Interpretation({n.box: m.interp[n.box] for n in nodes})
    return CausalModel(d.with_changes(nodes=nodes, inputs=new_inputs), interp)


def boundary(m: CausalModel, a: Iterable, direction: str) -> CausalModel:
    """Internalise (hide) or externalise (expose) the variables ``a``."""
    a = list(a)
    d = m.diagram
    if direction == "internalise":
        if not set(a) <= set(d.outputs):
            raise ModelError("can only internalise outputs")
        outs = tuple(o for o in d.outputs if o not in set(a))
    elif direction == "externalise":
        if not set(a) <= set(m.variables):
            raise ModelError("can only externalise variables")
        outs = d.outputs + tuple(v for v in m.variables if v in set(a) and v not in d.outputs)
    else:
        raise ValueError(f"unknown direction {direction!r}")
    return m.with_outputs(outs)


def compose_models(m: CausalModel, n: CausalModel, mode: str = "sequential") -> CausalModel:
    """Sequential (``m`` then ``n``) or parallel composition of open models."""
    dm, dn = m.diagram, n.diagram
    if mode == "sequential":
        if tuple(dm.outputs) != tuple(dn.inputs):
            raise ModelError("outputs of the first model must match inputs of the second")
        for w in dn.inputs:
            if dm.wires[w] != dn.wires[w]:
                raise ModelError(f"cardinality mismatch on {w}")
        clash = (set(dm.wires) & set(dn.wires)) - set(dn.inputs)
        if clash:
            raise ModelError(f"variable names collide: {sorted(clash)}")
        wires = dict(dm.wires)
        wires.update(dn.wires)
        inputs, outputs = dm.inputs, dn.outputs
    elif mode == "parallel":
        clash = set(dm.wires) & set(dn.wires)
        if clash:
            raise ModelError(f"variable names collide: {sorted(clash)}")
        wires = dict(dm.wires)
        wires.update(dn.wires)
        inputs, outputs = dm.inputs + dn.inputs, dm.outputs + dn.outputs
    else:
        raise ValueError(f"unknown composition mode {mode!r}")
    interp = Interpretation(m.interp)
    for k, v in n.interp.items():
        if k in interp and not (interp[k].array.shape == v.array.shape
                                and np.array_equal(interp[k].array, v.array)):
            raise ModelError(f"box name {k} is used by both models")
        interp[k] = v
    ids = {x.id for x in dm.nodes}
    if ids & {x.id for x in dn.nodes}:
        raise ModelError("node ids collide")
    d = NetworkDiagram(wires, dm.nodes + dn.nodes, inputs, outputs,
                       types={**dm.types, **dn.types})
    return CausalModel(d, interp)


def identity_model(wires: Mapping) -> CausalModel:
    wires = dict(wires)
    names = tuple(wires)
    return CausalModel(NetworkDiagram(wires, (), names, names), Interpretation())


def world_label(var: str, j: int) -> str:
    return f"{var}#{j}"


def share_inputs(models: Sequence[CausalModel]) -> CausalModel:
    """Feed one copy of the common inputs into every model.

    With more than one model, every non-input variable of model ``j``
    (1-based) is relabelled ``X#j``.  Boxes keep their names when all
    models interpret them identically, and are tagged ``#j`` otherwise.
    """
    models = list(models)
    if not models:
        raise ModelError("need at least one model")
    first = models[0]
    for mm in models[1:]:
        if mm.inputs != first.inputs or any(mm.cards[w] != first.cards[w] for w in first.inputs):
            raise ModelError("shared models must have identical inputs")
    if len(models) == 1:
        return first
    inputs = first.inputs
    wires = {w: first.cards[w] for w in inputs}
    types = {w: first.diagram.types[w] for w in inputs}
    nodes, outputs, out_names = [], [], []
    interp = Interpretation()
    box_owner = {}
    for j, mm in enumerate(models, start=1):
        d = mm.diagram
        rename = {v: (v if v in inputs else world_label(v, j)) for v in d.wires}
        for v, lab in rename.items():
            if v not in inputs:
                wires[lab] = d.wires[v]
                types[lab] = d.types[v]
        for n in d.nodes:
            mor = mm.interp[n.box]
            box = n.box
            prev = box_owner.get(box)
            if prev is not None and not (prev.array.shape == mor.array.shape
                                         and np.array_equal(prev.array, mor.array)):
                box = f"{n.box}#{j}"
            box_owner.setdefault(box, mor)
            interp[box] = mor
            nodes.append(Node(f"{n.id}#{j}", MECHANISM, box,
                              tuple(rename[w] for w in n.inputs), rename[n.output]))
        outputs.extend(rename[o] for o in d.outputs)
        out_names.extend(world_label(o, j) if o in inputs else rename[o] for o in d.outputs)
    d = NetworkDiagram(wires, tuple(nodes), inputs, tuple(outputs), types=types,
                       out_names=tuple(out_names))
    return CausalModel(d, interp)
