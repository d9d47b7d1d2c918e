"""Counterfactuals over parallel worlds.

A query lists worlds; each world intervenes on some variables, conditions
on others and exposes a set of outputs.  All worlds share the exogenous
noise of one functional model.  The diagram of a query is simplified by
cd-rewrites, split into fragments glued by latent roots, and identified
from interventional tables when every fragment sees consistent values.
"""
from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import semantics as sem
from .diagram import (GENERIC_STATE, MECHANISM, SHARP_EFFECT, SHARP_STATE, Interpretation,
                      NetworkDiagram, Node, apply_rewrite, evaluate)
from .expression import (Contraction, DataRef, NormalizeBox, PStarTables, SharpEffect,
                         SharpState, Term)
from .graph import Admg, rootify, topological_order
from .intervention import (Do, apply, compose_models, is_determinism_preserving, open_at,
                           share_inputs)
from .kernels import run_program
from .model import CausalModel, Fcm, function_box, noise_box, noise_wire
from .sampling import random_fcm, rng_of
from .semantics import UNIT, FinObject, Morphism

ENUMERATION_BUDGET = 10 ** 7


class CounterfactualError(ValueError):
    pass


class BudgetExceeded(CounterfactualError):
    pass


# query terms --------------------------------------------------------------------

@dataclass(frozen=True)
class WorldTerm:
    """One world: interventions ``do``, conditioning ``cond``, exposed ``outputs``."""

    do: dict = field(default_factory=dict)
    cond: dict = field(default_factory=dict)
    outputs: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "do", {str(k): int(v) for k, v in dict(self.do).items()})
        object.__setattr__(self, "cond", {str(k): int(v) for k, v in dict(self.cond).items()})
        object.__setattr__(self, "outputs", tuple(self.outputs))
        if set(self.cond) & set(self.outputs):
            raise CounterfactualError("a world cannot both condition on and output a variable")
        if len(set(self.outputs)) != len(self.outputs):
            raise CounterfactualError("world outputs repeat a variable")

    def variables(self) -> set:
        return set(self.do) | set(self.cond) | set(self.outputs)


@dataclass(frozen=True)
class CounterfactualTerms:
    """An ordered family of world terms.

    With ``validate`` the family must condition in one world and expose
    outputs in another; pass ``validate=False`` for plain multi-world
    distributions.
    """

    worlds: tuple
    validate: bool = True

    def __post_init__(self):
        worlds = tuple(w if isinstance(w, WorldTerm) else WorldTerm(**w) for w in self.worlds)
        object.__setattr__(self, "worlds", worlds)
        if not worlds:
            raise CounterfactualError("need at least one world")
        if self.validate and not any(
                worlds[j].cond and worlds[i].outputs
                for j in range(len(worlds)) for i in range(len(worlds)) if i != j):
            raise CounterfactualError(
                "counterfactual terms need conditioning in one world and outputs in another")

    def __len__(self):
        return len(self.worlds)

    def variables(self) -> set:
        return set().union(*(w.variables() for w in self.worlds))


def world_wire(var: str, j: int, k: int) -> str:
    """Label of ``var`` in world ``j`` (1-based) of ``k`` worlds."""
    return var if k == 1 else f"{var}#{j}"


# parallel worlds ----------------------------------------------------------------

def noise_model(fcm: Fcm) -> CausalModel:
    """The noise states ``λ_X`` as a closed model with outputs ``U_X``."""
    wires, nodes, interp = {}, [], Interpretation()
    for v in fcm.variables:
        u = noise_wire(v)
        wires[u] = fcm.noise_card(v)
        nodes.append(Node(noise_box(v), MECHANISM, noise_box(v), (), u))
        interp[noise_box(v)] = fcm.noises[v].with_types(cod=FinObject(((u, wires[u]),)))
    d = NetworkDiagram(wires, tuple(nodes), (), tuple(noise_wire(v) for v in fcm.variables))
    return CausalModel(d, interp)


def functional_part(fcm: Fcm) -> CausalModel:
    """The deterministic mechanisms as an open model with the noises as inputs."""
    noises = [noise_wire(v) for v in fcm.variables]
    return open_at(fcm.as_model(), noises).with_outputs(fcm.variables)


def parallel_worlds(fcm: Fcm, sigmas: Sequence, require_determinism: bool = True) -> CausalModel:
    """Intervened copies of the functional part sharing one noise source."""
    base = functional_part(fcm)
    worlds = []
    for sig in sigmas:
        sig = list(sig) if isinstance(sig, (list, tuple)) else [sig]
        if require_determinism and not all(is_determinism_preserving(s) for s in sig):
            raise CounterfactualError("parallel worlds need determinism-preserving interventions")
        worlds.append(apply(base, sig) if sig else base)
    shared = share_inputs(worlds)
    return compose_models(noise_model(fcm), shared, "sequential")


# counterfactual diagrams --------------------------------------------------------

@dataclass(frozen=True)
class CounterfactualResult:
    unnormalised: Morphism
    normalised: Morphism
    diagram: NetworkDiagram
    interp: Interpretation


def counterfactual_diagram(fcm: Fcm, terms: CounterfactualTerms) -> tuple:
    """``(diagram, interpretation)`` of the unnormalised counterfactual state."""
    k = len(terms)
    for w in terms.worlds:
        for v in w.variables():
            if v not in fcm.cards:
                raise CounterfactualError(f"unknown variable {v}")
        for v, x in list(w.do.items()) + list(w.cond.items()):
            if not 0 <= x < fcm.cards[v]:
                raise CounterfactualError(f"value {x} out of range for {v}")
    sigmas = [[Do(v, x) for v, x in w.do.items()] for w in terms.worlds]
    pw = parallel_worlds(fcm, sigmas)
    d = pw.diagram
    interp = Interpretation(pw.interp)
    lam_boxes = {noise_box(v) for v in fcm.variables}
    do_values = {}
    for j, w in enumerate(terms.worlds, start=1):
        for v, x in w.do.items():
            do_values[world_wire(v, j, k)] = x
    nodes = []
    for n in d.nodes:
        if n.box in lam_boxes:
            nodes.append(replace(n, kind=GENERIC_STATE))
        elif n.output in do_values and not n.inputs:
            nodes.append(Node(f"do:{n.output}", SHARP_STATE, None, (), n.output,
                              (do_values[n.output],)))
        else:
            nodes.append(n)
    outputs = []
    for j, w in enumerate(terms.worlds, start=1):
        for v, x in w.cond.items():
            lab = world_wire(v, j, k)
            nodes.append(Node(f"cond:{lab}", SHARP_EFFECT, None, (lab,), None, (x,)))
        outputs.extend(world_wire(v, j, k) for v in w.outputs)
    for b in list(interp):
        if b.startswith("do["):
            del interp[b]
    diag = NetworkDiagram(d.wires, tuple(nodes), (), tuple(outputs), types=d.types,
                          strict=False)
    return diag, interp


def counterfactual_state(fcm: Fcm, terms: CounterfactualTerms) -> CounterfactualResult:
    d, interp = counterfactual_diagram(fcm, terms)
    raw = evaluate(d, interp)
    return CounterfactualResult(raw, sem.normalize(raw), d, interp)


# brute-force oracle -------------------------------------------------------------

def _program(fcm: Fcm, terms: CounterfactualTerms):
    order = list(fcm.variables)
    n_noise = len(order)
    noise_cards = np.array([fcm.noise_card(v) for v in order], dtype=np.int64)
    probs, offsets = [], []
    off = 0
    for v in order:
        p = fcm.noises[v].array.ravel()
        offsets.append(off)
        probs.extend(p)
        off += len(p)
    k = len(terms)
    slot = {}
    for j in range(1, k + 1):
        for v in order:
            slot[(v, j)] = len(slot) + n_noise
    step_out, step_ptr, in_slots, in_strides, table_off, tables = [], [0], [], [], [], []
    for j, w in enumerate(terms.worlds, start=1):
        for v in order:
            step_out.append(slot[(v, j)])
            table_off.append(len(tables))
            if v in w.do:
                tables.append(w.do[v])
            else:
                tab = fcm.function_table(v)
                shape = tab.shape
                strides = np.cumprod((shape[1:] + (1,))[::-1])[::-1]
                ins = [slot[(p, j)] for p in fcm.parents[v]] + [order.index(v)]
                in_slots.extend(ins)
                in_strides.extend(int(s) for s in strides)
                tables.extend(int(x) for x in tab.ravel())
            step_ptr.append(len(in_slots))
    cond_slots, cond_vals, out_slots, out_cards = [], [], [], []
    for j, w in enumerate(terms.worlds, start=1):
        for v, x in w.cond.items():
            cond_slots.append(slot[(v, j)])
            cond_vals.append(x)
        for v in w.outputs:
            out_slots.append(slot[(v, j)])
            out_cards.append(fcm.cards[v])
    out_strides = [int(np.prod(out_cards[i + 1:])) for i in range(len(out_cards))]
    i64 = lambda xs: np.asarray(xs, dtype=np.int64)
    return dict(noise_cards=noise_cards, noise_probs=np.asarray(probs, dtype=float),
                noise_offsets=i64(offsets), step_out=i64(step_out), step_ptr=i64(step_ptr),
                step_in_slots=i64(in_slots), step_in_strides=i64(in_strides),
                step_table_off=i64(table_off), tables=i64(tables), cond_slots=i64(cond_slots),
                cond_vals=i64(cond_vals), out_slots=i64(out_slots), out_strides=i64(out_strides),
                n_slots=n_noise + len(slot), out_size=int(np.prod(out_cards))), out_cards


def evaluate_counterfactual(fcm: Fcm, terms: CounterfactualTerms, normalised: bool = True,
                            budget: int = ENUMERATION_BUDGET, kernel=None) -> Morphism:
    """Enumerate every noise assignment and push it through all worlds."""
    total = 1
    for v in fcm.variables:
        total *= fcm.noise_card(v)
    if total > budget:
        raise BudgetExceeded(f"{total} noise assignments exceed the budget of {budget}")
    prog, out_cards = _program(fcm, terms)
    acc = np.asarray((kernel or run_program)(**prog), dtype=float)
    k = len(terms)
    names = [world_wire(v, j, k) for j, w in enumerate(terms.worlds, start=1) for v in w.outputs]
    cod = FinObject(tuple(zip(names, out_cards)))
    raw = Morphism(UNIT, cod, acc.reshape(cod.cards), check=False)
    return sem.normalize(raw) if normalised else raw


# simplification -----------------------------------------------------------------

def _apply(d, rule, site):
    res = apply_rewrite(d, rule, site)
    return res.diagram, res.applied


def _fall_through(d: NetworkDiagram) -> NetworkDiagram:
    changed = True
    while changed:
        changed = False
        uses = {}
        for n in d.nodes:
            for w in n.inputs:
                uses[w] = uses.get(w, 0) + 1
        for w in d.outputs:
            uses[w] = uses.get(w, 0) + 1
        for n in d.nodes:
            if n.output is not None and not uses.get(n.output) and \
                    n.kind in (MECHANISM, SHARP_STATE, GENERIC_STATE):
                d, ok = _apply(d, "discard_fallthrough", n.id)
                if ok:
                    d, _ = _apply(d, "drop_discarded_copy_leg", n.output)
                    changed = True
                    break
    return d


def _split_effects(d: NetworkDiagram, wires: Iterable | None = None) -> NetworkDiagram:
    wires = None if wires is None else set(wires)
    changed = True
    while changed:
        changed = False
        for n in d.nodes:
            if n.kind != SHARP_EFFECT or (wires is not None and n.inputs[0] not in wires):
                continue
            d, ok = _apply(d, "sharp_effect_split", n.id)
            if ok:
                changed = True
                break
    return d


def _merge_copies(d: NetworkDiagram, box: str) -> NetworkDiagram:
    changed = True
    while changed:
        changed = False
        same = sorted((n.id for n in d.nodes if n.kind == MECHANISM and n.box == box))
        for a, b in itertools.combinations(same, 2):
            d, ok = _apply(d, "copy_through_deterministic", (a, b))
            if ok:
                changed = True
                break
    return d


def _absorb_all(d: NetworkDiagram) -> NetworkDiagram:
    for n in sorted(d.nodes, key=lambda n: n.id):
        if n.kind == GENERIC_STATE:
            d, _ = _apply(d, "absorb_noise_into_channel", n.id)
    return d


@dataclass(frozen=True)
class SimplifyTrace:
    """Intermediate diagrams: after steps 1-2, after each variable, after step 4."""

    steps: tuple


def simplify_cf(d: NetworkDiagram, variables: Sequence, order: Sequence,
                dag=None, trace: list | None = None) -> NetworkDiagram:
    """Discards fall through, effects split, copies merge in order, noise absorbs.

    ``order`` must be a topological order of ``dag`` (the functional
    model's graph) when one is supplied.
    """
    order = list(order)
    if sorted(order) != sorted(variables):
        raise CounterfactualError("the order must list every variable exactly once")
    if dag is not None:
        pos = {v: k for k, v in enumerate(order)}
        for a, b in dag.edges:
            if pos[a] >= pos[b]:
                raise CounterfactualError(f"order is not topological: {a} must precede {b}")
    d = _fall_through(d)
    d = _split_effects(d)
    if trace is not None:
        trace.append(("prepare", d))
    for v in order:
        d = _merge_copies(d, function_box(v))
        outs = {n.output for n in d.nodes if n.box == function_box(v)}
        d = _split_effects(d, outs)
        if trace is not None:
            trace.append((v, d))
    d = _absorb_all(d)
    if trace is not None:
        trace.append(("absorb", d))
    return d


def unabsorbed_noise(d: NetworkDiagram) -> list:
    return sorted(d.types[n.output] for n in d.nodes if n.kind == GENERIC_STATE)


def floating_scalars(d: NetworkDiagram) -> list:
    """Node-id sets of connected parts that expose no output."""
    parent = {n.id: n.id for n in d.nodes}

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    prod = {n.output: n.id for n in d.nodes if n.output is not None}
    for n in d.nodes:
        for w in n.inputs:
            if w in prod:
                parent[find(n.id)] = find(prod[w])
    groups = {}
    for n in d.nodes:
        groups.setdefault(find(n.id), set()).add(n.id)
    exposed = {find(prod[w]) for w in d.outputs if w in prod}
    return [frozenset(g) for r, g in sorted(groups.items()) if r not in exposed]


def scalar_gates(d: NetworkDiagram, interp: Mapping) -> list:
    """Value of every floating scalar; a zero gate zeroes the whole state."""
    out = []
    for grp in floating_scalars(d):
        sub = d.with_changes(nodes=tuple(n for n in d.nodes if n.id in grp), outputs=(),
                             out_names=None)
        out.append((grp, evaluate(sub, interp).scalar()))
    return out


# fragments ----------------------------------------------------------------------

@dataclass(frozen=True)
class RFragment:
    """Mechanism nodes glued by latent roots, with their boundary wires.

    ``sharp_inputs`` are wires fed by sharp states, ``inputs`` the other
    incoming wires, ``effects`` outgoing wires closed by sharp effects and
    ``outputs`` the remaining outgoing wires.
    """

    nodes: tuple
    observed: tuple
    roots: tuple
    sharp_inputs: tuple
    inputs: tuple
    effects: tuple
    outputs: tuple


def r_fragments(d: NetworkDiagram, a: Admg, roots: Iterable) -> list:
    roots = set(roots)
    obs = set(a.vertices)
    mech = [n for n in d.nodes if n.kind == MECHANISM]
    for n in mech:
        t = d.types[n.output]
        if t not in obs and t not in roots:
            raise CounterfactualError(f"mechanism for {t} is neither observed nor a root")
    for n in d.nodes:
        if n.kind in (SHARP_STATE, SHARP_EFFECT):
            w = n.output if n.kind == SHARP_STATE else n.inputs[0]
            if d.types[w] not in obs:
                raise CounterfactualError("constants must live on observed wires")
        if n.kind == GENERIC_STATE:
            raise CounterfactualError("fragments need every noise absorbed")
    parent = {n.id: n.id for n in mech}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    root_nodes = {n.output: n.id for n in mech if d.types[n.output] in roots}
    for n in mech:
        for w in n.inputs:
            if w in root_nodes:
                parent[find(n.id)] = find(root_nodes[w])
    groups = {}
    for n in mech:
        groups.setdefault(find(n.id), []).append(n)
    prod = {n.output: n for n in d.nodes if n.output is not None}
    readers = {}
    for n in d.nodes:
        for w in n.inputs:
            readers.setdefault(w, []).append(n)
    out = []
    for _, members in sorted(groups.items(), key=lambda kv: min(n.id for n in kv[1])):
        ids = {n.id for n in members}
        produced = {n.output for n in members}
        sharp_in, other_in = [], []
        for n in members:
            for w in n.inputs:
                if w in produced:
                    continue
                p = prod.get(w)
                lst = sharp_in if p is not None and p.kind == SHARP_STATE else other_in
                if w not in lst:
                    lst.append(w)
        effects, outputs = [], []
        for n in members:
            w = n.output
            if d.types[w] in roots:
                continue
            ext = [r for r in readers.get(w, []) if r.id not in ids]
            if any(r.kind == SHARP_EFFECT for r in ext):
                effects.append(w)
            if any(r.kind != SHARP_EFFECT for r in ext) or w in d.outputs:
                outputs.append(w)
        out.append(RFragment(
            tuple(sorted(ids)),
            tuple(sorted(d.types[n.output] for n in members if d.types[n.output] in obs)),
            tuple(sorted(d.types[n.output] for n in members if d.types[n.output] in roots)),
            tuple(sharp_in), tuple(other_in), tuple(effects), tuple(outputs)))
    return out


# identification -----------------------------------------------------------------

@dataclass(frozen=True)
class CfFail:
    """Identification failed for the stated reason (not a proof of non-identifiability)."""

    reason: str
    detail: str = ""

    def __bool__(self):
        return False


@dataclass(frozen=True)
class CfIdentified:
    expression: Term
    diagram: NetworkDiagram
    fragments: tuple
    rewrites: tuple = ()

    def __bool__(self):
        return True


def structural_fcm(a: Admg, cards: Mapping, seed: int = 0, method: str = "rho_tilde") -> tuple:
    """A seeded functional model on the rootification of ``a``.

    Identification only uses its wiring; its numbers never reach the output.
    """
    dag, roots = rootify(a, method)
    full = {v: int(cards[v]) for v in a.vertices}
    for r in roots:
        full[r] = 2
    fcm = random_fcm(rng_of(seed), dag, full, noise_card=2, outputs=a.vertices)
    return fcm, dag, roots


def _sharp_value(d, w):
    p = d.producer(w)
    if p is not None and p.kind == SHARP_STATE:
        return p.value[0]
    return None


def _effect_values(d, w):
    return [n.value[0] for n in d.nodes if n.kind == SHARP_EFFECT and n.inputs[0] == w]


def _redirect_reads(d: NetworkDiagram, node_ids: set, old: str, new: str) -> NetworkDiagram:
    nodes = tuple(replace(n, inputs=tuple(new if (w == old and n.id in node_ids) else w
                                          for w in n.inputs)) for n in d.nodes)
    return d.with_changes(nodes=nodes)


def _drop_unused_states(d: NetworkDiagram) -> NetworkDiagram:
    used = {w for n in d.nodes for w in n.inputs} | set(d.outputs)
    dead = [n for n in d.nodes if n.kind == SHARP_STATE and n.output not in used]
    for n in dead:
        d, _ = _apply(d, "discard_fallthrough", n.id)
        d, _ = _apply(d, "drop_discarded_copy_leg", n.output)
    return d


def _check_fragment(d: NetworkDiagram, frag: RFragment, obs: set):
    """Value-agreement checks; returns ``(diagram, rewrites)`` or a :class:`CfFail`."""
    members = [d.node(i) for i in frag.nodes]
    ids = set(frag.nodes)
    rewrites = []
    seen_types = set()
    for n in members:
        for w in n.inputs + ((n.output,) if n.output else ()):
            if d.types[w] in obs:
                seen_types.add(d.types[w])
    for x in sorted(seen_types):
        own = [n for n in members if d.types[n.output] == x]
        reads = [(n, w) for n in members for w in n.inputs
                 if d.types[w] == x and not (own and w == own[0].output)]
        if own:
            out_w = own[0].output
            effs = _effect_values(d, out_w)
            if not reads:
                continue
            vals = {_sharp_value(d, w) for _, w in reads}
            if len(effs) == 1 and vals == {effs[0]}:
                # every other occurrence equals the conditioned value: read it from c_X
                for n, w in reads:
                    d = _redirect_reads(d, {n.id}, w, out_w)
                rewrites.append(("condition_through", x, frag.nodes))
                continue
            return CfFail("fragment_value_conflict",
                          f"{x} takes several values inside the fragment of {', '.join(frag.observed)}")
        wires = sorted({w for _, w in reads})
        if len(wires) <= 1:
            continue
        vals = [_sharp_value(d, w) for w in wires]
        if all(v is not None for v in vals) and len(set(vals)) == 1:
            keep = wires[0]
            for w in wires[1:]:
                d = _redirect_reads(d, ids, w, keep)
            rewrites.append(("merge_states", x, frag.nodes))
            continue
        return CfFail("fragment_value_conflict",
                      f"{x} enters the fragment of {', '.join(frag.observed)} with disagreeing values")
    return d, rewrites


def id_cf(a: Admg, terms: CounterfactualTerms, data: PStarTables | None = None,
          cards: Mapping | None = None, seed: int = 0, method: str = "rho_tilde"):
    """Identify a counterfactual from interventional tables, or fail with a reason.

    Returns :class:`CfIdentified` (whose ``expression`` evaluates against
    ``P_*``) or :class:`CfFail`.
    """
    if data is not None:
        cards = dict(data.roster)
    if cards is None:
        raise CounterfactualError("need the data tables or the cardinalities")
    obs = set(a.vertices)
    for v in terms.variables():
        if v not in obs:
            raise CounterfactualError(f"{v} is not a vertex of the graph")
    fcm, dag, roots = structural_fcm(a, cards, seed, method)
    d, _ = counterfactual_diagram(fcm, terms)
    d = simplify_cf(d, fcm.variables, topological_order(dag), dag)
    left = unabsorbed_noise(d)
    if left:
        return CfFail("unabsorbed_noise", "noise of " + ", ".join(left) + " is shared across worlds")
    rewrites = []
    frags = r_fragments(d, a, roots)
    for frag in frags:
        res = _check_fragment(d, frag, obs)
        if isinstance(res, CfFail):
            return res
        d, rw = res
        rewrites.extend(rw)
    d = _drop_unused_states(d)
    frags = r_fragments(d, a, roots)
    names = [v for v in a.vertices]
    roster = tuple((v, int(cards[v])) for v in names)
    factors = []
    for frag in frags:
        ins = frag.sharp_inputs + frag.inputs
        in_types = [d.types[w] for w in ins]
        if len(set(in_types)) != len(in_types):
            return CfFail("fragment_value_conflict", "a variable enters a fragment twice")
        outs = list(dict.fromkeys(frag.effects + frag.outputs))
        rename = {d.types[w]: w for w in list(ins) + outs}
        factors.append(DataRef.make(roster, in_types, [d.types[w] for w in outs], rename))
    for n in d.nodes:
        if n.kind == SHARP_STATE:
            factors.append(SharpState(n.output, d.wires[n.output], n.value[0]))
        elif n.kind == SHARP_EFFECT:
            factors.append(SharpEffect(n.inputs[0], d.wires[n.inputs[0]], n.value[0]))
    expr = NormalizeBox(Contraction(tuple(factors), d.outputs, d.out_names))
    return CfIdentified(expr, d, tuple(frags), tuple(rewrites))


# generalized counterfactuals ----------------------------------------------------

def generalized_counterfactual(fcm: Fcm, sigmas: Sequence, evidence: Sequence,
                               outputs: Sequence, mode: str = "from_effects",
                               experimental: bool = False) -> Morphism:
    """Update a parallel-worlds state on fuzzy per-world evidence.

    ``evidence[j]`` maps variables of world ``j`` to an effect (mode
    ``from_effects``: weight, then normalise) or a normalised state (mode
    ``from_states``: mix the sharp conditionals).  Mode ``mixed`` takes
    ``("effect", e)`` / ``("state", rho)`` pairs and needs ``experimental``.
    """
    if mode not in ("from_effects", "from_states", "mixed"):
        raise CounterfactualError(f"unknown mode {mode!r}")
    if mode == "mixed" and not experimental:
        raise CounterfactualError("mixed evidence is experimental; pass experimental=True")
    k = len(sigmas)
    if len(evidence) != k or len(outputs) != k:
        raise CounterfactualError("one evidence map and one output list per world")
    pw = parallel_worlds(fcm, sigmas, require_determinism=False)
    out_names = [world_wire(v, j, k) for j, outs in enumerate(outputs, start=1) for v in outs]
    effects, states = [], []
    for j, ev in enumerate(evidence, start=1):
        for v, item in ev.items():
            lab = world_wire(v, j, k)
            if mode == "mixed":
                kind, mor = item
            else:
                kind, mor = ("effect" if mode == "from_effects" else "state"), item
            arr = np.asarray(getattr(mor, "array", mor), dtype=float).ravel()
            if arr.size != pw.cards[lab]:
                raise CounterfactualError(f"evidence on {lab} has the wrong size")
            if kind == "effect":
                effects.append((lab, arr))
            elif kind == "state":
                states.append((lab, arr))
            else:
                raise CounterfactualError(f"unknown evidence kind {kind!r}")
    ev_names = [n for n, _ in effects + states]
    if len(set(ev_names)) != len(ev_names) or set(ev_names) & set(out_names):
        raise CounterfactualError("evidence atoms must be distinct and disjoint from the outputs")
    joint = _world_joint(pw, out_names + ev_names)
    if effects:
        eff = Morphism(joint.cod.sub([n for n, _ in effects]), UNIT,
                       _outer([a for _, a in effects]))
        joint = sem.soft_conditional(joint, [n for n, _ in effects], eff, "upper")
    if states:
        rho = Morphism(UNIT, joint.cod.sub([n for n, _ in states]),
                       _outer([a for _, a in states]))
        joint = sem.soft_conditional(joint, [n for n, _ in states], rho, "lower")
    return sem.permute_cod(joint, out_names)


def _world_joint(pw: CausalModel, labels: Sequence) -> Morphism:
    """Joint state of the listed world wires."""
    m = pw.with_outputs(labels)
    return evaluate(m.diagram, m.interp)


def _outer(arrays: Sequence) -> np.ndarray:
    return functools.reduce(np.multiply, np.ix_(*arrays))


def random_terms(rng, cards: Mapping, n_worlds: int | None = None, max_do: int = 1,
                 max_cond: int = 2, max_out: int = 1) -> CounterfactualTerms:
    """A random valid query over the variables of ``cards``."""
    rng = rng_of(rng)
    names = list(cards)
    k = n_worlds or int(rng.integers(2, 4))
    while True:
        worlds = []
        for _ in range(k):
            pool = list(rng.permutation(names))
            nd = int(rng.integers(0, max_do + 1))
            nc = int(rng.integers(0, max_cond + 1))
            no = int(rng.integers(0, max_out + 1))
            do = {v: int(rng.integers(cards[v])) for v in pool[:nd]}
            cond = {v: int(rng.integers(cards[v])) for v in pool[nd:nd + nc]}
            outs = tuple(pool[nd + nc:nd + nc + no])
            worlds.append(WorldTerm(do, cond, outs))
        try:
            return CounterfactualTerms(worlds)
        except CounterfactualError:
            continue
