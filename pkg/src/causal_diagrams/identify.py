"""Causal-effect identification.

The comb criterion: when no child of ``X`` shares a confounded component
with ``X``, the observed variables split as ``A, X, B, C`` and every
intervention on ``X`` is computable from the observational joint as

    P(a, x, b, c; η) = Σ_x' P(a) P(x'|a) η(x|a, x') P(b|a, x) P(c|a, x', b).

Partitions are proposed combinatorially and accepted only after the
formula checks out numerically against mechanism surgery.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import semantics as sem
from .expression import (Conditional, Constant, DataRef, Marginal, PStarTables, SharpState,
                         Tensor, Term, build_network, evaluate_expression)
from .graph import Admg, c_component, c_condition, latent_projection, rootify
from .intervention import Break, Do, Local, WideLocal, apply, open_at
from .model import CausalModel, channel_of, output_state
from .sampling import random_cbn, rng_of
from .semantics import UNIT, FinObject, Morphism

VALIDATION_TRIALS = 10
VALIDATION_TOL = 1e-7
EXHAUSTIVE_LIMIT = 10


class IdentificationError(ValueError):
    pass


# data tables from models -------------------------------------------------------

def pstar_tables(m: CausalModel, observed: Sequence | None = None,
                 dosets: Iterable | None = None) -> PStarTables:
    """``P(O \\ X ; do X)`` for the requested do-sets (default: all of them)."""
    observed = tuple(m.outputs if observed is None else observed)
    cards = m.cards
    roster = tuple((v, cards[v]) for v in observed)
    if dosets is None:
        dosets = [s for k in range(len(observed) + 1)
                  for s in itertools.combinations(observed, k)]
    tables = {}
    for s in dosets:
        s = frozenset(s)
        xs = [v for v in observed if v in s]
        rest = [v for v in observed if v not in s]
        opened = open_at(m, xs).with_outputs(rest)
        ch = channel_of(opened)
        tables[s] = sem.permute_dom(ch, xs)
    return PStarTables(roster, tables)


def observational_tables(m: CausalModel, observed: Sequence | None = None) -> PStarTables:
    return pstar_tables(m, observed, dosets=[()])


# ground truth -------------------------------------------------------------------

def truncated_factorization(m: CausalModel, doset: Mapping) -> Morphism:
    """Post-intervention output state by mechanism surgery."""
    return output_state(apply(m, [Do(v, int(x)) for v, x in doset.items()]))


def truncated_factorization_product(m: CausalModel, doset: Mapping) -> Morphism:
    """The same quantity by the product formula, enumerated entry by entry.

    ``Π_{V ∉ X} P(v | pa(v)) · Π_{V ∈ X} [v = x]`` summed over the
    variables that are not outputs.
    """
    order = list(m.variables)
    cards = m.cards
    pos = {v: k for k, v in enumerate(order)}
    nodes = list(m.diagram.nodes)
    joint = np.zeros(tuple(cards[v] for v in order))
    for vals in itertools.product(*[range(cards[v]) for v in order]):
        p = 1.0
        for n in nodes:
            v = n.output
            if v in doset:
                p *= 1.0 if vals[pos[v]] == doset[v] else 0.0
            else:
                idx = tuple(vals[pos[w]] for w in n.inputs) + (vals[pos[v]],)
                p *= m.interp[n.box].array[idx]
            if p == 0.0:
                break
        joint[vals] = p
    full = Morphism(UNIT, FinObject(tuple((v, cards[v]) for v in order)), joint, check=False)
    return sem.marginalize(full, m.outputs)


def general_intervened_state(m: CausalModel, x: str, eta: Morphism) -> Morphism:
    """Ground truth for an η that reads the natural value of ``x`` (and ``A``)."""
    extra = tuple(n for n in eta.dom.names if n != x)
    if extra:
        if x not in eta.dom.names:
            # η ignores the natural value: read it and discard
            xo = FinObject(((x, m.cards[x]),))
            eta = sem.compose(sem.tensor(sem.identity(eta.dom), sem.discard(xo)), eta)
        return output_state(apply(m, WideLocal(x, extra, eta)))
    if eta.dom.is_unit:
        return output_state(apply(m, Break(x, eta)))
    return output_state(apply(m, Local(x, eta)))


# random interpretations ---------------------------------------------------------

def random_rootified_model(a: Admg, rng, max_card: int = 3, method: str = "rho_tilde",
                           cards: Mapping | None = None, root_card: int | None = None,
                           sparsity: float = 0.0) -> CausalModel:
    """A random CBN on a rootification of ``a`` whose outputs are ``a``'s vertices."""
    rng = rng_of(rng)
    dag, roots = rootify(a, method)
    cards = dict(cards or {})
    for v in dag.vertices:
        if v not in cards:
            if v in roots and root_card is not None:
                cards[v] = root_card
            else:
                cards[v] = int(rng.integers(2, max_card + 1))
    return random_cbn(rng, dag, cards, sparsity=sparsity, outputs=a.vertices)


# the comb partition -------------------------------------------------------------

@dataclass(frozen=True)
class JkzPartition:
    """Observed variables other than ``x`` split into the comb blocks."""

    x: str
    a: tuple
    b: tuple
    c: tuple

    def blocks(self) -> tuple:
        return self.a, self.b, self.c


def _ordered(a: Admg, vs) -> tuple:
    vs = set(vs)
    return tuple(v for v in a.vertices if v in vs)


def _candidate(a: Admg, x: str):
    dag = a.dag
    desc = dag.descendants([x]) - {x}
    conf = c_component(a, x) & desc
    c = dag.descendants(conf) if conf else set()
    b = desc - c
    rest = set(a.vertices) - desc - {x}
    if set(a.children(x)) & c:
        return None
    return JkzPartition(x, _ordered(a, rest), _ordered(a, b), _ordered(a, c))


def _exhaustive(a: Admg, x: str):
    dag = a.dag
    desc = dag.descendants([x]) - {x}
    kids = set(a.children(x))
    free_desc = sorted(desc - kids)
    nondesc = sorted(set(a.vertices) - desc - {x})
    # descendants pick B or C, non-descendants pick A or C; fewer C first
    choices = [(v, ("B", "C")) for v in free_desc] + [(v, ("A", "C")) for v in nondesc]
    combos = list(itertools.product(*[opts for _, opts in choices]))
    combos.sort(key=lambda t: sum(1 for s in t if s == "C"))
    for combo in combos:
        blk = {"A": set(), "B": set(kids), "C": set()}
        for (v, _), s in zip(choices, combo):
            blk[s].add(v)
        yield JkzPartition(x, _ordered(a, blk["A"]), _ordered(a, blk["B"]), _ordered(a, blk["C"]))


def check_partition(a: Admg, p: JkzPartition, trials: int = VALIDATION_TRIALS,
                    seed: int = 0, tol: float = VALIDATION_TOL, method: str = "rho_tilde") -> bool:
    """Compare the comb formula with surgery on random rootified models."""
    rng = np.random.default_rng(seed)
    roster_names = a.vertices
    for _ in range(trials):
        m = random_rootified_model(a, rng, method=method)
        data = observational_tables(m)
        card = m.cards[p.x]
        value = int(rng.integers(card))
        expr = jkz_expression(data.roster, p, Do(p.x, value))
        got = evaluate_expression(expr, data)
        want = truncated_factorization(m, {p.x: value})
        got = sem.permute_cod(got, roster_names)
        if not got.allclose(want, tol):
            return False
    return True


def jkz_partition(a: Admg, x: str, validate: bool = True, seed: int = 0,
                  method: str = "rho_tilde") -> JkzPartition | None:
    """A comb partition for ``x``, or ``None`` when the c-component condition fails.

    The structural candidate is tried first; if it does not validate, small
    graphs fall back to an exhaustive search over block assignments.
    """
    if x not in a.vertices:
        raise IdentificationError(f"unknown vertex {x}")
    if not c_condition(a, x):
        return None
    cand = _candidate(a, x)
    if cand is not None and (not validate or check_partition(a, cand, seed=seed, method=method)):
        return cand
    if len(a.vertices) > EXHAUSTIVE_LIMIT:
        return None
    for p in _exhaustive(a, x):
        if check_partition(a, p, trials=2, seed=seed, method=method) and \
                check_partition(a, p, seed=seed + 1, method=method):
            return p
    return None


def _fresh(name: str, taken) -> str:
    out = name
    while out in taken:
        out += "'"
    return out


def jkz_expression(roster: Sequence, p: JkzPartition, eta) -> Term:
    """The comb formula as an expression over the observational table.

    ``eta`` is ``Do(x, value)`` (or a bare value) or a channel whose
    domain names are drawn from ``A`` and ``x`` (the natural value of
    ``x``) and whose codomain is ``x``.
    """
    roster = tuple(roster)
    names = [n for n, _ in roster]
    cards = dict(roster)
    x = p.x
    if set(p.a) | set(p.b) | set(p.c) | {x} != set(names) or \
            len(p.a) + len(p.b) + len(p.c) + 1 != len(names):
        raise IdentificationError("partition does not cover the roster exactly once")
    xp = _fresh(x + "'", set(names))
    a, b, c = list(p.a), list(p.b), list(p.c)
    boxes = []
    if a:
        boxes.append(DataRef.make(roster, (), a))
    boxes.append(Conditional(DataRef.make(roster, (), a + [x], {x: xp}), tuple(a)))
    if isinstance(eta, Do):
        eta = eta.value
    if isinstance(eta, (int, np.integer)):
        boxes.append(SharpState(x, cards[x], int(eta)))
    else:
        extra = [n for n in eta.dom.names if n != x]
        if not set(extra) <= set(a):
            raise IdentificationError("η may only read the natural value of x and variables in A")
        if eta.cod.names != (x,):
            eta = eta.with_types(cod=FinObject(((x, cards[x]),)))
        dom = eta.dom.rename({x: xp}) if x in eta.dom.names else eta.dom
        boxes.append(Constant("eta", eta.with_types(dom=dom)))
    if b:
        boxes.append(Conditional(DataRef.make(roster, (), a + [x] + b), tuple(a + [x])))
    if c:
        boxes.append(Conditional(DataRef.make(roster, (), a + [x] + b + c, {x: xp}),
                                 tuple(a + [xp] + b)))
    return build_network(boxes, names)


def effect_expression(a: Admg, x: str, eta, cards: Mapping, seed: int = 0,
                      method: str = "rho_tilde"):
    p = jkz_partition(a, x, seed=seed, method=method)
    if p is None:
        return None
    roster = tuple((v, int(cards[v])) for v in a.vertices)
    return p, jkz_expression(roster, p, eta)


# total variation helpers --------------------------------------------------------

def total_variation(p: Morphism, q: Morphism, mask: np.ndarray | None = None) -> float:
    """Largest total-variation distance between matching columns."""
    mp, mq = p.matrix, q.matrix
    tv = 0.5 * np.abs(mp - mq).sum(axis=1)
    if mask is not None:
        tv = tv[np.asarray(mask).ravel()]
    return float(tv.max(initial=0.0))


# worked examples ----------------------------------------------------------------

FIG71A = Admg(("X", "Z", "Y"), frozenset({("X", "Z"), ("Z", "Y")}), frozenset({("X", "Z")}))
FIG71B = Admg(("X", "Z", "Y"), frozenset({("X", "Z")}), frozenset({("X", "Z"), ("Y", "Z")}))
FRONT_DOOR = Admg(("S", "T", "L"), frozenset({("S", "T"), ("T", "L")}), frozenset({("L", "S")}))
EX74 = Admg(("W1", "X", "Y1", "W2", "Y2"),
            frozenset({("W1", "X"), ("X", "Y1")}),
            frozenset({("W1", "Y2"), ("W2", "X"), ("W2", "Y1")}))


def conditional_effect(m: CausalModel, x: str, value: int, target: Sequence, given: Sequence):
    """``P(target | given ; do(x=value))`` and the gate scalars ``P(given ; do)``."""
    st = truncated_factorization(m, {x: value})
    joint = sem.marginalize(st, list(given) + list(target))
    gate = sem.marginalize(st, list(given))
    return sem.conditional(joint, given), gate


def ex74_expression(roster: Sequence, value: int, seed: int = 0) -> Term:
    """``P(Y1, Y2 ; do x)`` for the two-component example graph.

    Scripted: ``X`` fails the condition in the full graph, so project the
    rootified graph onto ``{W1, X, Y1}``, apply the comb formula there,
    keep ``Y1`` and tensor with the untouched marginal ``P(Y2)``.
    """
    a = EX74
    if c_condition(a, "X"):
        raise IdentificationError("the example is meant to fail the condition globally")
    dag, _ = rootify(a, "rho")
    sub = latent_projection(dag, ("W1", "X", "Y1"))
    p = jkz_partition(sub, "X", seed=seed, method="rho")
    if p is None:
        raise IdentificationError("the projected graph should satisfy the condition")
    cards = dict(roster)
    sub_roster = tuple((v, cards[v]) for v in sub.vertices)
    left = jkz_expression(sub_roster, p, Do("X", value))
    return Tensor(Marginal(left, ("Y1",)), DataRef.make(roster, (), ("Y2",)))
