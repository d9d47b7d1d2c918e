"""Seeded random generators for graphs, morphisms and models."""
from __future__ import annotations

import itertools
import string

import numpy as np

from .graph import Admg, Dag
from .model import CausalModel, Fcm
from .semantics import UNIT, FinObject, Morphism

NAMES = tuple(string.ascii_uppercase)


def rng_of(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.default_rng(seed_or_rng)


def vertex_names(n: int) -> tuple:
    if n <= len(NAMES):
        return NAMES[:n]
    return tuple(f"V{k:02d}" for k in range(n))


def random_dag(rng, n: int, p: float = 0.4, names=None) -> Dag:
    """Edges only go forward along a random permutation of the names."""
    rng = rng_of(rng)
    names = tuple(names or vertex_names(n))
    order = list(rng.permutation(n))
    edges = set()
    for i, j in itertools.combinations(range(n), 2):
        if rng.random() < p:
            edges.add((names[order[i]], names[order[j]]))
    return Dag(names, frozenset(edges))


def random_dag_bounded(rng, n: int, max_parents: int = 2, p: float = 0.5, names=None) -> Dag:
    rng = rng_of(rng)
    names = tuple(names or vertex_names(n))
    order = list(rng.permutation(n))
    edges = set()
    for j in range(1, n):
        cands = [i for i in range(j) if rng.random() < p]
        rng.shuffle(cands)
        for i in cands[:max_parents]:
            edges.add((names[order[i]], names[order[j]]))
    return Dag(names, frozenset(edges))


def random_admg(rng, n: int, p_dir: float = 0.4, p_bi: float = 0.3, names=None) -> Admg:
    rng = rng_of(rng)
    dag = random_dag(rng, n, p_dir, names)
    bi = set()
    for a, b in itertools.combinations(dag.vertices, 2):
        if rng.random() < p_bi:
            bi.add((a, b))
    return Admg(dag.vertices, dag.edges, frozenset(bi))


def random_distribution(rng, shape, concentration: float = 1.0, sparsity: float = 0.0) -> np.ndarray:
    """Dirichlet rows over the last axis, optionally with exact zeros."""
    rng = rng_of(rng)
    shape = tuple(shape)
    arr = rng.dirichlet(np.full(shape[-1], concentration), size=shape[:-1])
    if sparsity > 0:
        mask = rng.random(arr.shape) < sparsity
        arr = np.where(mask, 0.0, arr)
        sums = arr.sum(axis=-1, keepdims=True)
        # keep every row a distribution
        empty = (sums[..., 0] == 0)
        arr[empty, 0] = 1.0
        arr = arr / arr.sum(axis=-1, keepdims=True)
    return arr.reshape(shape)


def random_cards(rng, names, max_card: int = 3, min_card: int = 2) -> dict:
    rng = rng_of(rng)
    return {v: int(rng.integers(min_card, max_card + 1)) for v in names}


def random_cbn(rng, dag: Dag, cards: dict | None = None, max_card: int = 3,
               sparsity: float = 0.0, outputs=None) -> CausalModel:
    rng = rng_of(rng)
    cards = cards or random_cards(rng, dag.vertices, max_card)
    cpts = {}
    for v in dag.vertices:
        shape = tuple(cards[p] for p in dag.parents(v)) + (cards[v],)
        cpts[v] = random_distribution(rng, shape, sparsity=sparsity)
    return CausalModel.from_cpts(dag, cards, cpts, (), outputs)


def random_morphism(rng, dom: FinObject, cod: FinObject, zero_column_prob: float = 0.2,
                    zero_entry_prob: float = 0.1, scale: bool = True) -> Morphism:
    """A nonnegative tensor with some zero columns and scattered zeros."""
    rng = rng_of(rng)
    mat = rng.random((dom.size, cod.size))
    mat[rng.random(mat.shape) < zero_entry_prob] = 0.0
    mat[rng.random(dom.size) < zero_column_prob, :] = 0.0
    if scale:
        mat *= rng.uniform(0.1, 3.0, size=(dom.size, 1))
    return Morphism(dom, cod, mat.reshape(dom.cards + cod.cards))


def random_channel(rng, dom: FinObject, cod: FinObject, sparsity: float = 0.0) -> Morphism:
    arr = random_distribution(rng, (dom.size, cod.size), sparsity=sparsity)
    return Morphism(dom, cod, arr.reshape(dom.cards + cod.cards))


def random_deterministic(rng, dom: FinObject, cod: FinObject) -> Morphism:
    rng = rng_of(rng)
    mat = np.zeros((dom.size, cod.size))
    mat[np.arange(dom.size), rng.integers(0, cod.size, dom.size)] = 1.0
    return Morphism(dom, cod, mat.reshape(dom.cards + cod.cards))


def random_state(rng, obj: FinObject, support: float = 1.0) -> Morphism:
    """A normalised state; ``support < 1`` zeroes a random share of entries."""
    rng = rng_of(rng)
    arr = rng.dirichlet(np.ones(obj.size))
    if support < 1.0:
        mask = rng.random(obj.size) >= support
        if mask.all():
            mask[rng.integers(obj.size)] = False
        arr = np.where(mask, 0.0, arr)
        arr = arr / arr.sum()
    return Morphism(UNIT, obj, arr.reshape(obj.cards))


def random_fcm(rng, dag: Dag, cards: dict | None = None, noise_card: int | None = None,
               outputs=None) -> Fcm:
    """Deterministic mechanisms driven by random noise states.

    ``noise_card`` defaults to 3; every ``f_X`` is a random function table.
    """
    rng = rng_of(rng)
    cards = cards or {v: 2 for v in dag.vertices}
    order = list(dag.vertices)
    from .graph import topological_order
    order = topological_order(dag)
    functions, noises, parents = {}, {}, {}
    for v in order:
        pa = tuple(dag.parents(v))
        k = noise_card or 3
        u = FinObject(((f"U_{v}", k),))
        dom = FinObject(tuple((p, cards[p]) for p in pa)).tensor(u)
        functions[v] = random_deterministic(rng, dom, FinObject(((v, cards[v]),)))
        noises[v] = Morphism(UNIT, u, rng.dirichlet(np.ones(k)))
        parents[v] = pa
    return Fcm(tuple(order), parents, cards, functions, noises, outputs or tuple(order))
