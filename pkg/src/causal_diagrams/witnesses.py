"""Pairs of models that agree on P(O) but disagree on an effect.

Both graphs contain a confounded edge ``X -> Z``.  In the rootified model
``X`` copies its root, so the observational joint only ever sees the
mechanism of ``Z`` on the diagonal ``root = x``.  The off-diagonal entries
are free: two models sharing the diagonal produce the same ``P(O)`` while
an intervention on ``X`` reads the off-diagonal part.  A seeded search
(random restarts, then local perturbation) picks entries that push the
two interventional answers apart.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import semantics as sem
from .graph import rootify
from .identify import FIG71A, FIG71B, conditional_effect, truncated_factorization
from .model import CausalModel, output_state

GATE = 0.05


@dataclass(frozen=True)
class WitnessFamily:
    name: str
    n_shared: int
    n_free: int
    build: Callable
    target: Callable
    description: str


def _bern(p: float) -> list:
    return [1.0 - p, p]


def _sigmoid(v):
    return 1.0 / (1.0 + np.exp(-np.asarray(v, dtype=float)))


def _build_71a(shared, free) -> CausalModel:
    dag, roots = rootify(FIG71A, "rho")
    (r,) = roots
    pr, = shared[:1]
    z_diag = shared[1:3]          # P(Z=1 | x, r=x)
    y = shared[3:5]               # P(Y=1 | z)
    cz = np.zeros((2, 2, 2))      # (r, x, z) in sorted-parent order
    for rv in range(2):
        for xv in range(2):
            p = z_diag[xv] if rv == xv else free[xv]
            cz[rv, xv] = _bern(p)
    cpts = {r: np.array(_bern(pr)), "X": np.eye(2),
            "Z": cz, "Y": np.array([_bern(y[0]), _bern(y[1])])}
    return CausalModel.from_cpts(dag, {v: 2 for v in dag.vertices}, cpts, (), FIG71A.vertices,
                                 parent_order={"X": (r,), "Z": (r, "X"), "Y": ("Z",)})


def _target_71a(m: CausalModel):
    """``P(Y ; do X)`` as a channel ``X -> Y``."""
    cols = [sem.marginalize(truncated_factorization(m, {"X": x}), ["Y"]).array for x in range(2)]
    return np.array(cols), None


def _build_71b(shared, free) -> CausalModel:
    dag, roots = rootify(FIG71B, "rho")
    r_xz, r_yz = sorted(roots)
    p1, p2 = shared[0], shared[1]
    diag = shared[2:6].reshape(2, 2)      # (x, r2) with r1 = x
    off = np.asarray(free).reshape(2, 2)   # (x, r2) with r1 != x
    cz = np.zeros((2, 2, 2, 2))            # (r1, r2, x, z)
    for r1 in range(2):
        for r2 in range(2):
            for xv in range(2):
                p = diag[xv, r2] if r1 == xv else off[xv, r2]
                cz[r1, r2, xv] = _bern(p)
    cpts = {r_xz: np.array(_bern(p1)), r_yz: np.array(_bern(p2)), "X": np.eye(2),
            "Y": np.eye(2), "Z": cz}
    return CausalModel.from_cpts(dag, {v: 2 for v in dag.vertices}, cpts, (), FIG71B.vertices,
                                 parent_order={"X": (r_xz,), "Y": (r_yz,),
                                               "Z": (r_xz, r_yz, "X")})


def _target_71b(m: CausalModel):
    """``P(Y | Z ; do X)`` as a channel ``(X, Z) -> Y`` plus its gates."""
    cols, gates = [], []
    for x in range(2):
        cond, gate = conditional_effect(m, "X", x, ["Y"], ["Z"])
        cols.extend(cond.matrix)
        gates.extend(gate.array)
    return np.array(cols), np.array(gates)


FAMILIES = {
    "fig71a": WitnessFamily("fig71a", 5, 2, _build_71a, _target_71a, "P(Y ; do X)"),
    "fig71b": WitnessFamily("fig71b", 6, 4, _build_71b, _target_71b, "P(Y | Z ; do X)"),
}


def target_distance(fam: WitnessFamily, m1: CausalModel, m2: CausalModel) -> float:
    t1, g1 = fam.target(m1)
    t2, g2 = fam.target(m2)
    tv = 0.5 * np.abs(t1 - t2).sum(axis=1)
    if g1 is not None:
        ok = (g1 >= GATE) & (g2 >= GATE)
        tv = tv[ok]
    return float(tv.max(initial=0.0))


def observational_gap(m1: CausalModel, m2: CausalModel) -> float:
    return output_state(m1).max_diff(output_state(m2))


def _models(fam, vec):
    p = _sigmoid(vec)
    shared = p[:fam.n_shared]
    f1 = p[fam.n_shared:fam.n_shared + fam.n_free]
    f2 = p[fam.n_shared + fam.n_free:]
    return fam.build(shared, f1), fam.build(shared, f2)


def search_witness(name: str, seed: int = 0, restarts: int = 4, steps: int = 80,
                   step_size: float = 0.6) -> tuple:
    """``(model_1, model_2, distance)`` maximising the target distance."""
    fam = FAMILIES[name]
    rng = np.random.default_rng(seed)
    dim = fam.n_shared + 2 * fam.n_free
    best = (None, -1.0)
    for _ in range(restarts):
        vec = rng.normal(0.0, 2.0, dim)
        score = target_distance(fam, *_models(fam, vec))
        for _ in range(steps):
            cand = vec + rng.normal(0.0, step_size, dim)
            s = target_distance(fam, *_models(fam, cand))
            if s > score:
                vec, score = cand, s
        if score > best[1]:
            best = (vec, score)
    m1, m2 = _models(fam, best[0])
    return m1, m2, best[1]
