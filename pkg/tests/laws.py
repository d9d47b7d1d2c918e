"""Independent checks shared by the unit tests and the acceptance suite.

Each check returns a number (a max error) or a boolean computed straight
from the numpy arrays, so the library is never used to verify itself.
"""
import itertools

import numpy as np

from causal_diagrams import semantics as sem
from causal_diagrams.model import conditionally_independent
from causal_diagrams.sampling import random_morphism
from causal_diagrams.semantics import UNIT, FinObject, Morphism


def objects(rng, max_atoms=2, max_card=3, prefix="a"):
    k = int(rng.integers(0, max_atoms + 1))
    return FinObject(tuple((f"{prefix}{i}", int(rng.integers(1, max_card + 1))) for i in range(k)))


def with_zero_columns(rng, dom, cod):
    """A random nonnegative morphism with at least one injected zero column."""
    f = random_morphism(rng, dom, cod, zero_column_prob=0.3)
    mat = np.array(f.matrix)
    mat[int(rng.integers(dom.size))] = 0.0
    return Morphism(dom, cod, mat.reshape(dom.cards + cod.cards))


def _norm_ref(mat):
    """Column-by-column reference normalisation on a plain matrix."""
    out = np.zeros_like(mat)
    for i, row in enumerate(mat):
        s = row.sum()
        if s > 0:
            out[i] = row / s
    return out


def normalisation_errors(rng, f, g):
    """Max error of each normalisation law for ``f`` and a second morphism ``g``."""
    nf = sem.normalize(f)
    errs = {}
    # agrees with the column-wise formula, zero columns included
    errs["columnwise"] = float(np.max(np.abs(nf.matrix - _norm_ref(f.matrix)), initial=0.0))
    # partial channels are fixed points
    part = Morphism(f.dom, f.cod, _norm_ref(f.matrix).reshape(f.array.shape))
    errs["fixes_partial_channels"] = max(sem.normalize(part).max_diff(part),
                                         sem.normalize(nf).max_diff(nf))
    # monoidal
    errs["tensor"] = sem.normalize(sem.tensor(f, g)).max_diff(
        sem.tensor(nf, sem.normalize(g)))
    # commutes with discarding part of the output
    if len(f.cod) >= 2:
        keep = list(f.cod.names[:1])
        errs["marginal"] = sem.normalize(sem.marginalize(f, keep)).max_diff(
            sem.marginalize(nf, keep))
    # copying the input alongside the output
    if len(f.dom):
        wide = lambda h: sem.compose(sem.copy(f.dom), sem.tensor(sem.identity(f.dom), h))
        errs["copy_input"] = sem.normalize(wide(f)).max_diff(wide(nf))
    # post-composition with a channel
    c_obj = FinObject((("post", 3),))
    c = Morphism(f.cod, c_obj, rng.dirichlet(np.ones(3), size=f.cod.size).reshape(
        f.cod.cards + (3,)))
    errs["post_channel"] = sem.normalize(sem.compose(f, c)).max_diff(sem.compose(nf, c))
    # copying the output
    errs["copy_output"] = sem.normalize(sem.compose(f, sem.copy(f.cod))).max_diff(
        sem.compose(nf, sem.copy(f.cod)))
    # plugging a sharp state into one input
    if len(f.dom):
        first, rest = FinObject(f.dom.atoms[:1]), FinObject(f.dom.atoms[1:])
        v = int(rng.integers(first.cards[0]))
        plug = sem.tensor(sem.sharp_state(first, v), sem.identity(rest)).with_types(rest, f.dom)
        errs["plug_sharp_input"] = sem.normalize(sem.compose(plug, f)).max_diff(
            sem.compose(plug, nf))
    return errs


def minimal_normalisation_error(rng, f):
    """``g`` renormalises ``f`` on its support: it must also renormalise ``normalize(f)``.

    Builds a random partial channel ``g`` that agrees with ``f / sum`` on
    the support and is arbitrary elsewhere, then checks
    ``normalize(f)(y|x) = g(y|x) * Σ_y normalize(f)(y|x)``.
    """
    mat = f.matrix
    sums = mat.sum(axis=1)
    g = np.zeros_like(mat)
    for i, s in enumerate(sums):
        if s > 0:
            g[i] = mat[i] / s
        elif rng.random() < 0.5:
            g[i] = rng.dirichlet(np.ones(mat.shape[1]))
    # g is a normalisation of f
    err_f = float(np.max(np.abs(g * sums[:, None] - mat), initial=0.0))
    nf = sem.normalize(f).matrix
    err_n = float(np.max(np.abs(g * nf.sum(axis=1)[:, None] - nf), initial=0.0))
    return max(err_f, err_n)


# conditioning ---------------------------------------------------------------

def random_joint(rng, names, cards, support=1.0, independent=None):
    """A normalised joint; ``independent=(xs, ys, zs)`` builds one with X ⊥ Y | Z."""
    obj = FinObject(tuple(zip(names, cards)))
    if independent is None:
        return _support_cut(rng, rng.dirichlet(np.ones(obj.size)).reshape(cards), support, obj)
    xs, ys, zs = independent
    pos = {n: i for i, n in enumerate(names)}
    cz = [cards[pos[n]] for n in zs]
    cx = [cards[pos[n]] for n in xs]
    cy = [cards[pos[n]] for n in ys]
    pz = _support_cut(rng, rng.dirichlet(np.ones(int(np.prod(cz)))).reshape(cz or ()), support, None)
    px = rng.dirichlet(np.ones(int(np.prod(cx))), size=int(np.prod(cz)))
    py = rng.dirichlet(np.ones(int(np.prod(cy))), size=int(np.prod(cz)))
    if support < 1.0:
        px = np.where(rng.random(px.shape) < 1 - support, 0.0, px)
        px[px.sum(axis=1) == 0, 0] = 1.0
        px /= px.sum(axis=1, keepdims=True)
    arr = (np.asarray(pz).reshape(-1, 1, 1) * px[:, :, None] * py[:, None, :])
    arr = arr.reshape(tuple(cz) + tuple(cx) + tuple(cy))
    order = list(zs) + list(xs) + list(ys)
    perm = [order.index(n) for n in names if n in order]
    arr = np.transpose(arr, perm)
    return Morphism(UNIT, obj.sub([n for n in names if n in order]), arr)


def _support_cut(rng, arr, support, obj):
    arr = np.asarray(arr, dtype=float)
    if support < 1.0 and arr.size > 1:
        flat = arr.ravel().copy()
        mask = rng.random(flat.size) >= support
        if mask.all():
            mask[int(rng.integers(flat.size))] = False
        flat[mask] = 0.0
        arr = (flat / flat.sum()).reshape(arr.shape)
    return arr if obj is None else Morphism(UNIT, obj, arr)


def _table(omega, names):
    """Marginal of ``omega`` over ``names`` as an array in that order."""
    keep = list(names)
    idx = [omega.cod.names.index(n) for n in keep]
    drop = tuple(i for i in range(len(omega.cod)) if i not in idx)
    arr = omega.array.sum(axis=drop) if drop else omega.array
    kept = [n for n in omega.cod.names if n in keep]
    return np.transpose(arr, [kept.index(n) for n in keep]) if keep else arr


def disintegration_error(omega, xs):
    """``ω = copy ; (id ⊗ ω|_X) ∘ ω_X`` with the library's conditional."""
    rest = [n for n in omega.cod.names if n not in xs]
    marg = sem.marginalize(omega, xs)
    cond = sem.conditional(omega, xs)
    rebuilt = sem.compose(marg, sem.compose(sem.copy(marg.cod), sem.tensor(
        sem.identity(marg.cod), cond.with_types(marg.cod, cond.cod))))
    rebuilt = rebuilt.with_types(cod=FinObject(
        tuple((n, c) for n, c in zip(xs + rest, rebuilt.cod.cards))))
    rebuilt = sem.permute_cod(rebuilt, omega.cod.names)
    return omega.max_diff(rebuilt)


def iterated_conditional_error(omega, zs, ys):
    """Conditioning on Z then Y agrees with Y then Z and with Y∪Z at once."""
    both = sem.conditional(omega, list(zs) + list(ys))
    a = sem.conditional(sem.conditional(omega, zs), ys)
    b = sem.conditional(sem.conditional(omega, ys), zs)
    a = sem.permute_dom(a, list(zs) + list(ys))
    b = sem.permute_dom(b, list(zs) + list(ys))
    return max(a.max_diff(both), b.max_diff(both))


def ci_reference(omega, xs, ys, zs, tol):
    """``P(x,y,z) P(z) = P(x,z) P(y,z)`` entrywise."""
    pxyz = _table(omega, list(xs) + list(ys) + list(zs))
    pxz = _table(omega, list(xs) + list(zs))
    pyz = _table(omega, list(ys) + list(zs))
    pz = _table(omega, list(zs))
    nx, ny = len(xs), len(ys)
    lhs = pxyz * np.asarray(pz).reshape((1,) * (nx + ny) + np.shape(pz))
    rhs = (pxz.reshape(pxz.shape[:nx] + (1,) * ny + pxz.shape[nx:])
           * pyz.reshape((1,) * nx + pyz.shape))
    return bool(np.max(np.abs(lhs - rhs), initial=0.0) <= tol)


def ci_equivalent_forms(omega, xs, ys, zs, tol):
    """The three reformulations of ``X ⊥ Y | Z`` evaluated independently.

    (1) ``P(x | y, z) = P(x | z)`` wherever ``P(y, z) > 0``;
    (2) ``P(x, y, z) = P(x | z) P(y, z)``;
    (3) ``P(x, y, z) = P(x | z) P(y | z) P(z)``.
    """
    xs, ys, zs = list(xs), list(ys), list(zs)
    nx, ny = len(xs), len(ys)
    pxyz = _table(omega, xs + ys + zs)
    pxz = _table(omega, xs + zs)
    pyz = _table(omega, ys + zs)
    pz = np.asarray(_table(omega, zs))

    def div(a, b):
        return np.divide(a, b, out=np.zeros(np.broadcast(a, b).shape), where=b > 0)

    px_z = div(pxz, pz.reshape((1,) * nx + pz.shape))
    py_z = div(pyz, pz.reshape((1,) * ny + pz.shape))
    px_z_b = px_z.reshape(px_z.shape[:nx] + (1,) * ny + px_z.shape[nx:])
    pyz_b = pyz.reshape((1,) * nx + pyz.shape)
    px_yz = div(pxyz, pyz_b)
    form1 = np.max(np.abs((px_yz - px_z_b) * (pyz_b > 0)), initial=0.0) <= tol
    form2 = np.max(np.abs(pxyz - px_z_b * pyz_b), initial=0.0) <= tol
    form3 = np.max(np.abs(pxyz - px_z_b * py_z.reshape((1,) * nx + py_z.shape)
                          * pz.reshape((1,) * (nx + ny) + pz.shape)), initial=0.0) <= tol
    return bool(form1), bool(form2), bool(form3)


def semigraphoid_violations(omega, x, y, w, z, tol):
    """Names of semi-graphoid axioms that fail for the disjoint sets given."""
    ci = lambda a, b, c: conditionally_independent(omega, a, b, c, tol)
    bad = []
    if ci(x, y, z) != ci(y, x, z):
        bad.append("symmetry")
    if ci(x, y + w, z):
        if not (ci(x, y, z) and ci(x, w, z)):
            bad.append("decomposition")
        if not ci(x, y, z + w):
            bad.append("weak_union")
    if ci(x, y, z + w) and ci(x, w, z) and not ci(x, y + w, z):
        bad.append("contraction")
    return bad


# d-separation ---------------------------------------------------------------

def _undirected_paths(g, a, b):
    nbrs = {v: set() for v in g.vertices}
    for p, c in g.edges:
        nbrs[p].add(c)
        nbrs[c].add(p)

    def walk(path):
        v = path[-1]
        if v == b:
            yield list(path)
            return
        for n in sorted(nbrs[v]):
            if n not in path:
                path.append(n)
                yield from walk(path)
                path.pop()

    yield from walk([a])


def path_blocked(g, path, ws):
    """Chain/fork/collider rule on one path."""
    edges = g.edges
    desc_cache = {}
    for i in range(1, len(path) - 1):
        prev, v, nxt = path[i - 1], path[i], path[i + 1]
        collider = (prev, v) in edges and (nxt, v) in edges
        if collider:
            if v not in desc_cache:
                desc_cache[v] = g.descendants([v])
            if not (desc_cache[v] & set(ws)):
                return True
        elif v in ws:
            return True
    return False


def d_separated_literal(g, ys, zs, ws):
    for a, b in itertools.product(ys, zs):
        for path in _undirected_paths(g, a, b):
            if not path_blocked(g, path, set(ws)):
                return False
    return True


def surgery_reference(m, doset, keep=None):
    """Post-intervention joint by enumerating every assignment.

    Mechanisms of intervened variables are replaced by indicators; the
    result is marginalised onto ``keep`` (default: the model outputs).
    """
    order = list(m.variables)
    cards = m.cards
    arr = np.zeros(tuple(cards[v] for v in order))
    mechs = {v: np.asarray(m.mechanism(v).array) for v in order}
    for vals in itertools.product(*(range(cards[v]) for v in order)):
        at = dict(zip(order, vals))
        if any(at[x] != s for x, s in doset.items()):
            continue
        p = 1.0
        for v in order:
            if v not in doset:
                p *= mechs[v][tuple(at[w] for w in m.parents(v)) + (at[v],)]
        arr[vals] = p
    keep = list(m.outputs if keep is None else keep)
    drop = tuple(i for i, v in enumerate(order) if v not in keep)
    out = arr.sum(axis=drop)
    kept = [v for v in order if v in keep]
    return np.transpose(out, [kept.index(v) for v in keep])


def comb_graphs(rng, count, sizes=(3, 4, 5)):
    """Random ADMGs of comb shape: ``(admg, x, partition)`` triples.

    Graphs whose ``x`` meets the c-component condition are kept when a
    comb partition exists for it.
    """
    from causal_diagrams.graph import c_condition
    from causal_diagrams.identify import jkz_partition
    from causal_diagrams.sampling import random_admg
    found = []
    while len(found) < count:
        a = random_admg(rng, int(rng.choice(sizes)), 0.5, 0.3)
        ok = [x for x in a.vertices if a.children(x) and c_condition(a, x)]
        if ok:
            x = ok[int(rng.integers(len(ok)))]
            p = jkz_partition(a, x)
            if p is not None:
                found.append((a, x, p))
    return found


def _noise_assignments(fcm):
    order = list(fcm.variables)
    cards = [fcm.noise_card(v) for v in order]
    probs = [np.asarray(fcm.noises[v].array).ravel() for v in order]
    for us in itertools.product(*(range(c) for c in cards)):
        p = 1.0
        for pr, u in zip(probs, us):
            p *= pr[u]
        if p > 0:
            yield p, dict(zip(order, us))


def _world_values(fcm, us, do):
    vals = {}
    for v in fcm.variables:
        if v in do:
            vals[v] = do[v]
        else:
            tab = fcm.function_table(v)
            vals[v] = int(tab[tuple(vals[p] for p in fcm.parents[v]) + (us[v],)])
    return vals


def twin_reference(fcm, worlds):
    """Counterfactual state by noise enumeration, in plain Python.

    ``worlds`` is a list of ``(do, cond, outputs)`` triples.  Returns the
    unnormalised array over the concatenated outputs and its total mass.
    """
    shape = tuple(fcm.cards[v] for _, _, outs in worlds for v in outs)
    arr = np.zeros(shape)
    for p, us in _noise_assignments(fcm):
        vals = [_world_values(fcm, us, do) for do, _, _ in worlds]
        if all(vals[j][v] == x for j, (_, cond, _) in enumerate(worlds) for v, x in cond.items()):
            arr[tuple(vals[j][v] for j, (_, _, outs) in enumerate(worlds) for v in outs)] += p
    return arr, arr.sum()


def fuzzy_reference(fcm, worlds, evidence, mode):
    """Soft evidence on world variables by enumeration.

    ``evidence`` maps ``(world index, variable)`` to a vector.  Mode
    ``from_effects`` weights each noise assignment by the evidence and
    renormalises; ``from_states`` mixes the sharp conditionals with the
    evidence as mixing weights.
    """
    shape = tuple(fcm.cards[v] for _, outs in worlds for v in outs)
    keys = list(evidence)
    if mode == "from_effects":
        arr = np.zeros(shape)
        for p, us in _noise_assignments(fcm):
            vals = [_world_values(fcm, us, do) for do, _ in worlds]
            w = p
            for j, v in keys:
                w *= evidence[(j, v)][vals[j][v]]
            arr[tuple(vals[j][v] for j, (_, outs) in enumerate(worlds) for v in outs)] += w
        return arr / arr.sum()
    out = np.zeros(shape)
    for sharp in itertools.product(*(range(fcm.cards[v]) for _, v in keys)):
        weight = np.prod([evidence[k][s] for k, s in zip(keys, sharp)])
        if weight == 0:
            continue
        cond = [{} for _ in worlds]
        for (j, v), s in zip(keys, sharp):
            cond[j][v] = s
        arr, mass = twin_reference(fcm, [(do, c, outs) for (do, outs), c in zip(worlds, cond)])
        if mass > 0:
            out += weight * arr / mass
    return out
