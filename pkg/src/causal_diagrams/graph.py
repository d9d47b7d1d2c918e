"""DAGs, ADMGs and the combinatorics around them."""
from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field
from typing import Iterable


class GraphError(ValueError):
    pass


def _sorted_pair(a, b):
    return (a, b) if a <= b else (b, a)


@dataclass(frozen=True)
class Dag:
    """A finite directed acyclic graph.

    Parameters
    ----------
    vertices : tuple of str
        Vertex names; order is kept for display only.
    edges : frozenset of (str, str)
        Directed edges ``(parent, child)``.
    """

    vertices: tuple
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        verts = tuple(self.vertices)
        if len(set(verts)) != len(verts):
            raise GraphError("duplicate vertices")
        edges = frozenset((a, b) for a, b in self.edges)
        vs = set(verts)
        for a, b in edges:
            if a not in vs or b not in vs:
                raise GraphError(f"edge {a}->{b} has an unknown endpoint")
            if a == b:
                raise GraphError(f"self-loop at {a}")
        object.__setattr__(self, "vertices", verts)
        object.__setattr__(self, "edges", edges)
        topological_order(self)

    def parents(self, v) -> list:
        return sorted(a for a, b in self.edges if b == v)

    def children(self, v) -> list:
        return sorted(b for a, b in self.edges if a == v)

    def parent_map(self) -> dict:
        out = {v: [] for v in self.vertices}
        for a, b in self.edges:
            out[b].append(a)
        return {v: sorted(ps) for v, ps in out.items()}

    def ancestors(self, vs: Iterable) -> set:
        """Ancestors of ``vs``, including ``vs`` themselves."""
        pm = self.parent_map()
        seen = set(vs)
        stack = list(seen)
        while stack:
            v = stack.pop()
            for p in pm[v]:
                if p not in seen:
                    seen.add(p)
                    stack.append(p)
        return seen

    def descendants(self, vs: Iterable) -> set:
        """Descendants of ``vs``, including ``vs`` themselves."""
        cm = {v: [] for v in self.vertices}
        for a, b in self.edges:
            cm[a].append(b)
        seen = set(vs)
        stack = list(seen)
        while stack:
            v = stack.pop()
            for c in cm[v]:
                if c not in seen:
                    seen.add(c)
                    stack.append(c)
        return seen

    def roots(self) -> list:
        children = {b for _, b in self.edges}
        return sorted(v for v in self.vertices if v not in children)

    def induced(self, vs: Iterable) -> "Dag":
        keep = set(vs)
        return Dag(tuple(v for v in self.vertices if v in keep),
                   frozenset(e for e in self.edges if e[0] in keep and e[1] in keep))


@dataclass(frozen=True)
class Admg:
    """Acyclic directed mixed graph: a DAG plus bidirected edges."""

    vertices: tuple
    edges: frozenset = field(default_factory=frozenset)
    bidirected: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        dag = Dag(tuple(self.vertices), frozenset(self.edges))
        bi = set()
        vs = set(dag.vertices)
        for pair in self.bidirected:
            a, b = tuple(pair)
            if a == b:
                raise GraphError(f"bidirected self-loop at {a}")
            if a not in vs or b not in vs:
                raise GraphError(f"bidirected edge {a}<->{b} has an unknown endpoint")
            bi.add(_sorted_pair(a, b))
        object.__setattr__(self, "vertices", dag.vertices)
        object.__setattr__(self, "edges", dag.edges)
        object.__setattr__(self, "bidirected", frozenset(bi))

    @property
    def dag(self) -> Dag:
        return Dag(self.vertices, self.edges)

    def parents(self, v) -> list:
        return self.dag.parents(v)

    def children(self, v) -> list:
        return self.dag.children(v)

    def siblings(self, v) -> list:
        out = set()
        for a, b in self.bidirected:
            if a == v:
                out.add(b)
            elif b == v:
                out.add(a)
        return sorted(out)


@dataclass(frozen=True)
class OpenDag:
    """A DAG with input vertices (parentless) and output vertices."""

    dag: Dag
    inputs: tuple = ()
    outputs: tuple = ()

    def __post_init__(self):
        vs = set(self.dag.vertices)
        for i in self.inputs:
            if i not in vs:
                raise GraphError(f"input {i} is not a vertex")
            if self.dag.parents(i):
                raise GraphError(f"input {i} has parents")
        for o in self.outputs:
            if o not in vs:
                raise GraphError(f"output {o} is not a vertex")
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "outputs", tuple(self.outputs))


def topological_order(g) -> list:
    """Kahn's algorithm with lexicographic tie-breaking."""
    indeg = {v: 0 for v in g.vertices}
    children = {v: [] for v in g.vertices}
    for a, b in g.edges:
        indeg[b] += 1
        children[a].append(b)
    heap = [v for v, d in indeg.items() if d == 0]
    heapq.heapify(heap)
    out = []
    while heap:
        v = heapq.heappop(heap)
        out.append(v)
        for c in children[v]:
            indeg[c] -= 1
            if indeg[c] == 0:
                heapq.heappush(heap, c)
    if len(out) != len(indeg):
        raise GraphError("graph has a directed cycle")
    return out


def _check_disjoint(*sets):
    seen = set()
    for s in sets:
        if seen & s:
            raise GraphError(f"vertex sets overlap on {sorted(seen & s)}")
        seen |= s


def d_separated(g: Dag, ys: Iterable, zs: Iterable, ws: Iterable = ()) -> bool:
    """Whether every path between ``ys`` and ``zs`` is blocked by ``ws``.

    Reachability over (vertex, direction) states: ``up`` means we arrived
    from a child, ``down`` from a parent.
    """
    ys, zs, ws = set(ys), set(zs), set(ws)
    _check_disjoint(ys, zs, ws)
    for v in ys | zs | ws:
        if v not in g.vertices:
            raise GraphError(f"unknown vertex {v}")
    pm = g.parent_map()
    cm = {v: [] for v in g.vertices}
    for a, b in g.edges:
        cm[a].append(b)
    # vertices with a descendant in ws open colliders
    opens = g.ancestors(ws)
    visited = set()
    stack = [(y, "up") for y in ys]
    while stack:
        v, d = stack.pop()
        if (v, d) in visited:
            continue
        visited.add((v, d))
        if v in zs:
            return False
        if d == "up" and v not in ws:
            stack.extend((p, "up") for p in pm[v])
            stack.extend((c, "down") for c in cm[v])
        elif d == "down":
            if v not in ws:
                stack.extend((c, "down") for c in cm[v])
            if v in opens:
                stack.extend((p, "up") for p in pm[v])
    return True


def active_trail(g: Dag, ys: Iterable, zs: Iterable, ws: Iterable = ()) -> list | None:
    """A trail from ``ys`` to ``zs`` left open by ``ws``, or None when d-separated."""
    ys, zs, ws = set(ys), set(zs), set(ws)
    _check_disjoint(ys, zs, ws)
    pm = g.parent_map()
    cm = {v: [] for v in g.vertices}
    for a, b in g.edges:
        cm[a].append(b)
    opens = g.ancestors(ws)
    prev = {(y, "up"): None for y in ys}
    queue = [(y, "up") for y in sorted(ys)]
    while queue:
        state = queue.pop(0)
        v, d = state
        if v in zs:
            trail = []
            while state is not None:
                trail.append(state[0])
                state = prev[state]
            return trail[::-1]
        nxt = []
        if d == "up" and v not in ws:
            nxt += [(p, "up") for p in pm[v]] + [(c, "down") for c in cm[v]]
        elif d == "down":
            if v not in ws:
                nxt += [(c, "down") for c in cm[v]]
            if v in opens:
                nxt += [(p, "up") for p in pm[v]]
        for s in nxt:
            if s not in prev:
                prev[s] = state
                queue.append(s)
    return None


def to_dot(g, name: str = "G") -> str:
    """DOT text for a DAG or ADMG; bidirected edges are dashed."""
    lines = [f"digraph {name} {{"]
    for v in g.vertices:
        lines.append(f'  "{v}";')
    for a, b in sorted(g.edges):
        lines.append(f'  "{a}" -> "{b}";')
    for a, b in sorted(getattr(g, "bidirected", ())):
        lines.append(f'  "{a}" -> "{b}" [dir=both, style=dashed];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def d_separated_by_paths(g: Dag, ys: Iterable, zs: Iterable, ws: Iterable = ()) -> bool:
    """Literal definition: enumerate every simple undirected path."""
    ys, zs, ws = set(ys), set(zs), set(ws)
    _check_disjoint(ys, zs, ws)
    nbrs = {v: set() for v in g.vertices}
    for a, b in g.edges:
        nbrs[a].add(b)
        nbrs[b].add(a)
    edges = g.edges
    desc = {v: g.descendants([v]) for v in g.vertices}

    def blocked(path):
        for i in range(1, len(path) - 1):
            a, m, b = path[i - 1], path[i], path[i + 1]
            collider = (a, m) in edges and (b, m) in edges
            if collider:
                if not (desc[m] & ws):
                    return True
            elif m in ws:
                return True
        return False

    def walk(path, on_path):
        v = path[-1]
        if v in zs and len(path) > 1:
            return blocked(path)
        for n in nbrs[v]:
            if n in on_path:
                continue
            path.append(n)
            on_path.add(n)
            ok = walk(path, on_path)
            path.pop()
            on_path.discard(n)
            if not ok:
                return False
        return True

    for y in ys:
        if not walk([y], {y}):
            return False
    return True


def latent_projection(g: Dag, observed: Iterable) -> Admg:
    """Forget the unobserved vertices, keeping their causal footprint."""
    obs = [v for v in g.vertices if v in set(observed)]
    obs_set = set(obs)
    cm = {v: [] for v in g.vertices}
    for a, b in g.edges:
        cm[a].append(b)

    def reach_through_latents(start):
        # observed vertices reachable by directed paths whose interior is latent
        found = set()
        seen = set()
        stack = list(cm[start])
        while stack:
            v = stack.pop()
            if v in seen:
                continue
            seen.add(v)
            if v in obs_set:
                found.add(v)
            else:
                stack.extend(cm[v])
        return found

    directed = set()
    for a in obs:
        for b in reach_through_latents(a):
            directed.add((a, b))
    bidirected = set()
    for lat in g.vertices:
        if lat in obs_set:
            continue
        hits = sorted(reach_through_latents(lat))
        for a, b in itertools.combinations(hits, 2):
            bidirected.add((a, b))
    return Admg(tuple(obs), frozenset(directed), frozenset(bidirected))


def admg_from_dag(g: Dag) -> Admg:
    return Admg(g.vertices, g.edges, frozenset())


def maximal_cliques(vertices: Iterable, pairs: Iterable) -> list:
    """Maximal cliques by Bron-Kerbosch with pivoting, sorted."""
    vertices = sorted(set(vertices))
    if len(vertices) > 32:
        raise GraphError("clique enumeration is limited to 32 vertices")
    adj = {v: set() for v in vertices}
    for a, b in pairs:
        adj[a].add(b)
        adj[b].add(a)
    out = []

    def expand(r, p, x):
        if not p and not x:
            out.append(tuple(sorted(r)))
            return
        pivot = max(p | x, key=lambda u: len(adj[u] & p))
        for v in sorted(p - adj[pivot]):
            expand(r | {v}, p & adj[v], x & adj[v])
            p = p - {v}
            x = x | {v}

    expand(set(), set(vertices), set())
    return sorted(out, key=lambda c: (len(c), c))


def _fresh(name, taken):
    out = name
    k = 1
    while out in taken:
        out = f"{name}~{k}"
        k += 1
    taken.add(out)
    return out


def root_name(members: Iterable) -> str:
    return "R_{" + ",".join(sorted(members)) + "}"


def rootify(a: Admg, method: str = "rho_tilde") -> tuple:
    """Replace bidirected edges by fresh latent roots.

    Returns ``(dag, roots)`` where ``roots`` maps each new root name to the
    sorted tuple of its children.
    """
    method = method.replace("-", "_")
    taken = set(a.vertices)
    if method == "rho":
        groups = sorted(a.bidirected)
    elif method == "rho_tilde":
        groups = [c for c in maximal_cliques(a.vertices, a.bidirected) if len(c) > 1]
    else:
        raise ValueError(f"unknown rootification {method!r}")
    roots = {}
    edges = set(a.edges)
    for grp in groups:
        r = _fresh(root_name(grp), taken)
        roots[r] = tuple(sorted(grp))
        edges.update((r, v) for v in grp)
    dag = Dag(tuple(roots) + tuple(a.vertices), frozenset(edges))
    return dag, roots


def c_component(a: Admg, x) -> set:
    if x not in a.vertices:
        raise GraphError(f"unknown vertex {x}")
    seen = {x}
    stack = [x]
    while stack:
        v = stack.pop()
        for s in a.siblings(v):
            if s not in seen:
                seen.add(s)
                stack.append(s)
    return seen


def c_components(a: Admg) -> list:
    left = set(a.vertices)
    out = []
    for v in a.vertices:
        if v in left:
            comp = c_component(a, v)
            left -= comp
            out.append(comp)
    return out


def c_condition(a: Admg, x) -> bool:
    """Tian-Pearl condition: no child of ``x`` is confounded with it."""
    return not (set(a.children(x)) & c_component(a, x))
