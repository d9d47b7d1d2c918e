"""JSON file formats for models, graphs, tables, queries and expressions."""
from __future__ import annotations

import json
import re
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .diagram import MECHANISM, Interpretation, NetworkDiagram, Node
from .expression import PStarTables, from_json as expr_from_json, to_json as expr_to_json
from .graph import Admg, Dag
from .model import CausalModel, Fcm
from .semantics import UNIT, FinObject, Morphism


class SchemaError(ValueError):
    """A file does not follow the expected layout."""


_FLOAT_TAG = "@@f:"


def _tag_floats(obj):
    if isinstance(obj, bool) or obj is None:
        return obj
    if isinstance(obj, (float, np.floating)):
        return _FLOAT_TAG + format(float(obj), ".17g")
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, Mapping):
        return {str(k): _tag_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_tag_floats(v) for v in obj]
    return obj


def dumps(obj, indent: int | None = 2) -> str:
    """JSON text with every float written to 17 significant digits."""
    text = json.dumps(_tag_floats(obj), indent=indent, sort_keys=False)
    return re.sub(r'"' + re.escape(_FLOAT_TAG) + r'([^"]*)"', r"\1", text)


def load_json(path) -> Any:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from exc


def _need(js: Mapping, key: str, where: str):
    if not isinstance(js, Mapping) or key not in js:
        raise SchemaError(f"{where}: missing field {key!r}")
    return js[key]


# morphisms ----------------------------------------------------------------------

def morphism_to_json(m: Morphism) -> dict:
    return {"dom": [[n, c] for n, c in m.dom.atoms], "cod": [[n, c] for n, c in m.cod.atoms],
            "entries": [float(x) for x in m.array.ravel()]}


def morphism_from_json(js: Mapping) -> Morphism:
    dom = FinObject(tuple((n, int(c)) for n, c in _need(js, "dom", "morphism")))
    cod = FinObject(tuple((n, int(c)) for n, c in _need(js, "cod", "morphism")))
    try:
        return Morphism(dom, cod, _need(js, "entries", "morphism"))
    except ValueError as exc:
        raise SchemaError(f"morphism: {exc}") from exc


# models -------------------------------------------------------------------------

def model_to_json(m: CausalModel) -> dict:
    d = m.diagram
    mechs = []
    for n in d.nodes:
        entry = {"target": n.output, "parents": list(n.inputs),
                 "cpt": [float(x) for x in m.interp[n.box].array.ravel()]}
        if n.box != f"c_{n.output}":
            entry["box"] = n.box
        mechs.append(entry)
    return {"variables": [{"name": w, "cardinality": c} for w, c in d.wires.items()],
            "mechanisms": mechs, "inputs": list(d.inputs), "outputs": list(d.outputs)}


def model_from_json(js: Mapping) -> CausalModel:
    where = "model"
    try:
        wires = {str(v["name"]): int(v["cardinality"]) for v in _need(js, "variables", where)}
        nodes, interp = [], Interpretation()
        for mech in _need(js, "mechanisms", where):
            tgt = str(_need(mech, "target", where))
            pa = tuple(_need(mech, "parents", where))
            box = mech.get("box", f"c_{tgt}")
            for w in (tgt,) + pa:
                if w not in wires:
                    raise SchemaError(f"{where}: unknown variable {w!r}")
            shape = tuple(wires[w] for w in pa) + (wires[tgt],)
            arr = np.asarray(_need(mech, "cpt", where), dtype=float)
            if arr.size != int(np.prod(shape)):
                raise SchemaError(f"{where}: cpt for {tgt} has {arr.size} entries, "
                                  f"expected {int(np.prod(shape))}")
            dom = FinObject(tuple((w, wires[w]) for w in pa))
            interp[box] = Morphism(dom, FinObject(((tgt, wires[tgt]),)), arr.reshape(shape))
            nodes.append(Node(box, MECHANISM, box, pa, tgt))
        d = NetworkDiagram(wires, tuple(nodes), tuple(js.get("inputs", ())),
                           tuple(js.get("outputs", tuple(wires))))
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"{where}: {exc}") from exc
    return CausalModel(d, interp)


def fcm_to_json(f: Fcm) -> dict:
    funcs = {}
    for v in f.variables:
        funcs[v] = {"parents": list(f.parents[v]), "noise_cardinality": f.noise_card(v),
                    "table": [int(x) for x in f.function_table(v).ravel()]}
    return {"variables": [{"name": v, "cardinality": f.cards[v]} for v in f.variables],
            "functions": funcs,
            "noises": {v: [float(x) for x in f.noises[v].array.ravel()] for v in f.variables},
            "outputs": list(f.outputs)}


def fcm_from_json(js: Mapping) -> Fcm:
    where = "fcm"
    try:
        order = [str(v["name"]) for v in _need(js, "variables", where)]
        cards = {str(v["name"]): int(v["cardinality"]) for v in js["variables"]}
        funcs, noises, parents = {}, {}, {}
        for v in order:
            fj = _need(_need(js, "functions", where), v, where)
            pa = tuple(fj.get("parents", ()))
            k = int(fj["noise_cardinality"])
            table = np.asarray(fj["table"], dtype=int)
            shape = tuple(cards[p] for p in pa) + (k,)
            if table.size != int(np.prod(shape)):
                raise SchemaError(f"{where}: table for {v} has the wrong size")
            arr = np.zeros(shape + (cards[v],))
            np.put_along_axis(arr, table.reshape(shape + (1,)), 1.0, axis=-1)
            u = (f"U_{v}", k)
            dom = FinObject(tuple((p, cards[p]) for p in pa) + (u,))
            funcs[v] = Morphism(dom, FinObject(((v, cards[v]),)), arr)
            noises[v] = Morphism(UNIT, FinObject((u,)), _need(_need(js, "noises", where), v, where))
            parents[v] = pa
        return Fcm(tuple(order), parents, cards, funcs, noises, tuple(js.get("outputs", order)))
    except (KeyError, TypeError, IndexError) as exc:
        raise SchemaError(f"{where}: {exc}") from exc


# graphs -------------------------------------------------------------------------

def admg_to_json(a: Admg, cards: Mapping | None = None) -> dict:
    out = {"vertices": list(a.vertices), "directed": [list(e) for e in sorted(a.edges)],
           "bidirected": [list(e) for e in sorted(a.bidirected)]}
    if cards:
        out["cardinalities"] = {v: int(cards[v]) for v in a.vertices}
    return out


def admg_from_json(js: Mapping) -> tuple:
    """``(admg, cardinalities)``; cardinalities default to 2."""
    where = "admg"
    vs = tuple(str(v) for v in _need(js, "vertices", where))
    directed = frozenset(tuple(e) for e in js.get("directed", ()))
    bi = frozenset(tuple(e) for e in js.get("bidirected", ()))
    for e in directed | bi:
        if len(e) != 2:
            raise SchemaError(f"{where}: edges are pairs")
    cards = {v: int(js.get("cardinalities", {}).get(v, 2)) for v in vs}
    return Admg(vs, directed, bi), cards


def dag_to_json(g: Dag) -> dict:
    return {"vertices": list(g.vertices), "directed": [list(e) for e in sorted(g.edges)]}


# tables -------------------------------------------------------------------------

def tables_to_json(t: PStarTables) -> dict:
    names = t.names
    rows = []
    for key in sorted(t.tables, key=lambda k: (len(k), [names.index(n) for n in sorted(k, key=names.index)])):
        rows.append({"doset": [n for n in names if n in key],
                     "entries": [float(x) for x in t.tables[key].array.ravel()]})
    return {"roster": [[n, c] for n, c in t.roster], "tables": rows}


def tables_from_json(js: Mapping) -> PStarTables:
    roster = tuple((str(n), int(c)) for n, c in _need(js, "roster", "tables"))
    names = [n for n, _ in roster]
    cards = dict(roster)
    tabs = {}
    for row in _need(js, "tables", "tables"):
        key = [n for n in names if n in set(row["doset"])]
        rest = [n for n in names if n not in set(key)]
        dom = FinObject(tuple((n, cards[n]) for n in key))
        cod = FinObject(tuple((n, cards[n]) for n in rest))
        arr = np.asarray(row["entries"], dtype=float)
        if arr.size != dom.size * cod.size:
            raise SchemaError(f"tables: do({','.join(key)}) has the wrong number of entries")
        tabs[frozenset(key)] = Morphism(dom, cod, arr.reshape(dom.cards + cod.cards))
    return PStarTables(roster, tabs)


# expressions --------------------------------------------------------------------

def expression_to_json(e, roster) -> dict:
    return {"roster": [[n, c] for n, c in roster], "expression": expr_to_json(e)}


def expression_from_json(js: Mapping):
    roster = tuple((str(n), int(c)) for n, c in _need(js, "roster", "expression file"))
    return expr_from_json(_need(js, "expression", "expression file"), roster), roster


# queries ------------------------------------------------------------------------

def terms_to_json(t) -> dict:
    worlds = [{"do": dict(w.do), "cond": dict(w.cond), "outputs": list(w.outputs)}
              for w in t.worlds]
    out = {"worlds": worlds}
    if not t.validate:
        out["validate"] = False
    return out


def terms_from_json(js: Mapping):
    from .counterfactual import CounterfactualError, CounterfactualTerms, WorldTerm
    try:
        worlds = [WorldTerm(w.get("do", {}), w.get("cond", {}), tuple(w.get("outputs", ())))
                  for w in _need(js, "worlds", "counterfactual query")]
        return CounterfactualTerms(tuple(worlds), bool(js.get("validate", True)))
    except (AttributeError, TypeError) as exc:
        raise SchemaError(f"counterfactual query: {exc}") from exc
    except CounterfactualError as exc:
        raise SchemaError(f"counterfactual query: {exc}") from exc


def _vector_state(name: str, card: int, entries) -> Morphism:
    return Morphism(UNIT, FinObject(((name, card),)), entries)


def intervention_from_json(js: Mapping, cards: Mapping):
    """One intervention; ``kind`` is do, break, cut, local, wide_local, trim, pad or rewire."""
    from . import intervention as iv
    kind = _need(js, "kind", "intervention")
    try:
        if kind == "rewire":
            perm = dict(_need(js, "perm", "intervention"))
            maps = {}
            for xi, entries in js.get("maps", {}).items():
                src = perm[xi]
                maps[xi] = Morphism(FinObject(((src, cards[src]),)), FinObject(((xi, cards[xi]),)),
                                    np.asarray(entries, dtype=float).reshape(cards[src], cards[xi]))
            return iv.Rewire(perm, maps)
        var = str(_need(js, "var", "intervention"))
        card = cards[var]
        if kind == "do":
            return iv.Do(var, int(_need(js, "value", "intervention")))
        if kind == "break":
            return iv.Break(var, _vector_state(var, card, _need(js, "state", "intervention")))
        if kind == "cut":
            return iv.Cut(var)
        if kind == "trim":
            return iv.Trim(var)
        if kind == "pad":
            return iv.Pad(var, tuple(_need(js, "extra", "intervention")))
        if kind in ("local", "wide_local"):
            extra = tuple(js.get("extra", ())) if kind == "wide_local" else ()
            dom = FinObject(tuple((a, cards[a]) for a in extra) + ((var, card),))
            arr = np.asarray(_need(js, "eta", "intervention"), dtype=float)
            eta = Morphism(dom, FinObject(((var + "'", card),)), arr.reshape(dom.cards + (card,)))
            return iv.WideLocal(var, extra, eta) if extra else iv.Local(var, eta)
    except (KeyError, ValueError, TypeError) as exc:
        raise SchemaError(f"intervention: {exc}") from exc
    raise SchemaError(f"intervention: unknown kind {kind!r}")


def load_model_file(js: Mapping):
    """``(model, fcm or None)`` from a model file with an optional ``fcm`` block."""
    fcm = fcm_from_json(js["fcm"]) if "fcm" in js else None
    if "mechanisms" in js:
        return model_from_json(js), fcm
    if fcm is None:
        raise SchemaError("model: need mechanisms or an fcm block")
    from .model import model_from_fcm
    return model_from_fcm(fcm), fcm
