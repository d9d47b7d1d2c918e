"""Regenerate the example bundles shipped in ``causal_diagrams/bundles``.

Run from the repository root: ``python3 scripts/build_bundles.py``.
Everything is seeded, so the output is byte-identical across runs.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from causal_diagrams.counterfactual import (CounterfactualTerms, WorldTerm, evaluate_counterfactual,
                                            generalized_counterfactual)
from causal_diagrams.graph import Admg, Dag, rootify
from causal_diagrams.identify import (EX74, FIG71A, FIG71B, FRONT_DOOR, observational_tables,
                                      pstar_tables, random_rootified_model)
from causal_diagrams.intervention import Do
from causal_diagrams.io import (admg_to_json, dumps, fcm_to_json, model_to_json, tables_to_json,
                                terms_to_json)
from causal_diagrams.model import CausalModel, model_from_fcm
from causal_diagrams.sampling import random_fcm, rng_of
from causal_diagrams.witnesses import FAMILIES, observational_gap, search_witness, target_distance

OUT = Path(__file__).resolve().parents[1] / "src" / "causal_diagrams" / "bundles"

EX83 = Admg(("X", "W", "Y", "D", "Z"),
            frozenset({("X", "W"), ("W", "Y"), ("D", "Z"), ("Z", "Y")}),
            frozenset({("X", "Y")}))
EX83_TERMS = CounterfactualTerms((WorldTerm({"X": 0}, {}, ("Y",)),
                                  WorldTerm({}, {"X": 1, "D": 0}, ()),
                                  WorldTerm({"D": 0}, {"Z": 1}, ())))
ASPIRIN = Admg(("X", "Y"), frozenset({("X", "Y")}), frozenset())
ASPIRIN_TERMS = CounterfactualTerms((WorldTerm({}, {"X": 1, "Y": 1}, ()),
                                     WorldTerm({"X": 0}, {}, ("Y",))))
FIG84 = Admg(("X", "Y", "Z", "W1", "W2"), frozenset({("X", "Y"), ("X", "Z")}),
             frozenset({("Y", "W1"), ("W1", "W2"), ("W2", "Z")}))
FIG84_TERMS = CounterfactualTerms((WorldTerm({}, {}, ("W1", "W2")),
                                   WorldTerm({"X": 0}, {}, ("Y",)),
                                   WorldTerm({"X": 1}, {}, ("Z",))), validate=False)


def bundle(name, description, **parts):
    return {"kind": "bundle", "name": name, "description": description, **parts}


def binary(a):
    return {v: 2 for v in a.vertices}


def smoking():
    dag = Dag(("B", "S", "T", "L"), frozenset({("B", "S"), ("B", "L"), ("S", "T"), ("T", "L")}))
    cpts = {"B": np.array([0.7, 0.3]),
            "S": np.array([[0.8, 0.2], [0.35, 0.65]]),
            "T": np.array([[0.95, 0.05], [0.1, 0.9]]),
            "L": np.array([[[0.97, 0.03], [0.85, 0.15]], [[0.9, 0.1], [0.7, 0.3]]])}
    m = CausalModel.from_cpts(dag, {v: 2 for v in dag.vertices}, cpts, (), ("S", "T", "L"))
    return bundle(
        "smoking", "Genotype B confounds smoking S and lung cancer L; tar T mediates.",
        model=model_to_json(m), admg=admg_to_json(FRONT_DOOR, binary(FRONT_DOOR)),
        data=tables_to_json(observational_tables(m, ("S", "T", "L"))),
        query={"outputs": ["S", "L"],
               "dsep": {"Y": ["S"], "Z": ["L"], "W": ["T", "B"]},
               "ci": {"X": ["S"], "Y": ["L"], "Z": ["T", "B"]},
               "intervene": [{"kind": "do", "var": "S", "value": 1}],
               "effect_id": {"X": "S", "eta": {"do": 1}, "target": ["L"]}})


def witness_bundle(name, admg, query, seed):
    fam = FAMILIES[name]
    m1, m2, dist = search_witness(name, seed=seed)
    return bundle(
        name, f"Two models agreeing on P(O) but not on {fam.description}.",
        admg=admg_to_json(admg, binary(admg)), query=query,
        witness={"models": [model_to_json(m1), model_to_json(m2)], "target": fam.description,
                 "target_distance": target_distance(fam, m1, m2),
                 "observational_gap": observational_gap(m1, m2), "search_seed": seed})


def front_door():
    m = random_rootified_model(FRONT_DOOR, 11, cards=binary(FRONT_DOOR), root_card=2)
    return bundle("front_door", "Front-door graph S -> T -> L with S <-> L.",
                  model=model_to_json(m), admg=admg_to_json(FRONT_DOOR, binary(FRONT_DOOR)),
                  data=tables_to_json(observational_tables(m, FRONT_DOOR.vertices)),
                  query={"effect_id": {"X": "T", "eta": {"do": 1}, "target": ["L"]}})


def ex74():
    m = random_rootified_model(EX74, 12, cards=binary(EX74), root_card=2, method="rho")
    return bundle("ex74", "Graph whose effect of X fails the c-component condition globally.",
                  model=model_to_json(m), admg=admg_to_json(EX74, binary(EX74)),
                  data=tables_to_json(observational_tables(m, EX74.vertices)),
                  query={"effect_id": {"X": "X", "eta": {"do": 1}, "target": ["Y1", "Y2"]}})


def cf_bundle(name, description, admg, terms, seed):
    dag, roots = rootify(admg)
    cards = {**binary(admg), **{r: 2 for r in roots}}
    fcm = random_fcm(rng_of(seed), dag, cards, noise_card=3, outputs=admg.vertices)
    m = model_from_fcm(fcm)
    out = bundle(name, description, admg=admg_to_json(admg, binary(admg)),
                 model={**model_to_json(m), "fcm": fcm_to_json(fcm)},
                 data=tables_to_json(pstar_tables(m, admg.vertices)),
                 query={"cf": terms_to_json(terms), "cf_eval": terms_to_json(terms)})
    out["oracle"] = {"entries": [float(x) for x in
                                 evaluate_counterfactual(fcm, terms).array.ravel()]}
    return out


def fuzzy():
    dag = Dag(("X", "Y"), frozenset({("X", "Y")}))
    fcm = random_fcm(rng_of(11), dag, {"X": 2, "Y": 2}, noise_card=3)
    sigmas = [[], [Do("X", 1)]]
    evidence = [{"Y": [0.3, 0.7]}, {}]
    outputs = [[], ["Y"]]
    vals = {}
    for mode in ("from_effects", "from_states"):
        st = generalized_counterfactual(fcm, sigmas, [{k: np.array(v) for k, v in e.items()}
                                                      for e in evidence], outputs, mode)
        vals[mode] = [float(x) for x in st.array.ravel()]
    return bundle("fuzzy", "Aspirin-style twin with fuzzy evidence on the factual outcome.",
                  model={**model_to_json(model_from_fcm(fcm)), "fcm": fcm_to_json(fcm)},
                  query={"sigmas": [[], [{"kind": "do", "var": "X", "value": 1}]],
                         "evidence": evidence, "outputs": outputs},
                  expected=vals)


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    bundles = [
        smoking(),
        witness_bundle("fig71a", FIG71A,
                       {"effect_id": {"X": "X", "eta": {"do": 1}, "target": ["Y"]}}, 0),
        witness_bundle("fig71b", FIG71B,
                       {"effect_id": {"X": "X", "eta": {"do": 1}, "target": ["Y"],
                                      "conditioning": ["Z"]}}, 0),
        front_door(),
        ex74(),
        cf_bundle("ex83", "Three-world counterfactual that is identifiable.", EX83, EX83_TERMS, 83),
        cf_bundle("aspirin", "Would Y have been 1 without aspirin, given X=1 and Y=1?",
                  ASPIRIN, ASPIRIN_TERMS, 11),
        cf_bundle("fig84", "Three worlds sharing the latent W1 <-> W2 chain.", FIG84,
                  FIG84_TERMS, 84),
        fuzzy(),
    ]
    for b in bundles:
        (OUT / f"{b['name']}.json").write_text(dumps(b) + "\n")
        print("wrote", b["name"])


if __name__ == "__main__":
    main()
