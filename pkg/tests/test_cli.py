import json

import numpy as np
import pytest
from click.testing import CliRunner

from causal_diagrams import semantics as sem
from causal_diagrams.cli import bundle_names, main
from causal_diagrams.counterfactual import evaluate_counterfactual
from causal_diagrams.io import (admg_from_json, admg_to_json, fcm_to_json, load_model_file,
                                model_to_json, tables_from_json, tables_to_json,
                                terms_from_json, terms_to_json)
from causal_diagrams.model import output_state

BUNDLES = ["aspirin", "ex74", "ex83", "fig71a", "fig71b", "fig84", "front_door", "fuzzy",
           "smoking"]


def run(*args, ok=(0,)):
    res = CliRunner().invoke(main, list(args))
    assert res.exit_code in ok, res.output
    return res


def parse(js):
    out = {}
    if "model" in js:
        out["model"] = load_model_file(js["model"])
    if "admg" in js:
        out["admg"] = admg_from_json(js["admg"])
    if "data" in js:
        out["data"] = tables_from_json(js["data"])
    if "witness" in js:
        out["witness"] = [load_model_file(w) for w in js["witness"]["models"]]
    for key in ("cf", "cf_eval"):
        if key in js.get("query", {}):
            out[key] = terms_from_json(js["query"][key])
    return out


def serialise(parsed):
    js = {}
    if "model" in parsed:
        m, fcm = parsed["model"]
        js["model"] = {**model_to_json(m), **({"fcm": fcm_to_json(fcm)} if fcm else {})}
    if "admg" in parsed:
        js["admg"] = admg_to_json(*parsed["admg"])
    if "data" in parsed:
        js["data"] = tables_to_json(parsed["data"])
    if "witness" in parsed:
        js["witness"] = {"models": [model_to_json(m) for m, _ in parsed["witness"]]}
    q = {k: terms_to_json(parsed[k]) for k in ("cf", "cf_eval") if k in parsed}
    if q:
        js["query"] = q
    return js


def same_structure(a, b):
    if "model" in a:
        (m1, f1), (m2, f2) = a["model"], b["model"]
        assert m1.variables == m2.variables and m1.outputs == m2.outputs
        assert m1.diagram == m2.diagram
        for v in m1.variables:
            assert m1.mechanism(v).max_diff(m2.mechanism(v)) == 0.0
        assert (f1 is None) == (f2 is None)
    if "admg" in a:
        assert a["admg"] == b["admg"]
    if "data" in a:
        assert a["data"].roster == b["data"].roster
        assert set(a["data"].tables) == set(b["data"].tables)
        for k, t in a["data"].tables.items():
            assert t.max_diff(b["data"].tables[k]) == 0.0
    for k in ("cf", "cf_eval"):
        if k in a:
            assert a[k] == b[k]


class TestBundles:
    def test_names(self):
        assert bundle_names() == BUNDLES

    @pytest.mark.parametrize("name", BUNDLES)
    def test_round_trip(self, name, bundle):
        js = bundle(name)
        first = parse(js)
        second = parse(json.loads(json.dumps(serialise(first))))
        same_structure(first, second)
        assert serialise(first) == serialise(second)

    @pytest.mark.parametrize("name", ["ex83", "aspirin", "fig84"])
    def test_cf_oracle_is_current(self, name, bundle):
        js = bundle(name)
        m, fcm = load_model_file(js["model"])
        got = evaluate_counterfactual(fcm, terms_from_json(js["query"]["cf_eval"]))
        np.testing.assert_allclose(got.array.ravel(), js["oracle"]["entries"], atol=1e-12)


class TestCommands:
    def test_joint(self, bundle):
        res = run("joint", "--model", "smoking")
        out = json.loads(res.output)
        m, _ = load_model_file(bundle("smoking")["model"])
        np.testing.assert_allclose(out["distribution"]["entries"],
                                   output_state(m).array.ravel(), atol=1e-15)
        res = run("joint", "--model", "smoking", "--query", "smoking")
        assert [n for n, _ in json.loads(res.output)["distribution"]["cod"]] == ["S", "L"]

    def test_csv_and_text(self):
        csv_out = run("joint", "--model", "smoking", "--format", "csv").output
        assert csv_out.splitlines()[0] == "S,T,L,p" and len(csv_out.splitlines()) == 9
        assert "  " in run("joint", "--model", "smoking", "--format", "text").output

    def test_validate(self, tmp_path, bundle):
        out = json.loads(run("validate", "--model", "smoking", "--admg", "smoking").output)
        assert out["valid"] and out["model"]["checks"]["markov_factorisation"]
        js = bundle("smoking")["model"]
        js["mechanisms"][0]["cpt"] = [0.5, 0.6]
        p = tmp_path / "bad.json"
        p.write_text(json.dumps(js))
        res = run("validate", "--model", str(p), ok=(1,))
        assert '"valid": false' in res.output

    def test_dsep_and_ci(self, tmp_path):
        out = json.loads(run("dsep", "--model", "smoking", "--query", "smoking").output)
        assert out["d_separated"]
        q = tmp_path / "q.json"
        q.write_text(json.dumps({"dsep": {"Y": ["S"], "Z": ["L"], "W": ["T"]}}))
        out = json.loads(run("dsep", "--admg", "smoking", "--query", str(q)).output)
        assert out["d_separated"] is False and out["active_trail"]
        out = json.loads(run("ci", "--model", "smoking", "--query", "smoking").output)
        assert out["independent"] and out["d_separated"]

    def test_intervene(self, bundle):
        out = json.loads(run("intervene", "--model", "smoking", "--query", "smoking").output)
        names = [n for n, _ in out["distribution"]["cod"]]
        arr = np.array(out["distribution"]["entries"]).reshape(2, 2, 2)
        assert names == ["S", "T", "L"]
        assert arr[0].sum() == pytest.approx(0.0, abs=1e-15)

    def test_effect_id(self, bundle):
        out = json.loads(run("effect-id", "--admg", "front_door", "--query", "front_door",
                             "--data", "front_door").output)
        assert out["status"] == "identifiable" and out["partition"]["B"] == ["L"]
        m, _ = load_model_file(bundle("front_door")["model"])
        from causal_diagrams.identify import truncated_factorization
        want = sem.marginalize(truncated_factorization(m, {"T": 1}), ["L"])
        np.testing.assert_allclose(out["value"]["entries"], want.array, atol=1e-9)

    @pytest.mark.parametrize("name,status", [("fig71a", "not_identifiable"),
                                             ("fig71b", "not_identifiable"),
                                             ("ex74", "undecided")])
    def test_effect_id_verdicts(self, name, status):
        out = json.loads(run("effect-id", "--admg", name, "--query", name).output)
        assert out["status"] == status

    def test_cf_id(self, bundle):
        out = json.loads(run("cf-id", "--admg", "ex83", "--query", "ex83", "--data", "ex83").output)
        assert out["status"] == "identifiable" and len(out["fragments"]) == 4
        np.testing.assert_allclose(out["value"]["entries"], bundle("ex83")["oracle"]["entries"],
                                   atol=1e-7)
        for name, reason in (("aspirin", "unabsorbed_noise"), ("fig84", "fragment_value_conflict")):
            out = json.loads(run("cf-id", "--admg", name, "--query", name).output)
            assert out["status"] == "FAIL" and out["reason"] == reason

    def test_cf_eval(self, bundle):
        out = json.loads(run("cf-eval", "--model", "aspirin", "--query", "aspirin").output)
        np.testing.assert_allclose(out["distribution"]["entries"],
                                   bundle("aspirin")["oracle"]["entries"], atol=1e-12)

    def test_export_dot(self):
        assert run("export-dot", "--model", "smoking").output.startswith("digraph")
        assert "dir=both" in run("export-dot", "--admg", "front_door").output
        assert "CF" in run("export-dot", "--model", "aspirin", "--query", "aspirin").output

    def test_ingest(self, tmp_path):
        obs = tmp_path / "obs.csv"
        obs.write_text("X,Y\n0,0\n0,1\n1,1\n1,1\n")
        exp = tmp_path / "exp.csv"
        exp.write_text("X,Y\n1,0\n")
        out = json.loads(run("ingest", "--data", str(obs), "--data", f"X@{exp}").output)
        again = tables_from_json(out)
        np.testing.assert_allclose(again.observational.array, [[0.25, 0.25], [0.0, 0.5]])
        np.testing.assert_allclose(again.table(["X"]).array, [[0.0, 0.0], [1.0, 0.0]])
        assert out["samples"] == {"observational": 4, "X": 1}


class TestExitCodes:
    def test_missing_option_is_schema_error(self):
        res = run("joint", ok=(2,))
        assert json.loads(res.output.strip().splitlines()[-1])["error"] == "schema"

    def test_unreadable_file(self, tmp_path):
        p = tmp_path / "x.json"
        p.write_text("{not json")
        run("joint", "--model", str(p), ok=(2,))

    def test_bad_samples(self, tmp_path):
        p = tmp_path / "s.csv"
        p.write_text("X,Y\n0,a\n")
        run("ingest", "--data", str(p), ok=(2,))

    def test_budget(self, tmp_path, bundle):
        from causal_diagrams.graph import Dag
        from causal_diagrams.sampling import random_fcm
        g = Dag(tuple("ABCDEFGHIJKLMN"))
        fcm = random_fcm(0, g, noise_card=4)
        p = tmp_path / "big.json"
        p.write_text(json.dumps({"fcm": fcm_to_json(fcm)}))
        q = tmp_path / "q.json"
        q.write_text(json.dumps({"cf_eval": {"worlds": [
            {"do": {}, "cond": {"A": 0}, "outputs": []},
            {"do": {"A": 1}, "cond": {}, "outputs": ["B"]}]}}))
        res = run("cf-eval", "--model", str(p), "--query", str(q), ok=(3,))
        assert json.loads(res.output.strip().splitlines()[-1])["error"] == "budget"

    def test_bad_intervention_value(self, tmp_path):
        q = tmp_path / "q.json"
        q.write_text(json.dumps({"intervene": [{"kind": "do", "var": "S", "value": 9}]}))
        run("intervene", "--model", "smoking", "--query", str(q), ok=(1,))


@pytest.mark.parametrize("args", [
    ("joint", "--model", "smoking"),
    ("effect-id", "--admg", "front_door", "--query", "front_door", "--data", "front_door"),
    ("cf-id", "--admg", "ex83", "--query", "ex83", "--data", "ex83"),
    ("export-dot", "--model", "ex83", "--query", "ex83"),
])
def test_repeat_runs_are_byte_identical(args):
    assert run(*args).output == run(*args).output
