import sys
from pathlib import Path

import numpy as np
import pytest

from causal_diagrams import semantics as sem
from causal_diagrams.counterfactual import (BudgetExceeded, CfFail, CfIdentified,
                                            CounterfactualError, CounterfactualTerms, WorldTerm,
                                            counterfactual_diagram, counterfactual_state,
                                            evaluate_counterfactual, floating_scalars,
                                            generalized_counterfactual, id_cf, parallel_worlds,
                                            r_fragments, random_terms, scalar_gates,
                                            simplify_cf, structural_fcm, unabsorbed_noise,
                                            world_wire)
from causal_diagrams.diagram import evaluate
from causal_diagrams.expression import evaluate_expression
from causal_diagrams.graph import Dag, rootify, topological_order
from causal_diagrams.identify import pstar_tables
from causal_diagrams.intervention import Break, Do
from causal_diagrams.io import fcm_from_json
from causal_diagrams.model import model_from_fcm, output_state
from causal_diagrams.sampling import random_admg, random_dag_bounded, random_fcm
from causal_diagrams.semantics import FinObject

import laws

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "scripts"))
from build_bundles import (ASPIRIN, ASPIRIN_TERMS, EX83, EX83_TERMS, FIG84,  # noqa: E402
                           FIG84_TERMS)

TWIN = Dag(("X", "Y"), frozenset({("X", "Y")}))


def triples(terms):
    return [(w.do, w.cond, w.outputs) for w in terms.worlds]


def random_case(rng, n=None, max_card=2):
    g = random_dag_bounded(rng, n or int(rng.integers(2, 6)), 2)
    cards = {v: int(rng.integers(2, max_card + 1)) for v in g.vertices}
    fcm = random_fcm(rng, g, cards, noise_card=int(rng.integers(2, 4)))
    return fcm, random_terms(rng, cards)


def compatible_fcm(rng, a, cards):
    dag, roots = rootify(a)
    full = {**cards, **{r: 2 for r in roots}}
    return random_fcm(rng, dag, full, noise_card=3, outputs=a.vertices)


class TestTerms:
    def test_validation(self):
        with pytest.raises(CounterfactualError):
            CounterfactualTerms([WorldTerm({}, {"X": 1}, ("Y",))])
        with pytest.raises(CounterfactualError):
            WorldTerm({}, {"Y": 1}, ("Y",))
        CounterfactualTerms([WorldTerm({}, {}, ("Y",))], validate=False)

    def test_world_wire(self):
        assert world_wire("X", 1, 1) == "X"
        assert world_wire("X", 2, 3) == "X#2"

    def test_bad_values(self, rng):
        fcm = random_fcm(rng, TWIN)
        with pytest.raises(CounterfactualError):
            counterfactual_diagram(fcm, CounterfactualTerms(
                [WorldTerm({}, {"X": 3}, ()), WorldTerm({}, {}, ("Y",))]))
        with pytest.raises(CounterfactualError):
            counterfactual_diagram(fcm, CounterfactualTerms(
                [WorldTerm({}, {"Q": 0}, ()), WorldTerm({}, {}, ("Y",))]))

    def test_random_terms_are_valid(self, rng):
        for _ in range(20):
            t = random_terms(rng, {"A": 2, "B": 3})
            assert 2 <= len(t) <= 3 and t.variables() <= {"A", "B"}


class TestParallelWorlds:
    def test_single_world_is_the_model(self, rng):
        fcm = random_fcm(rng, random_dag_bounded(rng, 4))
        pw = parallel_worlds(fcm, [[]])
        st = output_state(pw.with_outputs(fcm.variables))
        assert st.max_diff(output_state(model_from_fcm(fcm))) <= 1e-12

    def test_rejects_stochastic_intervention(self, rng):
        fcm = random_fcm(rng, TWIN)
        rho = sem.state(FinObject((("X", 2),)), [0.5, 0.5])
        with pytest.raises(CounterfactualError):
            parallel_worlds(fcm, [[], [Break("X", rho)]])

    def test_worlds_share_noise(self, rng):
        fcm = random_fcm(rng, TWIN)
        pw = parallel_worlds(fcm, [[], []])
        st = output_state(pw.with_outputs(["Y#1", "Y#2"]))
        assert np.allclose(st.array, np.diag(np.diag(st.array)), atol=0)


class TestOracle:
    def test_matches_enumeration(self, rng):
        for _ in range(100):
            fcm, terms = random_case(rng, max_card=3)
            want, _ = laws.twin_reference(fcm, triples(terms))
            got = evaluate_counterfactual(fcm, terms, normalised=False)
            assert np.max(np.abs(got.array - want)) <= 1e-12

    def test_diagram_matches_oracle(self, rng):
        for _ in range(100):
            fcm, terms = random_case(rng)
            res = counterfactual_state(fcm, terms)
            raw = evaluate_counterfactual(fcm, terms, normalised=False)
            norm = evaluate_counterfactual(fcm, terms)
            assert res.unnormalised.max_diff(raw) <= 1e-12
            assert res.normalised.max_diff(norm) <= 1e-12

    def test_budget(self, rng):
        fcm = random_fcm(rng, random_dag_bounded(rng, 4), noise_card=3)
        terms = CounterfactualTerms([WorldTerm({}, {}, (fcm.variables[0],))], validate=False)
        with pytest.raises(BudgetExceeded):
            evaluate_counterfactual(fcm, terms, budget=80)

    def test_aspirin_same_value_is_observational(self, rng):
        for _ in range(30):
            fcm = random_fcm(rng, TWIN, noise_card=3)
            terms = CounterfactualTerms([WorldTerm({}, {"X": 1, "Y": 1}, ()),
                                         WorldTerm({"X": 1}, {}, ("Y",))])
            st = evaluate_counterfactual(fcm, terms)
            joint = output_state(model_from_fcm(fcm))
            obs = sem.conditional(joint, ["X"]).matrix[1]
            assert st.array[1] == pytest.approx(1.0 if obs[1] > 0 else 0.0, abs=1e-12)

    def test_zero_scalar_gate(self, rng):
        fcm = random_fcm(rng, TWIN, noise_card=2)
        fcm.noises["X"] = sem.state(fcm.noises["X"].cod, [1.0, 0.0])
        table = fcm.function_table("X")
        never = 1 - int(table[0])
        terms = CounterfactualTerms([WorldTerm({}, {"X": never}, ()),
                                     WorldTerm({"X": 0}, {}, ("Y",))])
        res = counterfactual_state(fcm, terms)
        assert not res.normalised.array.any()
        simple = simplify_cf(res.diagram, fcm.variables, ["X", "Y"], TWIN)
        gates = [v for _, v in scalar_gates(simple, res.interp)]
        assert gates and min(gates) == 0.0


class TestSimplify:
    def test_soundness(self, rng):
        checked = 0
        while checked < 200:
            g = random_dag_bounded(rng, int(rng.integers(2, 6)), 2)
            fcm = random_fcm(rng, g, {v: 2 for v in g.vertices}, noise_card=int(rng.integers(2, 4)))
            terms = random_terms(rng, fcm.cards)
            d, interp = counterfactual_diagram(fcm, terms)
            before = evaluate(d, interp)
            after = evaluate(simplify_cf(d, fcm.variables, topological_order(g), g), interp)
            assert after.max_diff(before) <= 1e-9
            checked += 1

    def test_trace_and_order_checks(self, rng):
        fcm = random_fcm(rng, TWIN)
        d, _ = counterfactual_diagram(fcm, ASPIRIN_TERMS)
        trace = []
        simplify_cf(d, fcm.variables, ["X", "Y"], TWIN, trace)
        assert [t for t, _ in trace] == ["prepare", "X", "Y", "absorb"]
        with pytest.raises(CounterfactualError):
            simplify_cf(d, fcm.variables, ["Y", "X"], TWIN)
        with pytest.raises(CounterfactualError):
            simplify_cf(d, fcm.variables, ["X"])

    def test_ex83_structure(self):
        fcm, dag, roots = structural_fcm(EX83, {v: 2 for v in EX83.vertices})
        d, _ = counterfactual_diagram(fcm, EX83_TERMS)
        s = simplify_cf(d, fcm.variables, topological_order(dag), dag)
        assert sorted(n.box for n in s.nodes if n.box) == \
            ["c_D", "c_R_{X,Y}", "c_W", "c_X", "c_Y", "c_Z"]
        assert not unabsorbed_noise(s)
        assert len(floating_scalars(s)) == 2
        frags = r_fragments(s, EX83, roots)
        assert [f.observed for f in frags] == [("D",), ("X", "Y"), ("W",), ("Z",)]

    def test_aspirin_keeps_shared_noise(self):
        fcm, dag, _ = structural_fcm(ASPIRIN, {"X": 2, "Y": 2})
        d, _ = counterfactual_diagram(fcm, ASPIRIN_TERMS)
        s = simplify_cf(d, fcm.variables, topological_order(dag), dag)
        assert unabsorbed_noise(s) == ["U_Y"]


class TestIdCf:
    def test_ex83_identified(self, bundle):
        b = bundle("ex83")
        fcm = fcm_from_json(b["model"]["fcm"])
        res = id_cf(EX83, EX83_TERMS, pstar_tables(model_from_fcm(fcm), EX83.vertices))
        assert isinstance(res, CfIdentified) and res
        assert len(res.fragments) == 4
        got = evaluate_expression(res.expression, pstar_tables(model_from_fcm(fcm),
                                                               EX83.vertices))
        np.testing.assert_allclose(got.array.ravel(), b["oracle"]["entries"], atol=1e-7)

    def test_aspirin_fails(self):
        res = id_cf(ASPIRIN, ASPIRIN_TERMS, cards={"X": 2, "Y": 2})
        assert isinstance(res, CfFail) and not res
        assert res.reason == "unabsorbed_noise"

    def test_fig84_fails(self):
        res = id_cf(FIG84, FIG84_TERMS, cards={v: 2 for v in FIG84.vertices})
        assert not res and res.reason == "fragment_value_conflict"

    def test_unknown_variable(self):
        terms = CounterfactualTerms([WorldTerm({}, {"Q": 0}, ()), WorldTerm({}, {}, ("X",))])
        with pytest.raises(CounterfactualError):
            id_cf(ASPIRIN, terms, cards={"X": 2, "Y": 2})
        with pytest.raises(CounterfactualError):
            id_cf(ASPIRIN, ASPIRIN_TERMS)

    def test_random_identifiable_cases(self, rng):
        found = 0
        while found < 30:
            a = random_admg(rng, int(rng.integers(2, 5)), 0.5, 0.3)
            cards = {v: 2 for v in a.vertices}
            terms = random_terms(rng, cards)
            res = id_cf(a, terms, cards=cards)
            if not res:
                continue
            found += 1
            for _ in range(3):
                fcm = compatible_fcm(rng, a, cards)
                data = pstar_tables(model_from_fcm(fcm), a.vertices)
                got = evaluate_expression(res.expression, data)
                want = evaluate_counterfactual(fcm, terms)
                got = sem.permute_cod(got, list(want.cod.names))
                assert np.max(np.abs(got.array - want.array)) <= 1e-7


class TestGeneralized:
    def test_sharp_evidence_modes_agree(self, rng):
        for _ in range(50):
            fcm = random_fcm(rng, TWIN, noise_card=3)
            x = int(rng.integers(2))
            onehot = np.eye(2)[x]
            args = ([[], [Do("X", 1)]], [{"Y": onehot}, {}], [[], ["Y"]])
            up = generalized_counterfactual(fcm, *args, mode="from_effects")
            lo = generalized_counterfactual(fcm, *args, mode="from_states")
            if up.array.sum() > 0:
                assert up.max_diff(lo) <= 1e-12

    def test_matches_enumeration(self, rng):
        for _ in range(30):
            fcm = random_fcm(rng, TWIN, noise_card=3)
            e = rng.dirichlet(np.ones(2))
            args = ([[], [Do("X", 1)]], [{"Y": e}, {}], [[], ["Y"]])
            worlds = [({}, ()), ({"X": 1}, ("Y",))]
            for mode in ("from_effects", "from_states"):
                got = generalized_counterfactual(fcm, *args, mode=mode)
                want = laws.fuzzy_reference(fcm, worlds, {(0, "Y"): e}, mode)
                assert np.max(np.abs(got.array - want)) <= 1e-12

    def test_fuzzy_bundle(self, bundle):
        b = bundle("fuzzy")
        fcm = fcm_from_json(b["model"]["fcm"])
        q = b["query"]
        worlds = [({}, ()), ({"X": 1}, ("Y",))]
        ev = {(0, "Y"): np.array(q["evidence"][0]["Y"])}
        vals = {}
        for mode in ("from_effects", "from_states"):
            want = laws.fuzzy_reference(fcm, worlds, ev, mode)
            got = generalized_counterfactual(fcm, [[], [Do("X", 1)]], [{"Y": ev[(0, "Y")]}, {}],
                                             [[], ["Y"]], mode)
            assert np.max(np.abs(got.array - want)) <= 1e-12
            assert np.max(np.abs(np.array(b["expected"][mode]) - want)) <= 1e-12
            vals[mode] = want
        assert np.max(np.abs(vals["from_effects"] - vals["from_states"])) > 1e-3

    def test_mixed_needs_flag(self, rng):
        fcm = random_fcm(rng, TWIN, noise_card=3)
        e = np.array([0.3, 0.7])
        args = ([[], [Do("X", 1)]], [{"Y": ("effect", e)}, {}], [[], ["Y"]])
        with pytest.raises(CounterfactualError):
            generalized_counterfactual(fcm, *args, mode="mixed")
        got = generalized_counterfactual(fcm, *args, mode="mixed", experimental=True)
        plain = generalized_counterfactual(fcm, [[], [Do("X", 1)]], [{"Y": e}, {}],
                                           [[], ["Y"]], "from_effects")
        assert got.max_diff(plain) <= 1e-15

    def test_errors(self, rng):
        fcm = random_fcm(rng, TWIN, noise_card=3)
        with pytest.raises(CounterfactualError):
            generalized_counterfactual(fcm, [[]], [{}], [["Y"]], "sideways")
        with pytest.raises(CounterfactualError):
            generalized_counterfactual(fcm, [[]], [{"Y": [1.0, 0.0, 0.0]}], [[]])
        with pytest.raises(CounterfactualError):
            generalized_counterfactual(fcm, [[]], [{"Y": [0.5, 0.5]}], [["Y"]])
