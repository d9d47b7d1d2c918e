import json

import numpy as np
import pytest

from causal_diagrams import semantics as sem
from causal_diagrams.cli import bundle_path
from causal_diagrams.expression import evaluate_expression
from causal_diagrams.graph import Admg, c_condition
from causal_diagrams.identify import (EX74, FIG71A, FIG71B, FRONT_DOOR, IdentificationError,
                                      JkzPartition, check_partition, conditional_effect,
                                      effect_expression, ex74_expression,
                                      general_intervened_state, jkz_expression, jkz_partition,
                                      observational_tables, pstar_tables,
                                      random_rootified_model, total_variation,
                                      truncated_factorization, truncated_factorization_product)
from causal_diagrams.io import load_model_file
from causal_diagrams.model import output_state
from causal_diagrams.semantics import FinObject, Morphism
from causal_diagrams.witnesses import (FAMILIES, GATE, observational_gap, search_witness,
                                       target_distance)

import laws


def evaluated(expr, data, names):
    return sem.permute_cod(evaluate_expression(expr, data), list(names)).array


class TestTables:
    def test_observational_table_is_the_joint(self, rng):
        m = random_rootified_model(FRONT_DOOR, rng)
        tab = observational_tables(m).observational
        np.testing.assert_allclose(tab.array, output_state(m).array, atol=1e-15)

    def test_pstar_matches_surgery(self, rng):
        m = random_rootified_model(FRONT_DOOR, rng)
        data = pstar_tables(m)
        assert len(data.tables) == 8
        t = data.table(["T"])
        for v in range(m.cards["T"]):
            want = laws.surgery_reference(m, {"T": v}, ["S", "L"])
            np.testing.assert_allclose(t.array[v], want, atol=1e-12)

    def test_product_formula_matches_surgery(self, rng):
        for _ in range(30):
            m = random_rootified_model(EX74, rng)
            do = {"X": int(rng.integers(m.cards["X"]))}
            a = truncated_factorization(m, do)
            b = truncated_factorization_product(m, do)
            assert a.max_diff(b) <= 1e-12
            assert np.max(np.abs(a.array - laws.surgery_reference(m, do))) <= 1e-12


class TestPartition:
    def test_front_door(self):
        p = jkz_partition(FRONT_DOOR, "T")
        assert "L" in p.b and "S" in p.a

    def test_condition_fails(self):
        assert jkz_partition(FIG71A, "X") is None
        assert jkz_partition(FIG71B, "X") is None
        assert jkz_partition(EX74, "X") is None

    def test_unknown_vertex(self):
        with pytest.raises(IdentificationError):
            jkz_partition(FRONT_DOOR, "Q")

    def test_children_always_in_b(self, rng):
        for a, x, p in laws.comb_graphs(rng, 30):
            assert set(a.children(x)) <= set(p.b)
            assert sorted(p.a + p.b + p.c + (x,)) == sorted(a.vertices)

    def test_condition_without_comb_shape(self):
        # X's confounded partner D feeds C, a child of X: no comb ordering
        a = Admg(tuple("ABCDE"),
                 frozenset({("A", "C"), ("A", "E"), ("B", "E"), ("D", "C"), ("E", "D")}),
                 frozenset({("A", "D"), ("B", "E")}))
        assert c_condition(a, "A")
        assert jkz_partition(a, "A") is None

    def test_wrong_partition_is_rejected(self):
        bad = JkzPartition("T", (), ("S", "L"), ())
        assert not check_partition(FRONT_DOOR, bad)

    def test_uncovering_partition_raises(self):
        with pytest.raises(IdentificationError):
            jkz_expression((("S", 2), ("T", 2), ("L", 2)), JkzPartition("T", (), ("L",), ()), 0)


class TestCombFormula:
    def test_front_door_matches_surgery(self, rng):
        p = jkz_partition(FRONT_DOOR, "T")
        for _ in range(60):
            m = random_rootified_model(FRONT_DOOR, rng)
            v = int(rng.integers(m.cards["T"]))
            expr = jkz_expression(observational_tables(m).roster, p, v)
            got = evaluated(expr, observational_tables(m), FRONT_DOOR.vertices)
            assert np.max(np.abs(got - laws.surgery_reference(m, {"T": v}))) <= 1e-7

    def test_random_graphs_match_surgery(self, rng):
        for a, x, p in laws.comb_graphs(rng, 25):
            for _ in range(3):
                m = random_rootified_model(a, rng)
                data = observational_tables(m)
                v = int(rng.integers(m.cards[x]))
                got = evaluated(jkz_expression(data.roster, p, v), data, a.vertices)
                assert np.max(np.abs(got - laws.surgery_reference(m, {x: v}))) <= 1e-7

    def test_stochastic_eta(self, rng):
        p = jkz_partition(FRONT_DOOR, "T")
        for _ in range(20):
            m = random_rootified_model(FRONT_DOOR, rng)
            data = observational_tables(m)
            t = FinObject((("T", m.cards["T"]),))
            for dom in (sem.UNIT, t, FinObject((("S", m.cards["S"]),))):
                eta = Morphism(dom, t, rng.dirichlet(np.ones(t.size), size=dom.cards or None))
                got = evaluated(jkz_expression(data.roster, p, eta), data, FRONT_DOOR.vertices)
                want = general_intervened_state(m, "T", eta)
                want = sem.permute_cod(want, list(FRONT_DOOR.vertices)).array
                assert np.max(np.abs(got - want)) <= 1e-9

    def test_eta_reading_descendant_rejected(self, rng):
        m = random_rootified_model(FRONT_DOOR, rng)
        roster = observational_tables(m).roster
        l, t = FinObject((("L", m.cards["L"]),)), FinObject((("T", m.cards["T"]),))
        eta = Morphism(l, t, rng.dirichlet(np.ones(t.size), size=l.cards))
        with pytest.raises(IdentificationError):
            jkz_expression(roster, jkz_partition(FRONT_DOOR, "T"), eta)

    def test_effect_expression(self, rng):
        cards = {"S": 2, "T": 3, "L": 2}
        p, expr = effect_expression(FRONT_DOOR, "T", 2, cards)
        assert p == jkz_partition(FRONT_DOOR, "T")
        assert effect_expression(FIG71A, "X", 0, {"X": 2, "Z": 2, "Y": 2}) is None


class TestWorkedGraphs:
    def test_fig71a_conditional_is_observational(self, rng):
        checked = 0
        for _ in range(50):
            m = random_rootified_model(FIG71A, rng, sparsity=0.2)
            obs = sem.conditional(sem.marginalize(output_state(m), ["Z", "Y"]), ["Z"])
            for v in range(m.cards["X"]):
                cond, gate = conditional_effect(m, "X", v, ["Y"], ["Z"])
                live = gate.array > 0
                assert np.max(np.abs(cond.matrix[live] - obs.matrix[live])) <= 1e-9
                checked += int(live.sum())
        assert checked > 0

    def test_fig71b_marginal_is_observational(self, rng):
        for _ in range(50):
            m = random_rootified_model(FIG71B, rng, sparsity=0.2)
            py = sem.marginalize(output_state(m), ["Y"])
            for v in range(m.cards["X"]):
                eff = sem.marginalize(truncated_factorization(m, {"X": v}), ["Y"])
                assert eff.max_diff(py) <= 1e-12

    def test_ex74_expression(self, rng):
        assert not c_condition(EX74, "X")
        for _ in range(40):
            m = random_rootified_model(EX74, rng, method="rho")
            data = observational_tables(m)
            v = int(rng.integers(m.cards["X"]))
            got = evaluated(ex74_expression(data.roster, v), data, ["Y1", "Y2"])
            want = laws.surgery_reference(m, {"X": v}, ["Y1", "Y2"])
            assert np.max(np.abs(got - want)) <= 1e-9


class TestWitnesses:
    @pytest.mark.parametrize("name", ["fig71a", "fig71b"])
    def test_shipped_pairs(self, name):
        js = json.loads(bundle_path(name).read_text())
        m1, m2 = (load_model_file(w)[0] for w in js["witness"]["models"])
        assert observational_gap(m1, m2) <= 1e-9
        assert target_distance(FAMILIES[name], m1, m2) >= GATE

    @pytest.mark.parametrize("name", ["fig71a", "fig71b"])
    def test_search_is_reproducible(self, name):
        a1, b1, d1 = search_witness(name, seed=3, restarts=1, steps=20)
        a2, b2, d2 = search_witness(name, seed=3, restarts=1, steps=20)
        assert d1 == d2
        assert output_state(a1).max_diff(output_state(a2)) == 0.0

    @pytest.mark.parametrize("name", ["fig71a", "fig71b"])
    def test_search_finds_a_witness(self, name):
        m1, m2, dist = search_witness(name, seed=0)
        assert observational_gap(m1, m2) <= 1e-9
        assert dist >= GATE

    def test_target_distance_by_hand(self):
        js = json.loads(bundle_path("fig71a").read_text())
        m1, m2 = (load_model_file(w)[0] for w in js["witness"]["models"])
        tv = 0.0
        for v in range(2):
            p = laws.surgery_reference(m1, {"X": v}, ["Y"])
            q = laws.surgery_reference(m2, {"X": v}, ["Y"])
            tv = max(tv, 0.5 * np.abs(p - q).sum())
        assert tv == pytest.approx(target_distance(FAMILIES["fig71a"], m1, m2), abs=1e-12)


def test_total_variation_mask():
    obj = FinObject((("A", 2),))
    p = Morphism(obj, obj, [[1.0, 0.0], [0.5, 0.5]])
    q = Morphism(obj, obj, [[0.0, 1.0], [0.5, 0.5]])
    assert total_variation(p, q) == 1.0
    assert total_variation(p, q, np.array([False, True])) == 0.0
