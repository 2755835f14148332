import json
import random

import pytest
from hypothesis import given, settings, strategies as st

from simlab.ontology import (
    OntologyError,
    UserGoal,
    load_ontology,
    matching_entities,
    sample_goal,
)


class TestLoad:
    def test_toy_ontology_shape(self, toy_ontology):
        assert set(toy_ontology.slots) == {"food", "area", "pricerange"}
        assert set(toy_ontology.requestable) == {"address", "phone", "postcode"}
        assert len(toy_ontology.entities) == 20

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_ontology(tmp_path / "nope.json")

    def test_value_absent_from_informable(self, tmp_path):
        doc = {
            "informable": {"food": ["indian"]},
            "requestable": ["address"],
            "entities": [{"name": "x", "food": "martian", "address": "1 road"}],
        }
        p = tmp_path / "bad.json"
        p.write_text(json.dumps(doc))
        with pytest.raises(OntologyError):
            load_ontology(p)

    def test_duplicate_entity_names(self, tmp_path):
        doc = {
            "informable": {"food": ["indian"]},
            "requestable": ["address"],
            "entities": [{"name": "x", "food": "indian"}, {"name": "x", "food": "indian"}],
        }
        p = tmp_path / "dup.json"
        p.write_text(json.dumps(doc))
        with pytest.raises(OntologyError):
            load_ontology(p)

    def test_empty_entities_warns_but_loads(self, tmp_path, caplog):
        doc = {"informable": {"food": ["indian"]}, "requestable": ["address"], "entities": []}
        p = tmp_path / "empty.json"
        p.write_text(json.dumps(doc))
        import logging

        with caplog.at_level(logging.WARNING):
            o = load_ontology(p)
        assert o.entities == ()
        assert any("no entities" in r.message for r in caplog.records)


class TestGoal:
    def test_needs_constraint_and_request(self):
        with pytest.raises(ValueError):
            UserGoal({}, ("address",))
        with pytest.raises(ValueError):
            UserGoal({"food": "indian"}, ())

    def test_same_seed_same_goal(self, toy_ontology):
        g1 = sample_goal(toy_ontology, random.Random(42))
        g2 = sample_goal(toy_ontology, random.Random(42))
        assert g1 == g2

    def test_goal_sizes(self, toy_ontology):
        rng = random.Random(3)
        for _ in range(200):
            g = sample_goal(toy_ontology, rng)
            assert 1 <= len(g.constraints) <= 3
            assert 1 <= len(g.requests) <= 3
            assert all(s in toy_ontology.informable for s in g.constraints)
            assert all(s in toy_ontology.requestable for s in g.requests)

    def test_satisfiable_fraction(self, toy_ontology):
        rng = random.Random(11)
        n = 10_000
        satisfiable = sum(
            bool(matching_entities(toy_ontology, sample_goal(toy_ontology, rng).constraints))
            for _ in range(n)
        )
        assert 0.88 <= satisfiable / n <= 1.0


class TestMatching:
    def test_empty_constraints_all_entities(self, toy_ontology):
        assert len(matching_entities(toy_ontology, {})) == 20

    def test_known_entity_found(self, toy_ontology):
        e = toy_ontology.entities[0]
        constraints = {s: e[s] for s in toy_ontology.slots}
        assert e in matching_entities(toy_ontology, constraints)

    def test_matches_equal_brute_force(self, toy_ontology):
        constraints = {"food": "indian", "pricerange": "moderate"}
        expected = [
            e
            for e in toy_ontology.entities
            if e["food"] == "indian" and e["pricerange"] == "moderate"
        ]
        assert matching_entities(toy_ontology, constraints) == expected

    def test_dontcare_matches_everything(self, toy_ontology):
        assert len(matching_entities(toy_ontology, {"food": "dontcare"})) == 20

    def test_unknown_slot_rejected(self, toy_ontology):
        with pytest.raises(ValueError):
            matching_entities(toy_ontology, {"smell": "nice"})

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_monotone_under_added_constraints(self, toy_ontology, seed):
        rng = random.Random(seed)
        slots = list(toy_ontology.slots)
        c1 = {slots[0]: rng.choice(toy_ontology.informable[slots[0]])}
        c2 = dict(c1)
        c2[slots[1]] = rng.choice(toy_ontology.informable[slots[1]])
        wide = matching_entities(toy_ontology, c1)
        narrow = matching_entities(toy_ontology, c2)
        assert all(e in wide for e in narrow)
