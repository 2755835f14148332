import random

import pytest

from simlab.acts import ActType, DialogueAct, parse_act
from simlab.manager import (
    DialogueState,
    SummaryAction,
    action_space,
    handcrafted_policy,
    realize_action,
    realize_text,
    track,
)


class TestTrack:
    def test_focus_rule_latest_inform_wins(self, toy_ontology):
        s = DialogueState.initial(toy_ontology)
        track(s, [parse_act("inform(food=indian)")])
        track(s, [parse_act("inform(food=chinese)")])
        assert s.slots["food"].value == "chinese"
        assert not s.slots["food"].grounded

    def test_repeated_inform_grounds(self, toy_ontology):
        s = DialogueState.initial(toy_ontology)
        track(s, [parse_act("inform(food=indian)")])
        track(s, [parse_act("inform(food=indian)")])
        assert s.slots["food"].grounded

    def test_confirm_affirm_grounds(self, toy_ontology):
        s = DialogueState.initial(toy_ontology)
        track(s, [parse_act("inform(food=indian)")])
        realize_action(SummaryAction("confirm", "food"), s, toy_ontology)
        track(s, [parse_act("affirm()")])
        assert s.slots["food"].grounded

    def test_confirm_negate_clears(self, toy_ontology):
        s = DialogueState.initial(toy_ontology)
        track(s, [parse_act("inform(food=indian)")])
        realize_action(SummaryAction("confirm", "food"), s, toy_ontology)
        track(s, [parse_act("negate()")])
        assert s.slots["food"].value is None

    def test_reqalts_clears_offer(self, toy_ontology):
        s = DialogueState.initial(toy_ontology)
        s.offered_entity = "golden curry"
        track(s, [parse_act("reqalts()")])
        assert s.offered_entity is None
        assert "golden curry" in s.rejected

    def test_request_recorded(self, toy_ontology):
        s = DialogueState.initial(toy_ontology)
        track(s, [parse_act("request(address)"), parse_act("request(phone)")])
        assert s.requested == ["address", "phone"]


class TestActionSpace:
    def test_size(self, toy_ontology):
        assert len(action_space(toy_ontology)) == 2 * 3 + 5


class TestRealize:
    def test_offer_emits_entity_and_informs(self, toy_ontology):
        s = DialogueState.initial(toy_ontology)
        track(s, [parse_act("inform(food=indian)"), parse_act("inform(area=centre)")])
        acts = realize_action(SummaryAction("offer"), s, toy_ontology)
        assert acts[0].act_type is ActType.OFFER
        assert acts[0].value == "golden curry"
        informed = {a.slot for a in acts[1:]}
        assert informed == {"food", "area"}
        assert s.offered_entity == "golden curry"

    def test_offer_excludes_rejected(self, toy_ontology):
        s = DialogueState.initial(toy_ontology)
        track(s, [parse_act("inform(food=indian)")])  # four indian entities
        first = realize_action(SummaryAction("offer"), s, toy_ontology)[0].value
        s.rejected.append(first)
        second = realize_action(SummaryAction("offer"), s, toy_ontology)[0].value
        assert second != first

    def test_offer_wraps_when_all_rejected(self, toy_ontology):
        s = DialogueState.initial(toy_ontology)
        track(s, [parse_act("inform(food=indian)"), parse_act("inform(area=centre)")])
        s.rejected.append("golden curry")  # the only match
        acts = realize_action(SummaryAction("offer"), s, toy_ontology)
        assert acts[0].value == "golden curry"

    def test_offer_no_match_becomes_canthelp(self, toy_ontology):
        s = DialogueState.initial(toy_ontology)
        track(s, [parse_act("inform(food=thai)"), parse_act("inform(area=east)")])
        acts = realize_action(SummaryAction("offer"), s, toy_ontology)
        assert acts == (DialogueAct(ActType.CANTHELP),)

    def test_inform_requested(self, toy_ontology):
        s = DialogueState.initial(toy_ontology)
        s.offered_entity = "golden curry"
        track(s, [parse_act("request(address)")])
        acts = realize_action(SummaryAction("inform_requested"), s, toy_ontology)
        assert acts == (DialogueAct(ActType.INFORM, "address", "17 mill road"),)
        assert s.requested == []

    def test_bye_one_to_one(self, toy_ontology):
        s = DialogueState.initial(toy_ontology)
        assert realize_action(SummaryAction("bye"), s, toy_ontology) == (
            DialogueAct(ActType.BYE),
        )

    def test_never_references_unknown_entity(self, toy_ontology):
        rng = random.Random(0)
        for seed in range(50):
            s = DialogueState.initial(toy_ontology)
            slots = list(toy_ontology.slots)
            rng.shuffle(slots)
            for slot in slots[:2]:
                value = rng.choice(list(toy_ontology.informable[slot]))
                track(s, [DialogueAct(ActType.INFORM, slot, value)])
            acts = realize_action(SummaryAction("offer"), s, toy_ontology)
            for a in acts:
                if a.act_type is ActType.OFFER:
                    assert a.value in toy_ontology.entity_names


class TestRealizeText:
    def test_template_fixtures(self):
        assert (
            realize_text([parse_act("offer(name=golden curry)")])
            == "Golden curry is a nice restaurant."
        )
        assert realize_text([parse_act("request(food)")]) == "What kind of food would you like?"
        assert realize_text([parse_act("bye()")]) == "Goodbye."

    def test_concatenation_deterministic(self):
        acts = [parse_act("offer(name=cotto)"), parse_act("inform(food=british)")]
        assert realize_text(acts) == realize_text(acts)
        assert realize_text(acts) == "Cotto is a nice restaurant. It serves british food."


class TestHandcrafted:
    def test_requests_missing_slot_first(self, toy_ontology):
        s = DialogueState.initial(toy_ontology)
        assert handcrafted_policy(s, toy_ontology) == SummaryAction("request", "food")

    def test_bye_after_user_bye(self, toy_ontology):
        s = DialogueState.initial(toy_ontology)
        s.last_user_acts = (DialogueAct(ActType.BYE),)
        assert handcrafted_policy(s, toy_ontology) == SummaryAction("bye")
