"""Chat-session engine shared by the terminal REPL and the HTTP service:
scenario rendering, a transparent text-to-act pattern table, and the
turn loop around a frozen policy."""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field
from typing import Sequence

from .acts import ActType, DialogueAct, parse_act, serialize_act
from .manager import (
    DialogueState,
    TURN_CAP,
    realize_action,
    realize_text,
    track,
)
from .ontology import DONTCARE, Ontology, UserGoal
from .policy import PolicyModel, state_features
from .simulators import OutcomeTracker

_REQUEST_WORDS = {
    "address": ("address", "where is it", "where it is"),
    "phone": ("phone number", "phone", "telephone"),
    "postcode": ("postcode", "post code", "zip code"),
}

_KEYWORD_ACTS: tuple[tuple[ActType, tuple[str, ...]], ...] = (
    (ActType.REQALTS, ("anything else", "something else", "another one", "other options", "alternative")),
    (ActType.THANKYOU, ("thank you", "thanks")),
    (ActType.BYE, ("goodbye", "bye", "see you")),
    (ActType.HELLO, ("hello", "hi there", "good morning")),
    (ActType.AFFIRM, ("yes", "yeah", "yep", "correct", "right")),
    (ActType.NEGATE, ("no", "nope", "wrong")),
    (ActType.REPEAT, ("repeat", "say that again", "pardon")),
)

_DONTCARE_WORDS = ("dontcare", "dont care", "do not care", "any ", "any.", "whatever", "does not matter", "doesnt matter")


class PatternMatcher:
    """Maps constrained scenario language onto dialogue acts.

    Ontology values are matched longest-first on word boundaries; a small
    verb table covers requests, confirmations and closings.  A dontcare
    phrase resolves against the slot the system just asked about.
    """

    def __init__(self, ontology: Ontology):
        self.ontology = ontology
        values = []
        for slot, vals in ontology.informable.items():
            for v in vals:
                values.append((v, slot))
        values.sort(key=lambda pair: (-len(pair[0]), pair[0]))
        self._value_patterns = [
            (re.compile(rf"\b{re.escape(v)}\b"), slot, v) for v, slot in values
        ]

    def match(self, text: str, last_system_acts: Sequence[DialogueAct] = ()) -> list[DialogueAct]:
        text = " " + text.lower().strip() + " "
        found: list[tuple[int, DialogueAct]] = []
        for pattern, slot, value in self._value_patterns:
            m = pattern.search(text)
            if m:
                found.append((m.start(), DialogueAct(ActType.INFORM, slot, value)))
                text = text[: m.start()] + " " * (m.end() - m.start()) + text[m.end():]
        for slot, words in _REQUEST_WORDS.items():
            for w in words:
                m = re.search(rf"\b{re.escape(w)}\b", text)
                if m:
                    found.append((m.start(), DialogueAct(ActType.REQUEST, slot)))
                    text = text[: m.start()] + " " * (m.end() - m.start()) + text[m.end():]
                    break
        for phrase in _DONTCARE_WORDS:
            idx = text.find(phrase)
            if idx >= 0:
                slot = self._asked_slot(last_system_acts)
                if slot:
                    found.append((idx, DialogueAct(ActType.INFORM, slot, DONTCARE)))
                    text = text[:idx] + " " * len(phrase) + text[idx + len(phrase):]
                break
        for act_type, words in _KEYWORD_ACTS:
            for w in words:
                m = re.search(rf"\b{re.escape(w)}\b", text)
                if m:
                    found.append((m.start(), DialogueAct(act_type)))
                    text = text[: m.start()] + " " * (m.end() - m.start()) + text[m.end():]
                    break
        found.sort(key=lambda pair: pair[0])
        return [act for _, act in found]

    @staticmethod
    def _asked_slot(last_system_acts: Sequence[DialogueAct]) -> str | None:
        for act in last_system_acts:
            if act.act_type in (ActType.REQUEST, ActType.CONFIRM) and act.slot:
                return act.slot
        return None


_REQUEST_PHRASES = {"address": "the address", "phone": "the phone number", "postcode": "the postcode"}


def scenario_text(goal: UserGoal) -> str:
    """Narrative instruction for a goal, in the evaluation's phrasing."""
    bits = []
    price = goal.constraints.get("pricerange")
    if price:
        bits.append(f"in the {price} price range" if price != DONTCARE else "in any price range")
    food = goal.constraints.get("food")
    if food:
        bits.append(f"that serves {food} food" if food != DONTCARE else "serving any kind of food")
    area = goal.constraints.get("area")
    if area:
        bits.append(f"in the {area} of town" if area != DONTCARE else "anywhere in town")
    wants = [_REQUEST_PHRASES.get(s, f"the {s}") for s in goal.requests]
    if len(wants) == 1:
        req = wants[0]
    else:
        req = ", ".join(wants[:-1]) + " and " + wants[-1]
    return (
        "You want to find a restaurant "
        + " ".join(bits)
        + f", and get {req}."
    )


@dataclass
class TranscriptEntry:
    speaker: str  # system | user
    text: str
    acts: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"speaker": self.speaker, "text": self.text, "acts": list(self.acts)}


class ChatSession:
    """One dialogue between a human (or script) and a frozen policy."""

    def __init__(self, session_id: str, policy_id: str, policy: PolicyModel,
                 ontology: Ontology, goal: UserGoal, matcher: PatternMatcher):
        self.session_id = session_id
        self.policy_id = policy_id
        self.policy = policy
        self.ontology = ontology
        self.goal = goal
        self.matcher = matcher
        self.scenario = scenario_text(goal)
        self.state = DialogueState.initial(ontology)
        self.tracker = OutcomeTracker(goal, ontology)
        self.transcript: list[TranscriptEntry] = []
        self.done = False
        self.last_system_acts: tuple[DialogueAct, ...] = ()
        self.questionnaire: dict | None = None
        self._system_turn()  # the system opens

    @property
    def system_turns(self) -> int:
        return self.state.turn_count

    def _system_turn(self) -> TranscriptEntry:
        phi = state_features(self.state, self.ontology)
        action = self.policy.actions[self.policy.greedy(phi)]
        acts = realize_action(action, self.state, self.ontology)
        self.tracker.observe_system(acts)
        self.last_system_acts = acts
        text = realize_text(acts)
        entry = TranscriptEntry("system", text, [serialize_act(a) for a in acts])
        self.transcript.append(entry)
        if action.kind == "bye" or self.state.turn_count >= TURN_CAP:
            self.done = True
        return entry

    def parse_user_input(self, text: str | None, acts: Sequence[str] | None) -> list[DialogueAct]:
        if acts is not None:
            return [parse_act(a) for a in acts]
        assert text is not None
        stripped = text.strip()
        if "(" in stripped and stripped.endswith(")"):
            try:
                return [parse_act(p) for p in stripped.split(";") if p.strip()]
            except ValueError:
                pass  # fall back to the pattern table
        return self.matcher.match(stripped, self.last_system_acts)

    def utterance(self, text: str | None = None, acts: Sequence[str] | None = None) -> dict:
        if self.done:
            raise RuntimeError("session is finished")
        user_acts = self.parse_user_input(text, acts)
        if not user_acts:
            user_acts = [DialogueAct(ActType.NULL)]
        self.transcript.append(
            TranscriptEntry("user", text or "", [serialize_act(a) for a in user_acts])
        )
        track(self.state, user_acts)
        entry = self._system_turn()
        return {
            "user_acts": [serialize_act(a) for a in user_acts],
            "system_acts": entry.acts,
            "system_text": entry.text,
            "done": self.done,
        }

    def success(self) -> bool:
        return self.tracker.success()

    def transcript_dicts(self) -> list[dict]:
        return [e.to_dict() for e in self.transcript]
