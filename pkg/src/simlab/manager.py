"""Rule-based dialogue system around the policy: state tracking over user
acts, summary-action realization against the entity database, and
template text rendering for the chat surfaces."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from importlib import resources
from typing import Sequence

from .acts import ActType, DialogueAct
from .ontology import DONTCARE, Ontology, matching_entities

TURN_CAP = 30  # system turns per dialogue, shared with the RL loop


@dataclass
class SlotInfo:
    value: str | None = None
    grounded: bool = False


@dataclass
class DialogueState:
    slots: dict[str, SlotInfo]
    requested: list[str] = field(default_factory=list)
    offered_entity: str | None = None
    rejected: list[str] = field(default_factory=list)
    pending_confirm: str | None = None
    last_user_acts: tuple[DialogueAct, ...] = ()
    turn_count: int = 0

    @staticmethod
    def initial(o: Ontology) -> "DialogueState":
        return DialogueState({s: SlotInfo() for s in o.slots})

    def constraints(self) -> dict[str, str]:
        return {s: info.value for s, info in self.slots.items() if info.value is not None}


def track(state: DialogueState, user_acts: Sequence[DialogueAct]) -> DialogueState:
    """Update the state from one (possibly corrupted) user turn."""
    for act in user_acts:
        t = act.act_type
        if t is ActType.INFORM and act.slot in state.slots:
            info = state.slots[act.slot]
            if info.value == act.value:
                info.grounded = True  # repetition grounds the hypothesis
            else:
                state.slots[act.slot] = SlotInfo(act.value, False)
        elif t is ActType.AFFIRM and state.pending_confirm is not None:
            state.slots[state.pending_confirm].grounded = True
            state.pending_confirm = None
        elif t is ActType.NEGATE and state.pending_confirm is not None:
            state.slots[state.pending_confirm] = SlotInfo()
            state.pending_confirm = None
        elif t is ActType.DENY and act.slot in state.slots:
            if state.slots[act.slot].value == act.value:
                state.slots[act.slot] = SlotInfo()
        elif t is ActType.REQUEST:
            if act.slot not in state.requested:
                state.requested.append(act.slot)
        elif t is ActType.REQALTS:
            if state.offered_entity is not None:
                state.rejected.append(state.offered_entity)
                state.offered_entity = None
    state.last_user_acts = tuple(user_acts)
    return state


@dataclass(frozen=True)
class SummaryAction:
    kind: str  # request | confirm | offer | inform_requested | canthelp | repeat | bye
    slot: str | None = None

    def label(self) -> str:
        return f"{self.kind}({self.slot})" if self.slot else self.kind


def action_space(o: Ontology) -> tuple[SummaryAction, ...]:
    """Fixed, enumerable action inventory: 2 per informable slot plus 5."""
    actions = [SummaryAction("request", s) for s in o.slots]
    actions += [SummaryAction("confirm", s) for s in o.slots]
    actions += [
        SummaryAction("offer"),
        SummaryAction("inform_requested"),
        SummaryAction("canthelp"),
        SummaryAction("repeat"),
        SummaryAction("bye"),
    ]
    return tuple(actions)


def _pick_entity(state: DialogueState, o: Ontology) -> dict[str, str] | None:
    matches = matching_entities(o, state.constraints())
    if not matches:
        return None
    fresh = [e for e in matches if e["name"] not in state.rejected]
    pool = fresh or matches  # every match rejected: wrap around
    return pool[0]


def realize_action(
    action: SummaryAction,
    state: DialogueState,
    o: Ontology,
    rng: random.Random | None = None,
) -> tuple[DialogueAct, ...]:
    """Map a summary action to concrete system acts, updating the state."""
    state.turn_count += 1
    state.pending_confirm = None
    kind = action.kind
    if kind == "request":
        return (DialogueAct(ActType.REQUEST, action.slot),)
    if kind == "confirm":
        info = state.slots[action.slot]
        if info.value is None:
            return (DialogueAct(ActType.REQUEST, action.slot),)
        state.pending_confirm = action.slot
        return (DialogueAct(ActType.CONFIRM, action.slot, info.value),)
    if kind == "offer":
        entity = _pick_entity(state, o)
        if entity is None:
            return (DialogueAct(ActType.CANTHELP),)
        state.offered_entity = entity["name"]
        acts = [DialogueAct(ActType.OFFER, "name", entity["name"])]
        for slot, value in state.constraints().items():
            if value != DONTCARE:
                acts.append(DialogueAct(ActType.INFORM, slot, entity[slot]))
        return tuple(acts)
    if kind == "inform_requested":
        if state.offered_entity is None:
            return realize_action(SummaryAction("offer"), _uncount(state), o, rng)
        entity = o.entity_by_name(state.offered_entity)
        if not state.requested:
            return (DialogueAct(ActType.OFFER, "name", entity["name"]),)
        acts = tuple(
            DialogueAct(ActType.INFORM, slot, entity.get(slot, "unknown"))
            for slot in state.requested
        )
        state.requested = []
        return acts
    if kind == "canthelp":
        return (DialogueAct(ActType.CANTHELP),)
    if kind == "repeat":
        return (DialogueAct(ActType.REPEAT),)
    if kind == "bye":
        return (DialogueAct(ActType.BYE),)
    raise ValueError(f"unknown summary action kind {kind!r}")


def _uncount(state: DialogueState) -> DialogueState:
    state.turn_count -= 1  # the delegated realize re-counts the turn
    return state


def handcrafted_policy(state: DialogueState, o: Ontology) -> SummaryAction:
    """Fixed policy used to synthesize corpora: request, offer, answer, bye."""
    if any(a.act_type is ActType.BYE for a in state.last_user_acts):
        return SummaryAction("bye")
    for slot in o.slots:
        if state.slots[slot].value is None:
            return SummaryAction("request", slot)
    if state.offered_entity is None:
        return SummaryAction("offer")
    if state.requested:
        return SummaryAction("inform_requested")
    return SummaryAction("offer")


def load_templates() -> dict:
    return json.loads(
        resources.files("simlab").joinpath("data/templates.json").read_text()
    )


_TEMPLATES: dict | None = None


def realize_text(acts: Sequence[DialogueAct], templates: dict | None = None) -> str:
    """Deterministic template rendering, one sentence per act."""
    global _TEMPLATES
    if templates is None:
        if _TEMPLATES is None:
            _TEMPLATES = load_templates()
        templates = _TEMPLATES
    parts = []
    for act in acts:
        entry = templates.get(act.act_type.value, templates["_"])
        if isinstance(entry, dict):
            entry = entry.get(act.slot or "_", entry["_"])
        value = act.value or ""
        parts.append(
            entry.format(
                act=str(act),
                slot=act.slot or "",
                value=value,
                value_cap=value[:1].upper() + value[1:],
            )
        )
    return " ".join(parts)
