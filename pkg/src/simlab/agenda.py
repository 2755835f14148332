"""Rule-based agenda-driven user simulator.

The user keeps a stack of pending acts derived from the goal: bye() at
the bottom, then the goal requests, the constraint informs, and hello()
on top.  Each turn the incoming system acts mutate the stack through a
small rule table, then the user pops a geometric number of acts (at most
three).
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Sequence

from .acts import ActType, DialogueAct
from .ontology import DONTCARE, Ontology, UserGoal, sample_goal
from .simulators import OutcomeTracker, SimTurn, contains_bye, ends_with_bye

POP_CONTINUE_PROB = 0.4  # chance of popping one more act, i.e. Geom(0.6)
MAX_POP = 3


def _bye() -> DialogueAct:
    return DialogueAct(ActType.BYE)


@dataclass
class Agenda:
    stack: list[DialogueAct]
    goal: UserGoal
    fulfilled_requests: set[str] = field(default_factory=set)
    offered_entity: str | None = None
    conveyed: set[str] = field(default_factory=set)
    prev_user_acts: tuple[DialogueAct, ...] = ()

    def push(self, act: DialogueAct, *, dedup: bool = True) -> None:
        if dedup and act in self.stack:
            self.stack.remove(act)  # move an already pending copy to the top
        self.stack.append(act)

    def clear_to_bye(self) -> None:
        self.stack = [a for a in self.stack if a.act_type is ActType.BYE][:1] or [_bye()]


def agenda_init(goal: UserGoal, rng: random.Random) -> Agenda:
    requests = [DialogueAct(ActType.REQUEST, s) for s in goal.requests]
    rng.shuffle(requests)
    informs = [
        DialogueAct(ActType.INFORM, s, v) for s, v in sorted(goal.constraints.items())
    ]
    rng.shuffle(informs)
    stack = [_bye()] + requests + informs + [DialogueAct(ActType.HELLO)]
    return Agenda(stack, goal)


def _constraint_violated(a: Agenda, act: DialogueAct) -> bool:
    if act.act_type not in (ActType.INFORM, ActType.OFFER):
        return False
    want = a.goal.constraints.get(act.slot)
    return want is not None and want != DONTCARE and act.value not in (want, DONTCARE)


def _confirm_consistent(a: Agenda, act: DialogueAct) -> bool:
    want = a.goal.constraints.get(act.slot)
    if want is None or want == DONTCARE:
        return act.value == DONTCARE
    return act.value == want


def agenda_receive(a: Agenda, system_acts: Sequence[DialogueAct], rng: random.Random,
                   ontology: Ontology) -> None:
    """Apply the reception rules, in order, for one system turn."""
    # R1: answer system requests from the goal, dontcare when unconstrained
    for act in system_acts:
        if act.act_type is ActType.REQUEST:
            value = a.goal.constraints.get(act.slot, DONTCARE)
            a.push(DialogueAct(ActType.INFORM, act.slot, value))
    # R1b: answer confirms with affirm, or negate plus a correction
    for act in system_acts:
        if act.act_type is ActType.CONFIRM:
            if _confirm_consistent(a, act):
                a.push(DialogueAct(ActType.AFFIRM), dedup=False)
            else:
                value = a.goal.constraints.get(act.slot, DONTCARE)
                a.push(DialogueAct(ActType.INFORM, act.slot, value))
                a.push(DialogueAct(ActType.NEGATE), dedup=False)
    # R2: correct constraint violations, sometimes asking for alternatives
    violated = False
    for act in system_acts:
        if _constraint_violated(a, act):
            violated = True
            a.push(DialogueAct(ActType.INFORM, act.slot, a.goal.constraints[act.slot]))
    if violated and rng.random() < 0.5:
        a.push(DialogueAct(ActType.REQALTS))
    # R3: a consistent offer is recorded and pending requests are queued
    for act in system_acts:
        if act.act_type is ActType.OFFER and act.slot == "name":
            e = ontology.entity_by_name(act.value)
            consistent = e is not None and all(
                v == DONTCARE or e.get(s) == v for s, v in a.goal.constraints.items()
            )
            if consistent:
                a.offered_entity = act.value
                for slot in a.goal.requests:
                    if slot not in a.fulfilled_requests:
                        a.push(DialogueAct(ActType.REQUEST, slot))
    # R4: informs that answer pending requests while an entity is offered
    for act in system_acts:
        if (
            act.act_type is ActType.INFORM
            and a.offered_entity is not None
            and act.slot in a.goal.requests
        ):
            a.fulfilled_requests.add(act.slot)
            a.stack = [
                s for s in a.stack
                if not (s.act_type is ActType.REQUEST and s.slot == act.slot)
            ]
    # R5: repeat/null makes the user restate the previous turn
    if any(act.act_type in (ActType.REPEAT, ActType.NULL) for act in system_acts):
        for act in reversed(a.prev_user_acts):
            a.push(act, dedup=False)
    # the user gives up when the system cannot help
    if any(act.act_type is ActType.CANTHELP for act in system_acts):
        a.clear_to_bye()
    # R6: everything conveyed, offered and answered: wrap up
    if (
        a.conveyed >= set(a.goal.constraints)
        and a.offered_entity is not None
        and a.fulfilled_requests >= set(a.goal.requests)
    ):
        a.clear_to_bye()


def agenda_respond(a: Agenda, rng: random.Random) -> tuple[DialogueAct, ...]:
    """Pop 1 + Geom(0.6) acts, capped at three and at the stack size."""
    if not a.stack:
        acts: tuple[DialogueAct, ...] = (DialogueAct(ActType.NULL),)
        a.prev_user_acts = acts
        return acts
    k = 1
    while k < MAX_POP and rng.random() < POP_CONTINUE_PROB:
        k += 1
    k = min(k, len(a.stack))
    popped = []
    for _ in range(k):
        # bye is only ever a whole turn by itself, so it stays popped last
        if a.stack[-1].act_type is ActType.BYE and popped:
            break
        popped.append(a.stack.pop())
    for act in popped:
        if act.act_type is ActType.INFORM and act.slot in a.goal.constraints:
            if act.value == a.goal.constraints[act.slot]:
                a.conveyed.add(act.slot)
        elif act.act_type is ActType.REQALTS:
            # the rejected offer and its answers no longer count
            a.offered_entity = None
            a.fulfilled_requests.clear()
    acts = tuple(popped)
    a.prev_user_acts = acts
    return acts


class AgendaSimulator:
    """Agenda-based user simulator behind the common simulator surface."""

    def __init__(self, ontology: Ontology, seed: int = 0, name: str = "agenda"):
        self.ontology = ontology
        self.rng = random.Random(seed)
        self.name = name
        self.goal: UserGoal | None = None

    def reseed(self, seed: int) -> None:
        self.rng = random.Random(seed)

    def reset(self, goal: UserGoal | None = None) -> UserGoal:
        self.goal = goal if goal is not None else sample_goal(self.ontology, self.rng)
        self.agenda = agenda_init(self.goal, self.rng)
        self.tracker = OutcomeTracker(self.goal, self.ontology)
        self._done = False
        return self.goal

    def step(self, system_acts: Sequence[DialogueAct]) -> SimTurn:
        if self.goal is None:
            raise RuntimeError("simulator used before reset()")
        violation = (
            ends_with_bye(self.agenda.prev_user_acts) and not contains_bye(system_acts)
        )
        self.tracker.observe_system(system_acts)
        if contains_bye(system_acts):
            self._done = True
            acts: tuple[DialogueAct, ...] = (_bye(),)
            self.agenda.prev_user_acts = acts
            return SimTurn(acts, violation, True)
        agenda_receive(self.agenda, system_acts, self.rng, self.ontology)
        acts = agenda_respond(self.agenda, self.rng)
        if contains_bye(acts):
            self._done = True
        return SimTurn(acts, violation, self._done)

    def success(self) -> bool:
        return self.tracker.success()
