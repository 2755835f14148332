"""Common user-simulator surface shared by the neural and agenda simulators.

A simulator is reset with a goal (or samples one), then receives system
acts each turn and returns user acts plus a social-violation flag and a
done flag.  Success is judged by one shared outcome rule so that
cross-evaluation numbers are comparable across simulator families.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .acts import ActType, DialogueAct
from .corpus import relexicalize
from .models import GeneratorModel, encode_turn, generate_response
from .ontology import DONTCARE, Ontology, UserGoal, matching_entities, sample_goal


@dataclass(frozen=True)
class SimTurn:
    user_acts: tuple[DialogueAct, ...]
    violation: bool
    done: bool


class UserSimulator(Protocol):
    def reset(self, goal: UserGoal | None = None) -> UserGoal: ...

    def step(self, system_acts: Sequence[DialogueAct]) -> SimTurn: ...

    def success(self) -> bool: ...


@dataclass
class OutcomeTracker:
    """Watches system acts and decides dialogue success.

    Success iff an entity consistent with every goal constraint was
    offered and each requested slot was informed while that offer stood,
    or no entity matches the constraints and the system said canthelp.
    """

    goal: UserGoal
    ontology: Ontology
    offered: str | None = None
    fulfilled: set[str] = field(default_factory=set)
    canthelp_seen: bool = False

    def _consistent(self, name: str) -> bool:
        e = self.ontology.entity_by_name(name)
        if e is None:
            return False
        return all(
            v == DONTCARE or e.get(s) == v for s, v in self.goal.constraints.items()
        )

    def observe_system(self, acts: Sequence[DialogueAct]) -> None:
        for act in acts:
            if act.act_type is ActType.OFFER and act.slot == "name":
                if self._consistent(act.value):
                    self.offered = act.value
            elif act.act_type is ActType.CANTHELP:
                self.canthelp_seen = True
            elif (
                act.act_type is ActType.INFORM
                and self.offered is not None
                and act.slot in self.goal.requests
            ):
                self.fulfilled.add(act.slot)

    def success(self) -> bool:
        if self.offered is not None and set(self.goal.requests) <= self.fulfilled:
            return True
        if self.canthelp_seen and not matching_entities(self.ontology, self.goal.constraints):
            return True
        return False


def contains_bye(acts: Sequence[DialogueAct]) -> bool:
    return any(a.act_type is ActType.BYE for a in acts)


def ends_with_bye(acts: Sequence[DialogueAct]) -> bool:
    return len(acts) > 0 and acts[-1].act_type is ActType.BYE


class NeuralSimulator:
    """Deploys a trained generator as an interactive user simulator."""

    def __init__(self, model: GeneratorModel, ontology: Ontology, seed: int = 0,
                 mode: str = "sample", name: str = "neural"):
        self.model = model
        self.ontology = ontology
        self.mode = mode
        self.name = name
        self.py_rng = random.Random(seed)
        self.np_rng = np.random.default_rng(seed)
        self.goal: UserGoal | None = None

    def reseed(self, seed: int) -> None:
        self.py_rng = random.Random(seed)
        self.np_rng = np.random.default_rng(seed)

    def reset(self, goal: UserGoal | None = None) -> UserGoal:
        self.goal = goal if goal is not None else sample_goal(self.ontology, self.py_rng)
        self.state = self.model.zero_state()
        self.prev_tokens: tuple[str, ...] = ()
        self.first_turn = True
        self.tracker = OutcomeTracker(self.goal, self.ontology)
        self._prev_ended_bye = False
        self._said_bye = False
        return self.goal

    def step(self, system_acts: Sequence[DialogueAct]) -> SimTurn:
        if self.goal is None:
            raise RuntimeError("simulator used before reset()")
        system_bye = contains_bye(system_acts)
        violation = self._prev_ended_bye and not system_bye
        self.tracker.observe_system(system_acts)
        x = self.model.fx.featurize(self.prev_tokens, system_acts, self.goal, self.first_turn)
        self.first_turn = False
        self.state = encode_turn(self.model, self.state, x)
        rollout = generate_response(self.model, self.state, self.mode, self.np_rng)
        acts = tuple(
            relexicalize(t, self.goal, self.py_rng, self.ontology) for t in rollout.tokens
        )
        self.prev_tokens = rollout.tokens
        self._prev_ended_bye = ends_with_bye(acts)
        self._said_bye = self._said_bye or contains_bye(acts)
        return SimTurn(acts, violation, self._said_bye or system_bye)

    def success(self) -> bool:
        return self.tracker.success()
