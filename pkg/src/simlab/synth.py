"""Synthetic corpus generation: agenda simulator vs the handcrafted policy."""

from __future__ import annotations

from .acts import Dialogue, Turn
from .agenda import AgendaSimulator
from .manager import DialogueState, TURN_CAP, handcrafted_policy, realize_action, track
from .ontology import Ontology


def synthesize_dialogues(o: Ontology, n: int, seed: int) -> list[Dialogue]:
    """Roll out n dialogues at zero error rate, deterministic per seed."""
    if n < 1:
        raise ValueError("need at least one dialogue")
    sim = AgendaSimulator(o, seed=seed)
    dialogues = []
    for i in range(n):
        goal = sim.reset()
        state = DialogueState.initial(o)
        turns = []
        for _ in range(TURN_CAP):
            action = handcrafted_policy(state, o)
            sys_acts = realize_action(action, state, o)
            sim_turn = sim.step(sys_acts)
            turns.append(Turn(tuple(sys_acts), sim_turn.user_acts))
            if action.kind == "bye":
                break
            track(state, sim_turn.user_acts)
        dialogues.append(Dialogue(f"synth-{i:05d}", goal, tuple(turns)))
    return dialogues
