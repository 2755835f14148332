"""Domain ontology (slots, values, entity database) and user-goal sampling."""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

logger = logging.getLogger(__name__)

DONTCARE = "dontcare"


class OntologyError(ValueError):
    """Ontology file violates the format or its invariants."""


@dataclass(frozen=True)
class UserGoal:
    """Constraints the user wants satisfied plus slots they want informed."""

    constraints: dict[str, str]
    requests: tuple[str, ...]

    def __post_init__(self):
        if not self.constraints:
            raise ValueError("goal needs at least one constraint")
        if not self.requests:
            raise ValueError("goal needs at least one request")
        object.__setattr__(self, "requests", tuple(sorted(set(self.requests))))

    def to_dict(self) -> dict:
        return {"constraints": dict(self.constraints), "requests": list(self.requests)}

    @staticmethod
    def from_dict(d: Mapping) -> "UserGoal":
        return UserGoal(dict(d["constraints"]), tuple(d["requests"]))


@dataclass(frozen=True)
class Ontology:
    informable: dict[str, tuple[str, ...]]
    requestable: tuple[str, ...]
    entities: tuple[dict[str, str], ...]

    @property
    def slots(self) -> tuple[str, ...]:
        """Informable slot names in file order."""
        return tuple(self.informable)

    @property
    def entity_names(self) -> frozenset[str]:
        return frozenset(e["name"] for e in self.entities)

    def entity_by_name(self, name: str) -> dict[str, str] | None:
        for e in self.entities:
            if e["name"] == name:
                return e
        return None


def _validate(informable, requestable, entities) -> None:
    names = [e.get("name") for e in entities]
    if len(names) != len(set(names)):
        raise OntologyError("duplicate entity names")
    if any(n is None for n in names):
        raise OntologyError("entity without a name")
    for e in entities:
        for slot, values in informable.items():
            if slot in e and e[slot] not in values:
                raise OntologyError(
                    f"entity {e['name']!r}: value {e[slot]!r} absent from informable slot {slot!r}"
                )


def load_ontology(path: str | Path) -> Ontology:
    """Load and validate an ontology JSON file.

    Format: ``{"informable": {...}, "requestable": [...], "entities": [...]}``.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"ontology file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise OntologyError(f"malformed ontology JSON in {path}: {exc}") from exc
    for key in ("informable", "requestable", "entities"):
        if key not in raw:
            raise OntologyError(f"ontology missing {key!r} section")
    informable = {s: tuple(v) for s, v in raw["informable"].items()}
    requestable = tuple(raw["requestable"])
    entities = tuple({k: str(v).lower() for k, v in e.items()} for e in raw["entities"])
    _validate(informable, requestable, entities)
    if not entities:
        logger.warning("ontology %s has no entities", path)
    return Ontology(informable, requestable, entities)


def matching_entities(o: Ontology, constraints: Mapping[str, str]) -> list[dict[str, str]]:
    """Entities satisfying every constraint; ``dontcare`` matches anything."""
    for slot in constraints:
        if slot not in o.informable:
            raise ValueError(f"unknown informable slot {slot!r}")
    out = []
    for e in o.entities:
        if all(v == DONTCARE or e.get(s) == v for s, v in constraints.items()):
            out.append(e)
    return out


def sample_goal(o: Ontology, rng: random.Random) -> UserGoal:
    """Draw a random goal: 1-3 constraints, 1-3 requests.

    With probability 0.9 the constraints are rejection-sampled until they
    match at least one entity; otherwise a single unconstrained draw is
    kept even when unsatisfiable, so no-match behaviour gets exercised.
    """
    if not o.entities:
        raise OntologyError("cannot sample goals from an ontology without entities")

    def draw() -> dict[str, str]:
        k = rng.randint(1, min(3, len(o.slots)))
        slots = rng.sample(list(o.slots), k)
        return {s: rng.choice(list(o.informable[s])) for s in sorted(slots)}

    if rng.random() < 0.9:
        constraints = draw()
        while not matching_entities(o, constraints):
            constraints = draw()
    else:
        constraints = draw()
    n_req = rng.randint(1, min(3, len(o.requestable)))
    requests = tuple(rng.sample(list(o.requestable), n_req))
    return UserGoal(constraints, requests)
