"""Semantic-level dialogue representation: acts, turns, dialogues.

Acts follow the grammar ``acttype '(' [slot ['=' value]] ')'`` where the
value may contain spaces.  Values are lowercased and stripped at parse
time.  Multi-slot acts are represented as multiple single-slot acts.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Iterable, Sequence

if TYPE_CHECKING:
    from .ontology import Ontology, UserGoal


class ActParseError(ValueError):
    """Malformed act expression. Carries the offending position."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (position {position})")
        self.position = position


class ActVocabularyError(ValueError):
    """Act type outside the closed inventory."""


class ActValidationError(ValueError):
    """Act violates the slot/value presence rules for its type."""


class ActType(enum.Enum):
    INFORM = "inform"
    REQUEST = "request"
    CONFIRM = "confirm"
    DENY = "deny"
    AFFIRM = "affirm"
    NEGATE = "negate"
    HELLO = "hello"
    BYE = "bye"
    REQALTS = "reqalts"
    THANKYOU = "thankyou"
    ACK = "ack"
    REPEAT = "repeat"
    OFFER = "offer"
    CANTHELP = "canthelp"
    WELCOMEMSG = "welcomemsg"
    NULL = "null"


# Arg-shape groups. inform/confirm/offer/deny carry slot=value, request a
# bare slot, everything else no arguments.
VALUE_ACT_TYPES = frozenset(
    {ActType.INFORM, ActType.CONFIRM, ActType.OFFER, ActType.DENY}
)
SLOT_ACT_TYPES = frozenset({ActType.REQUEST})
BARE_ACT_TYPES = frozenset(ActType) - VALUE_ACT_TYPES - SLOT_ACT_TYPES

_ACT_BY_NAME = {t.value: t for t in ActType}


@dataclass(frozen=True)
class DialogueAct:
    act_type: ActType
    slot: str | None = None
    value: str | None = None

    def __post_init__(self):
        t = self.act_type
        if t in VALUE_ACT_TYPES:
            if self.slot is None or self.value is None:
                raise ActValidationError(f"{t.value} requires slot=value")
        elif t in SLOT_ACT_TYPES:
            if self.slot is None or self.value is not None:
                raise ActValidationError(f"{t.value} requires a bare slot")
        else:
            if self.slot is not None or self.value is not None:
                raise ActValidationError(f"{t.value} takes no arguments")

    def __str__(self) -> str:
        return serialize_act(self)


def parse_act(text: str) -> DialogueAct:
    """Parse an act expression such as ``inform(food=modern european)``."""
    text = text.strip()
    open_pos = text.find("(")
    if open_pos < 0:
        raise ActParseError("expected '('", len(text))
    if not text.endswith(")"):
        raise ActParseError("expected ')'", len(text))
    name = text[:open_pos].strip().lower()
    if name not in _ACT_BY_NAME:
        raise ActVocabularyError(f"unknown act type {name!r}")
    inner = text[open_pos + 1 : -1]
    slot: str | None = None
    value: str | None = None
    if inner.strip():
        eq = inner.find("=")
        if eq < 0:
            slot = inner.strip().lower()
        else:
            slot = inner[:eq].strip().lower()
            value = inner[eq + 1 :].strip().lower()
            if not slot:
                raise ActParseError("empty slot name", open_pos + 1)
            if not value:
                raise ActParseError("empty value", open_pos + eq + 2)
    try:
        return DialogueAct(_ACT_BY_NAME[name], slot, value)
    except ActValidationError as exc:
        raise ActParseError(str(exc), open_pos) from exc


def serialize_act(act: DialogueAct) -> str:
    """Inverse of parse_act: ``parse_act(serialize_act(a)) == a``."""
    if act.slot is None:
        return f"{act.act_type.value}()"
    if act.value is None:
        return f"{act.act_type.value}({act.slot})"
    return f"{act.act_type.value}({act.slot}={act.value})"


@dataclass(frozen=True)
class Turn:
    """One exchange: the system speaks, then the user responds.

    Either side may be empty (null turns occur in real corpora)."""

    system_acts: tuple[DialogueAct, ...] = ()
    user_acts: tuple[DialogueAct, ...] = ()

    @staticmethod
    def make(system: Iterable[DialogueAct], user: Iterable[DialogueAct]) -> "Turn":
        return Turn(tuple(system), tuple(user))


@dataclass(frozen=True)
class Dialogue:
    id: str
    goal: "UserGoal"
    turns: tuple[Turn, ...]

    def __post_init__(self):
        if not self.turns:
            raise ActValidationError(f"dialogue {self.id!r} has no turns")


@dataclass
class Violation:
    where: str
    message: str


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, where: str, message: str) -> None:
        self.violations.append(Violation(where, message))


def _check_act(act: DialogueAct, o: "Ontology", where: str, report: ValidationReport) -> None:
    slot, value = act.slot, act.value
    if slot is None:
        return
    if act.act_type is ActType.REQUEST:
        # the system requests informable slots, the user requestable ones
        if slot not in o.requestable and slot not in o.informable:
            report.add(where, f"slot {slot!r} neither informable nor requestable")
        return
    if act.act_type is ActType.OFFER and slot == "name":
        if value not in o.entity_names:
            report.add(where, f"unknown entity {value!r}")
        return
    if slot in o.informable:
        if value not in (None, "dontcare") and value not in o.informable[slot]:
            report.add(where, f"value {value!r} not in ontology for slot {slot!r}")
    elif slot in o.requestable:
        pass  # requestable values (addresses, phone numbers) are free text
    else:
        report.add(where, f"unknown slot {slot!r}")


def validate_dialogue(d: Dialogue, o: "Ontology") -> ValidationReport:
    """Report every act whose slot/value is absent from the ontology."""
    report = ValidationReport()
    if not d.turns:
        report.add(d.id, "dialogue has no turns")
    for slot, value in d.goal.constraints.items():
        if slot not in o.informable:
            report.add(f"{d.id}/goal", f"constraint slot {slot!r} not informable")
        elif value != "dontcare" and value not in o.informable[slot]:
            report.add(f"{d.id}/goal", f"constraint value {value!r} unknown for {slot!r}")
    for slot in d.goal.requests:
        if slot not in o.requestable:
            report.add(f"{d.id}/goal", f"request slot {slot!r} not requestable")
    for i, turn in enumerate(d.turns):
        for side, acts in (("system", turn.system_acts), ("user", turn.user_acts)):
            for act in acts:
                _check_act(act, o, f"{d.id}/turn{i}/{side}", report)
    return report
