"""Corpus ingestion, splits, act-token vocabulary, and delexicalization.

Corpus files are JSONL, one dialogue per line:

    {"id": "...",
     "goal": {"constraints": {"food": "indian"}, "requests": ["address"]},
     "turns": [{"system": ["welcomemsg()"], "user": ["inform(food=indian)"]}]}

Act tokens abstract values to one of VALUE_IN_GOAL / VALUE_DONTCARE /
VALUE_OTHER so the decoder vocabulary stays small while goal consistency
remains recoverable.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .acts import ActType, DialogueAct, Dialogue, Turn, parse_act, serialize_act
from .ontology import DONTCARE, Ontology, UserGoal

logger = logging.getLogger(__name__)

SOS = "<SOS>"
EOS = "<EOS>"
PAD = "<PAD>"
UNK = "<UNK>"
SPECIALS = (SOS, EOS, PAD, UNK)

VALUE_IN_GOAL = "VALUE_IN_GOAL"
VALUE_DONTCARE = "VALUE_DONTCARE"
VALUE_OTHER = "VALUE_OTHER"

MAX_USER_TOKENS = 3


class CorpusError(ValueError):
    """Corpus file malformed or unusable."""


def delexicalize(act: DialogueAct, goal: UserGoal) -> str:
    """Map an act to its token pattern, abstracting the value."""
    t = act.act_type.value
    if act.slot is None:
        return f"{t}()"
    if act.value is None:
        return f"{t}({act.slot})"
    if act.value == DONTCARE:
        cls = VALUE_DONTCARE
    elif goal.constraints.get(act.slot) == act.value:
        cls = VALUE_IN_GOAL
    else:
        cls = VALUE_OTHER
    return f"{t}({act.slot}):{cls}"


def relexicalize(token: str, goal: UserGoal, rng: random.Random, o: Ontology) -> DialogueAct:
    """Instantiate a token pattern back into a concrete act.

    VALUE_IN_GOAL for a slot absent from the goal resolves as dontcare.
    The UNK pattern degrades to null().
    """
    if token in (SOS, EOS, PAD):
        raise ValueError(f"cannot relexicalize control token {token}")
    if token == UNK:
        return DialogueAct(ActType.NULL)
    pattern, _, cls = token.partition(":")
    name, _, rest = pattern.partition("(")
    if not rest.endswith(")"):
        raise ValueError(f"malformed act token {token!r}")
    try:
        act_type = ActType(name)
    except ValueError as exc:
        raise ValueError(f"unknown act type in token {token!r}") from exc
    slot = rest[:-1] or None
    if not cls:
        return DialogueAct(act_type, slot)
    if cls == VALUE_DONTCARE:
        value = DONTCARE
    elif cls == VALUE_IN_GOAL:
        value = goal.constraints.get(slot, DONTCARE)
    elif cls == VALUE_OTHER:
        exclude = goal.constraints.get(slot)
        pool = [v for v in o.informable.get(slot, ()) if v != exclude]
        value = rng.choice(pool) if pool else DONTCARE
    else:
        raise ValueError(f"unknown value class {cls!r} in token {token!r}")
    return DialogueAct(act_type, slot, value)


class Vocab:
    """Finite token inventory with SOS/EOS/PAD pinned at indices 0/1/2."""

    def __init__(self, tokens: Iterable[str]):
        content = sorted(set(tokens) - set(SPECIALS))
        self.tokens: tuple[str, ...] = SPECIALS + tuple(content)
        self.index = {t: i for i, t in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def encode(self, token: str) -> int:
        return self.index.get(token, self.index[UNK])

    def decode(self, idx: int) -> str:
        return self.tokens[idx]

    @property
    def sos(self) -> int:
        return 0

    @property
    def eos(self) -> int:
        return 1

    @property
    def pad(self) -> int:
        return 2

    @property
    def unk(self) -> int:
        return 3


def user_turn_tokens(turn: Turn, goal: UserGoal) -> tuple[str, ...]:
    """Reference user tokens for a turn, truncated to the decoder cap."""
    toks = tuple(delexicalize(a, goal) for a in turn.user_acts)
    return toks[:MAX_USER_TOKENS]


def system_turn_tokens(turn: Turn, goal: UserGoal) -> tuple[str, ...]:
    return tuple(delexicalize(a, goal) for a in turn.system_acts)


@dataclass
class CorpusSplit:
    train: tuple[Dialogue, ...]
    dev: tuple[Dialogue, ...]
    test: tuple[Dialogue, ...]
    vocab: Vocab
    sys_vocab: Vocab

    @property
    def all_dialogues(self) -> tuple[Dialogue, ...]:
        return self.train + self.dev + self.test


def _parse_dialogue(raw: dict, line_no: int) -> Dialogue:
    try:
        goal = UserGoal.from_dict(raw["goal"])
        turns = tuple(
            Turn(
                tuple(parse_act(a) for a in t.get("system", [])),
                tuple(parse_act(a) for a in t.get("user", [])),
            )
            for t in raw["turns"]
        )
        return Dialogue(str(raw["id"]), goal, turns)
    except (KeyError, ValueError, TypeError) as exc:
        raise CorpusError(f"line {line_no}: {exc}") from exc


def read_dialogues(path: str | Path) -> list[Dialogue]:
    dialogues = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"line {line_no}: invalid JSON: {exc}") from exc
            dialogues.append(_parse_dialogue(raw, line_no))
    return dialogues


def dialogue_to_dict(d: Dialogue) -> dict:
    return {
        "id": d.id,
        "goal": d.goal.to_dict(),
        "turns": [
            {
                "system": [serialize_act(a) for a in t.system_acts],
                "user": [serialize_act(a) for a in t.user_acts],
            }
            for t in d.turns
        ],
    }


def write_dialogues(dialogues: Sequence[Dialogue], path: str | Path) -> None:
    with open(path, "w") as fh:
        for d in dialogues:
            fh.write(json.dumps(dialogue_to_dict(d), sort_keys=True) + "\n")


def build_vocabs(train: Sequence[Dialogue]) -> tuple[Vocab, Vocab]:
    user_tokens: set[str] = set()
    sys_tokens: set[str] = set()
    for d in train:
        for turn in d.turns:
            user_tokens.update(user_turn_tokens(turn, d.goal))
            sys_tokens.update(system_turn_tokens(turn, d.goal))
    return Vocab(user_tokens), Vocab(sys_tokens)


def load_corpus(
    path: str | Path,
    split_spec: tuple[float, float, float] | dict[str, Sequence[str]] = (0.8, 0.1, 0.1),
) -> CorpusSplit:
    """Load a JSONL corpus and split it.

    ``split_spec`` is either (train, dev, test) fractions applied in file
    order, or a mapping of split name to dialogue-id lists.  The token
    vocabularies come from the training split only; dev/test patterns
    missing from them map to UNK downstream.
    """
    dialogues = read_dialogues(path)
    if isinstance(split_spec, dict):
        by_id = {d.id: d for d in dialogues}
        picked: dict[str, tuple[Dialogue, ...]] = {}
        seen: set[str] = set()
        for name in ("train", "dev", "test"):
            ids = split_spec.get(name, ())
            dup = seen.intersection(ids)
            if dup:
                raise CorpusError(f"dialogue ids in multiple splits: {sorted(dup)}")
            seen.update(ids)
            missing = [i for i in ids if i not in by_id]
            if missing:
                raise CorpusError(f"unknown dialogue ids in {name} split: {missing}")
            picked[name] = tuple(by_id[i] for i in ids)
        train, dev, test = picked["train"], picked["dev"], picked["test"]
    else:
        f_train, f_dev, f_test = split_spec
        if abs(f_train + f_dev + f_test - 1.0) > 1e-9:
            raise CorpusError("split fractions must sum to 1")
        n = len(dialogues)
        n_train = int(n * f_train)
        n_dev = int(n * f_dev)
        train = tuple(dialogues[:n_train])
        dev = tuple(dialogues[n_train : n_train + n_dev])
        test = tuple(dialogues[n_train + n_dev :])
    if not train:
        raise CorpusError("training split is empty")
    vocab, sys_vocab = build_vocabs(train)
    return CorpusSplit(train, dev, test, vocab, sys_vocab)


def corpus_stats(dialogues: Sequence[Dialogue]) -> dict:
    """Summary numbers for `corpus stats`."""
    n_turns = sum(len(d.turns) for d in dialogues)
    act_counts: dict[str, int] = {}
    token_set: set[str] = set()
    user_acts = 0
    for d in dialogues:
        for t in d.turns:
            for a in t.user_acts:
                act_counts[a.act_type.value] = act_counts.get(a.act_type.value, 0) + 1
                user_acts += 1
            token_set.update(user_turn_tokens(t, d.goal))
    return {
        "dialogues": len(dialogues),
        "turns": n_turns,
        "user_acts": user_acts,
        "mean_turns": n_turns / len(dialogues) if dialogues else 0.0,
        "user_token_types": len(token_set),
        "act_type_counts": dict(sorted(act_counts.items())),
    }


# Raw DSTC-2 act names that differ from our inventory.
_DSTC2_ACT_MAP = {
    "expl-conf": "confirm",
    "impl-conf": "confirm",
    "request_alts": "reqalts",
    "reqmore": "reqalts",
    "canthelp.exception": "canthelp",
    "canthelp.missing_slot_value": "canthelp",
    "select": "confirm",
    "restart": "null",
}


def _convert_dstc2_acts(raw_acts: list[dict]) -> list[DialogueAct]:
    acts: list[DialogueAct] = []
    for a in raw_acts:
        name = _DSTC2_ACT_MAP.get(a["act"], a["act"])
        try:
            act_type = ActType(name)
        except ValueError:
            logger.debug("skipping unknown dstc2 act %r", a["act"])
            continue
        slots = a.get("slots") or []
        if not slots:
            try:
                acts.append(DialogueAct(act_type))
            except ValueError:
                continue
        for pair in slots:
            slot, value = (list(pair) + [None, None])[:2]
            try:
                if act_type is ActType.REQUEST:
                    # dstc2 encodes the requested slot as the "value"
                    acts.append(DialogueAct(act_type, str(value).lower()))
                elif value is None:
                    acts.append(DialogueAct(act_type, None, None))
                else:
                    acts.append(DialogueAct(act_type, str(slot).lower(), str(value).lower()))
            except ValueError:
                continue
    return acts


def convert_dstc2(src_dir: str | Path, out_path: str | Path) -> dict:
    """Convert raw DSTC-2 log/label directories into the JSONL shape.

    Walks ``src_dir`` for ``log.json``/``label.json`` pairs.  Dialogues
    whose goals violate the goal invariants (no constraint or no request)
    are skipped and counted.
    """
    src_dir = Path(src_dir)
    logs = sorted(src_dir.rglob("log.json"))
    if not logs:
        raise CorpusError(f"no log.json files under {src_dir}")
    kept: list[Dialogue] = []
    skipped = 0
    for log_path in logs:
        label_path = log_path.with_name("label.json")
        if not label_path.exists():
            skipped += 1
            continue
        log = json.loads(log_path.read_text())
        label = json.loads(label_path.read_text())
        task = label.get("task-information", {}).get("goal", {})
        constraints = {
            str(s).lower(): str(v).lower() for s, v in task.get("constraints", [])
        }
        requests = tuple(str(s).lower() for s in task.get("request-slots", []))
        try:
            goal = UserGoal(constraints, requests)
        except ValueError:
            skipped += 1
            continue
        turns = []
        sys_turns = log.get("turns", [])
        usr_turns = label.get("turns", [])
        for sys_t, usr_t in zip(sys_turns, usr_turns):
            sys_acts = _convert_dstc2_acts(
                sys_t.get("output", {}).get("dialog-acts", [])
            )
            usr_acts = _convert_dstc2_acts(usr_t.get("semantics", {}).get("json", []))
            turns.append(Turn(tuple(sys_acts), tuple(usr_acts)))
        if not turns:
            skipped += 1
            continue
        kept.append(Dialogue(log.get("session-id", log_path.parent.name), goal, tuple(turns)))
    write_dialogues(kept, out_path)
    return {"converted": len(kept), "skipped": skipped}
