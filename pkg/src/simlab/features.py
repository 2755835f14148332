"""Context vector construction for the turn encoder.

Layout: [multi-hot of last-user tokens over the user vocab]
     ++ [multi-hot of last-system tokens over the system vocab]
     ++ [per-informable-slot goal inconsistency flags]
     ++ [dialogue-start flag]
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .acts import ActType, DialogueAct
from .corpus import Vocab, delexicalize
from .ontology import DONTCARE, UserGoal


def context_dim(user_vocab_size: int, sys_vocab_size: int, n_informable: int) -> int:
    return user_vocab_size + sys_vocab_size + n_informable + 1


@dataclass
class FeatureExtractor:
    """Builds the fixed-width binary context vector for each turn.

    Out-of-vocabulary tokens land on the UNK position and are tallied in
    ``oov_count`` for diagnostics.
    """

    vocab: Vocab
    sys_vocab: Vocab
    slots: tuple[str, ...]
    oov_count: int = field(default=0, compare=False)

    @property
    def dim(self) -> int:
        return context_dim(len(self.vocab), len(self.sys_vocab), len(self.slots))

    def _encode(self, vocab: Vocab, token: str) -> int:
        if token not in vocab:
            self.oov_count += 1
        return vocab.encode(token)

    def featurize(
        self,
        last_user: Sequence[str],
        last_system: Sequence[DialogueAct],
        goal: UserGoal,
        is_first_turn: bool,
    ) -> np.ndarray:
        """Encode the previous user tokens and the current system acts.

        The inconsistency flag for slot s is set iff the system informed or
        offered a value for s that differs from a concrete goal constraint
        on s (a dontcare constraint is never inconsistent).
        """
        x = np.zeros(self.dim, dtype=np.float64)
        for token in last_user:
            x[self._encode(self.vocab, token)] = 1.0
        off = len(self.vocab)
        for act in last_system:
            token = delexicalize(act, goal)
            x[off + self._encode(self.sys_vocab, token)] = 1.0
        off += len(self.sys_vocab)
        for i, slot in enumerate(self.slots):
            want = goal.constraints.get(slot)
            if want is None or want == DONTCARE:
                continue
            for act in last_system:
                if (
                    act.act_type in (ActType.INFORM, ActType.OFFER)
                    and act.slot == slot
                    and act.value not in (want, DONTCARE)
                ):
                    x[off + i] = 1.0
        if is_first_turn:
            x[-1] = 1.0
        return x

    def layout(self) -> dict:
        """Serializable description of the vector layout."""
        return {
            "user_vocab": list(self.vocab.tokens),
            "sys_vocab": list(self.sys_vocab.tokens),
            "slots": list(self.slots),
            "dim": self.dim,
        }

    @staticmethod
    def from_layout(d: dict) -> "FeatureExtractor":
        return FeatureExtractor(Vocab(d["user_vocab"]), Vocab(d["sys_vocab"]), tuple(d["slots"]))
