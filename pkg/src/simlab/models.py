"""Seq2seq user-response generator and real-vs-simulated discriminator.

The generator encodes one context vector per turn into a recurrent state
threaded across turns, then decodes up to three act tokens per user
response.  The decoder starts from the encoder state (identity bridge)
and takes the one-hot of the previously emitted token as input, SOS
first.  PAD and SOS are masked out of every output distribution.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import EOS, MAX_USER_TOKENS, PAD, SOS, Vocab
from .features import FeatureExtractor
from .nnet import Dense, LSTMCell, ParamSet, RecurrentState, masked_softmax

HIDDEN_SIZE = 32
DISC_HIDDEN_SIZE = 64
LAYOUT_VERSION = 1


class ModelFormatError(ValueError):
    """Model file unreadable or from an incompatible layout version."""


@dataclass
class TurnRollout:
    """One decoded user response plus everything needed to score it.

    ``token_ids`` holds every pick, including the EOS pick when the
    sequence stopped before the three-token cap; ``tokens`` holds the
    content tokens only.
    """

    tokens: tuple[str, ...]
    token_ids: list[int]
    dists: list[np.ndarray]
    logps: list[float]
    caches: list = field(default_factory=list)
    ended_with_eos: bool = False

    @property
    def logprob(self) -> float:
        return float(sum(self.logps))


class GeneratorModel:
    def __init__(self, fx: FeatureExtractor, rng: np.random.Generator | None = None,
                 hidden: int = HIDDEN_SIZE):
        self.fx = fx
        self.vocab = fx.vocab
        self.hidden = hidden
        self.params = ParamSet()
        self.enc = LSTMCell(self.params, "enc", fx.dim, hidden, rng)
        self.dec = LSTMCell(self.params, "dec", len(fx.vocab), hidden, rng)
        self.out = Dense(self.params, "out", hidden, len(fx.vocab), "identity", rng)
        # PAD and SOS can never be emitted
        self.visible = np.ones(len(fx.vocab), dtype=bool)
        self.visible[fx.vocab.pad] = False
        self.visible[fx.vocab.sos] = False

    def zero_state(self) -> RecurrentState:
        return RecurrentState.zeros(self.hidden)

    def onehot(self, idx: int) -> np.ndarray:
        x = np.zeros(len(self.vocab))
        x[idx] = 1.0
        return x

    def kind(self) -> str:
        return "generator"


def encode_turn(g: GeneratorModel, prev: RecurrentState, x: np.ndarray) -> RecurrentState:
    """One encoder step; use ``g.zero_state()`` at dialogue start."""
    return g.enc.forward(x, prev)[0]


def decode_walk(
    g: GeneratorModel,
    init: RecurrentState,
    *,
    mode: str = "greedy",
    rng: np.random.Generator | None = None,
    forced: tuple[str, ...] | None = None,
    record: bool = False,
) -> TurnRollout:
    """Run the decoder from an encoded turn state.

    Free-running (``forced=None``): picks tokens greedily or by sampling
    until EOS or three content tokens.  Teacher-forced: walks the given
    reference tokens and scores them, adding the terminal EOS step iff the
    reference stopped before the cap.
    """
    vocab = g.vocab
    state = init
    prev_idx = vocab.sos
    tokens: list[str] = []
    rollout = TurnRollout((), [], [], [])
    if forced is not None and len(forced) > MAX_USER_TOKENS:
        raise ValueError(f"reference longer than {MAX_USER_TOKENS} tokens")
    forced_ids = None
    if forced is not None:
        unknown = [t for t in forced if t not in vocab]
        if unknown:
            raise KeyError(f"tokens outside the vocabulary: {unknown}")
        forced_ids = [vocab.encode(t) for t in forced]
        if len(forced) < MAX_USER_TOKENS:
            forced_ids.append(vocab.eos)
    step = 0
    while True:
        state, cache = g.dec.forward(g.onehot(prev_idx), state)
        logits, out_cache = g.out.forward(state.h)
        p = masked_softmax(logits, g.visible)
        if forced_ids is not None:
            pick = forced_ids[step]
        elif mode == "greedy":
            pick = int(np.argmax(p))
        elif mode == "sample":
            cdf = np.cumsum(p)
            pick = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
            pick = min(pick, len(p) - 1)
        else:
            raise ValueError(f"unknown decode mode {mode!r}")
        rollout.token_ids.append(pick)
        rollout.dists.append(p)
        rollout.logps.append(float(np.log(max(p[pick], 1e-300))))
        if record:
            rollout.caches.append((cache, out_cache))
        step += 1
        if pick == vocab.eos:
            rollout.ended_with_eos = True
            break
        tokens.append(vocab.decode(pick))
        if len(tokens) >= MAX_USER_TOKENS:
            break
        if forced_ids is not None and step >= len(forced_ids):
            break
        prev_idx = pick
    rollout.tokens = tuple(tokens)
    return rollout


def generate_response(
    g: GeneratorModel,
    s: RecurrentState,
    mode: str = "greedy",
    rng: np.random.Generator | None = None,
) -> TurnRollout:
    if mode == "sample" and rng is None:
        raise ValueError("sample mode needs a random generator")
    return decode_walk(g, s, mode=mode, rng=rng)


def sequence_logprob(g: GeneratorModel, s: RecurrentState, tokens: tuple[str, ...]) -> float:
    """Log-probability of a reference token sequence from state ``s``.

    Includes the EOS step when the reference stops before three tokens,
    excludes it when the reference was truncated at the cap.
    """
    return decode_walk(g, s, forced=tuple(tokens)).logprob


class DiscriminatorModel:
    """2-layer feedforward classifier over (context, token positions).

    Class convention: output index 1 = "real".  The act sequence enters as
    three positional one-hot blocks, PAD one-hot filling empty positions.
    """

    def __init__(self, fx: FeatureExtractor, rng: np.random.Generator | None = None,
                 hidden: int = DISC_HIDDEN_SIZE):
        self.fx = fx
        self.vocab = fx.vocab
        self.hidden = hidden
        self.in_dim = fx.dim + MAX_USER_TOKENS * len(fx.vocab)
        self.params = ParamSet()
        self.l1 = Dense(self.params, "l1", self.in_dim, hidden, "relu", rng)
        self.l2 = Dense(self.params, "l2", hidden, 2, "identity", rng)

    def assemble_input(self, x: np.ndarray, tokens: tuple[str, ...]) -> np.ndarray:
        if len(tokens) > MAX_USER_TOKENS:
            raise ValueError(f"at most {MAX_USER_TOKENS} tokens, got {len(tokens)}")
        v = len(self.vocab)
        inp = np.zeros(self.in_dim)
        inp[: self.fx.dim] = x
        for pos in range(MAX_USER_TOKENS):
            idx = self.vocab.encode(tokens[pos]) if pos < len(tokens) else self.vocab.pad
            inp[self.fx.dim + pos * v + idx] = 1.0
        return inp

    def forward(self, x: np.ndarray, tokens: tuple[str, ...]):
        inp = self.assemble_input(x, tokens)
        h, c1 = self.l1.forward(inp)
        logits, c2 = self.l2.forward(h)
        p = masked_softmax(logits, np.ones(2, dtype=bool))
        return p, (inp, c1, c2)

    def kind(self) -> str:
        return "discriminator"


def discriminate(d: DiscriminatorModel, x: np.ndarray, tokens: tuple[str, ...]) -> float:
    """Probability that the response is real, in [0, 1]."""
    p, _ = d.forward(x, tokens)
    return float(p[1])


def _params_to_json(params: ParamSet) -> dict:
    return {
        name: {"shape": list(params[name].shape), "data": params[name].ravel().tolist()}
        for name in params.names()
    }


def _params_from_json(params: ParamSet, blob: dict) -> None:
    for name in params.names():
        if name not in blob:
            raise ModelFormatError(f"missing parameter {name!r}")
        entry = blob[name]
        arr = np.asarray(entry["data"], dtype=np.float64).reshape(entry["shape"])
        if arr.shape != params[name].shape:
            raise ModelFormatError(
                f"parameter {name!r} has shape {arr.shape}, expected {params[name].shape}"
            )
        params[name][...] = arr


def save_model(model: GeneratorModel | DiscriminatorModel, path: str | Path,
               meta: dict | None = None) -> None:
    doc = {
        "layout_version": LAYOUT_VERSION,
        "kind": model.kind(),
        "hidden": model.hidden,
        "layout": model.fx.layout(),
        "params": _params_to_json(model.params),
        "meta": meta or {},
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True))


def load_model(path: str | Path) -> GeneratorModel | DiscriminatorModel:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"unreadable model file {path}: {exc}") from exc
    if doc.get("layout_version") != LAYOUT_VERSION:
        raise ModelFormatError(
            f"model {path} has layout version {doc.get('layout_version')}, "
            f"this build reads version {LAYOUT_VERSION}"
        )
    fx = FeatureExtractor.from_layout(doc["layout"])
    kind = doc.get("kind")
    if kind == "generator":
        model: GeneratorModel | DiscriminatorModel = GeneratorModel(fx, hidden=doc["hidden"])
    elif kind == "discriminator":
        model = DiscriminatorModel(fx, hidden=doc["hidden"])
    else:
        raise ModelFormatError(f"unknown model kind {kind!r}")
    _params_from_json(model.params, doc["params"])
    model.meta = doc.get("meta", {})
    return model
