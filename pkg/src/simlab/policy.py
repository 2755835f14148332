"""Dialogue policy learning: Monte Carlo control with linear value
functions, Boltzmann exploration, the turn/success/violation reward, and
the semantic-error channel between simulator and tracker."""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .acts import ActType, DialogueAct
from .manager import (
    DialogueState,
    SummaryAction,
    TURN_CAP,
    action_space,
    realize_action,
    track,
)
from .ontology import DONTCARE, Ontology, matching_entities

FEATURE_VERSION = 1


@dataclass(frozen=True)
class RewardConfig:
    success_bonus: float = 100.0
    turn_penalty: float = -1.0
    violation_penalty: float = -5.0
    turn_cap: int = TURN_CAP


@dataclass(frozen=True)
class ErrorChannelConfig:
    rate: float = 0.25
    value_sub: float = 0.5
    slot_sub: float = 0.2
    act_type_sub: float = 0.15
    deletion: float = 0.15

    def __post_init__(self):
        total = self.value_sub + self.slot_sub + self.act_type_sub + self.deletion
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"corruption mixture sums to {total}, expected 1")
        if not 0.0 <= self.rate <= 1.0:
            raise ValueError(f"error rate {self.rate} outside [0, 1]")


_ACT_TYPE_ORDER = tuple(ActType)
_NO_ARG_TYPES = tuple(
    t for t in ActType
    if t not in (ActType.INFORM, ActType.CONFIRM, ActType.OFFER, ActType.DENY, ActType.REQUEST)
)


def feature_dim(o: Ontology) -> int:
    return 2 * len(o.slots) + 4 + len(_ACT_TYPE_ORDER) + 1 + len(o.requestable)


def state_features(state: DialogueState, o: Ontology) -> np.ndarray:
    """Binary features: slot hypotheses, match bucket, last act, offers."""
    phi = np.zeros(feature_dim(o))
    i = 0
    for slot in o.slots:
        info = state.slots[slot]
        phi[i] = 1.0 if info.value is not None else 0.0
        phi[i + 1] = 1.0 if info.grounded else 0.0
        i += 2
    m = len(matching_entities(o, state.constraints()))
    bucket = 0 if m == 0 else 1 if m == 1 else 2 if m <= 4 else 3
    phi[i + bucket] = 1.0
    i += 4
    if state.last_user_acts:
        t = state.last_user_acts[-1].act_type
        phi[i + _ACT_TYPE_ORDER.index(t)] = 1.0
    i += len(_ACT_TYPE_ORDER)
    phi[i] = 1.0 if state.offered_entity is not None else 0.0
    i += 1
    for j, slot in enumerate(o.requestable):
        if slot in state.requested:
            phi[i + j] = 1.0
    return phi


class PolicyModel:
    """Per-action linear action values: Q(s, a) = w_a . phi(s)."""

    def __init__(self, o: Ontology, meta: dict | None = None):
        self.actions = action_space(o)
        self.dim = feature_dim(o)
        self.weights = np.zeros((len(self.actions), self.dim))
        self.meta = dict(meta or {})

    def q_values(self, phi: np.ndarray) -> np.ndarray:
        return self.weights @ phi

    def greedy(self, phi: np.ndarray) -> int:
        return int(np.argmax(self.q_values(phi)))

    def boltzmann(self, phi: np.ndarray, temperature: float, rng: random.Random) -> int:
        z = self.q_values(phi) / temperature
        z -= z.max()
        p = np.exp(z)
        p /= p.sum()
        r = rng.random()
        acc = 0.0
        for i, pi in enumerate(p):
            acc += pi
            if r < acc:
                return i
        return len(p) - 1

    def save(self, path: str | Path) -> None:
        doc = {
            "feature_version": FEATURE_VERSION,
            "actions": [a.label() for a in self.actions],
            "weights": self.weights.tolist(),
            "meta": self.meta,
        }
        Path(path).write_text(json.dumps(doc, sort_keys=True))

    @staticmethod
    def load(path: str | Path, o: Ontology) -> "PolicyModel":
        doc = json.loads(Path(path).read_text())
        if doc.get("feature_version") != FEATURE_VERSION:
            raise ValueError(f"policy {path} has an incompatible feature version")
        policy = PolicyModel(o, doc.get("meta", {}))
        labels = [a.label() for a in policy.actions]
        if doc["actions"] != labels:
            raise ValueError(f"policy {path} was trained with a different action inventory")
        policy.weights[...] = np.asarray(doc["weights"])
        return policy


def _corruption_choices(act: DialogueAct, o: Ontology) -> list[tuple[str, float]]:
    choices = []
    if act.value is not None and len(o.informable.get(act.slot, ())) > 1:
        choices.append(("value_sub", 0.5))
    if act.act_type is ActType.REQUEST:
        if len(o.requestable) > 1:
            choices.append(("slot_sub", 0.2))
    elif act.value is not None and len(o.slots) > 1 and act.slot in o.informable:
        choices.append(("slot_sub", 0.2))
    if act.act_type in _NO_ARG_TYPES or act.value is not None:
        choices.append(("act_type_sub", 0.15))
    choices.append(("deletion", 0.15))
    return choices


def _corrupt_act(act: DialogueAct, o: Ontology, rng: random.Random,
                 cfg: ErrorChannelConfig) -> DialogueAct | None:
    weights = {
        "value_sub": cfg.value_sub,
        "slot_sub": cfg.slot_sub,
        "act_type_sub": cfg.act_type_sub,
        "deletion": cfg.deletion,
    }
    choices = [(kind, weights[kind]) for kind, _ in _corruption_choices(act, o)]
    total = sum(w for _, w in choices)
    r = rng.random() * total
    kind = choices[-1][0]
    acc = 0.0
    for name, w in choices:
        acc += w
        if r < acc:
            kind = name
            break
    if kind == "deletion":
        return None
    if kind == "value_sub":
        pool = [v for v in o.informable[act.slot] if v != act.value]
        return DialogueAct(act.act_type, act.slot, rng.choice(pool))
    if kind == "slot_sub":
        if act.act_type is ActType.REQUEST:
            pool = [s for s in o.requestable if s != act.slot]
            return DialogueAct(act.act_type, rng.choice(pool))
        slots = [s for s in o.slots if s != act.slot]
        slot = rng.choice(slots)
        return DialogueAct(act.act_type, slot, rng.choice(list(o.informable[slot])))
    if kind == "act_type_sub":
        if act.value is not None:
            pool = [t for t in (ActType.INFORM, ActType.CONFIRM, ActType.DENY)
                    if t is not act.act_type]
            return DialogueAct(rng.choice(pool), act.slot, act.value)
        pool = [t for t in _NO_ARG_TYPES if t is not act.act_type]
        return DialogueAct(rng.choice(pool))
    raise AssertionError(kind)


def corrupt(
    user_acts: Sequence[DialogueAct],
    cfg: ErrorChannelConfig,
    o: Ontology,
    rng: random.Random,
) -> tuple[DialogueAct, ...]:
    """Independently corrupt each act with probability ``cfg.rate``.

    The corruption type is drawn from the mixture restricted to the types
    applicable to the act's shape (so an attempted corruption always
    changes something).  A fully deleted turn becomes null().
    """
    if cfg.rate <= 0.0:
        return tuple(user_acts)
    out = []
    for act in user_acts:
        if rng.random() < cfg.rate:
            corrupted = _corrupt_act(act, o, rng, cfg)
            if corrupted is not None:
                out.append(corrupted)
        else:
            out.append(act)
    if user_acts and not out:
        out.append(DialogueAct(ActType.NULL))
    return tuple(out)


@dataclass
class EpisodeRecord:
    features: list[np.ndarray]
    actions: list[int]
    rewards: list[float]
    success: bool
    length: int  # system turns
    violations: int
    goal_constraints: dict = field(default_factory=dict)

    @property
    def total_reward(self) -> float:
        return float(sum(self.rewards))


def run_episode(
    policy: PolicyModel,
    sim,
    o: Ontology,
    reward_cfg: RewardConfig,
    err_cfg: ErrorChannelConfig,
    rng: random.Random,
    temperature: float | None = None,
) -> EpisodeRecord:
    """One dialogue between the policy and a simulator.

    The loop per system turn: pick an action from the tracked state,
    realize it, let the simulator respond, corrupt the user acts, track.
    Reward: turn penalty each system turn, violation penalty whenever the
    simulator flags one, success bonus at termination.  The episode ends
    when the system says bye or the turn cap is hit.
    """
    goal = sim.reset()
    state = DialogueState.initial(o)
    rec = EpisodeRecord([], [], [], False, 0, 0, dict(goal.constraints))
    for t in range(reward_cfg.turn_cap):
        phi = state_features(state, o)
        if temperature is None:
            a_idx = policy.greedy(phi)
        else:
            a_idx = policy.boltzmann(phi, temperature, rng)
        sys_acts = realize_action(policy.actions[a_idx], state, o, rng)
        sim_turn = sim.step(sys_acts)
        reward = reward_cfg.turn_penalty
        if sim_turn.violation:
            reward += reward_cfg.violation_penalty
            rec.violations += 1
        terminal = policy.actions[a_idx].kind == "bye" or t == reward_cfg.turn_cap - 1
        if terminal:
            rec.success = sim.success()
            if rec.success:
                reward += reward_cfg.success_bonus
        rec.features.append(phi)
        rec.actions.append(a_idx)
        rec.rewards.append(reward)
        rec.length += 1
        if terminal:
            break
        track(state, corrupt(sim_turn.user_acts, err_cfg, o, rng))
    return rec


@dataclass
class TrainingCurve:
    episodes: int
    successes: list[bool] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)
    lengths: list[int] = field(default_factory=list)

    def record(self, rec: EpisodeRecord) -> None:
        self.successes.append(rec.success)
        self.rewards.append(rec.total_reward)
        self.lengths.append(rec.length)

    def windowed_success(self, window: int = 500) -> list[float]:
        out = []
        for i in range(len(self.successes)):
            lo = max(0, i - window + 1)
            chunk = self.successes[lo : i + 1]
            out.append(sum(chunk) / len(chunk))
        return out

    def to_rows(self) -> list[dict]:
        return [
            {"episode": i, "success": int(s), "reward": r, "length": n}
            for i, (s, r, n) in enumerate(zip(self.successes, self.rewards, self.lengths))
        ]


def train_policy(
    sim,
    o: Ontology,
    episodes: int,
    seed: int,
    reward_cfg: RewardConfig = RewardConfig(),
    err_cfg: ErrorChannelConfig = ErrorChannelConfig(),
    lr_start: float = 0.01,
    lr_end: float = 0.001,
    temp_start: float = 1.0,
    temp_end: float = 0.1,
    meta: dict | None = None,
) -> tuple[PolicyModel, TrainingCurve]:
    """Every-visit Monte Carlo control with linearly decaying learning rate
    and Boltzmann temperature."""
    policy = PolicyModel(o, meta)
    policy.meta.update({
        "seed": seed,
        "episodes": episodes,
        "error_rate": err_cfg.rate,
        "simulator": getattr(sim, "name", sim.__class__.__name__),
    })
    curve = TrainingCurve(episodes)
    rng = random.Random(seed)
    if hasattr(sim, "reseed"):
        sim.reseed(seed + 1)
    for ep in range(episodes):
        frac = ep / (episodes - 1) if episodes > 1 else 0.0
        lr = lr_start + (lr_end - lr_start) * frac
        temp = temp_start + (temp_end - temp_start) * frac
        rec = run_episode(policy, sim, o, reward_cfg, err_cfg, rng, temperature=temp)
        g = 0.0
        returns = [0.0] * len(rec.rewards)
        for t in range(len(rec.rewards) - 1, -1, -1):
            g += rec.rewards[t]
            returns[t] = g
        for phi, a_idx, g_t in zip(rec.features, rec.actions, returns):
            q = float(policy.weights[a_idx] @ phi)
            policy.weights[a_idx] += lr * (g_t - q) * phi
        curve.record(rec)
    return policy, curve


def evaluate_policy(
    policy: PolicyModel,
    sim,
    o: Ontology,
    n: int,
    err_cfg: ErrorChannelConfig,
    seed: int,
) -> dict:
    """Greedy evaluation over n seeded episodes."""
    if n < 1:
        raise ValueError("need at least one evaluation dialogue")
    rng = random.Random(seed)
    if hasattr(sim, "reseed"):
        sim.reseed(seed + 1)
    succ = 0
    total_reward = 0.0
    total_len = 0
    for _ in range(n):
        rec = run_episode(policy, sim, o, RewardConfig(), err_cfg, rng, temperature=None)
        succ += int(rec.success)
        total_reward += rec.total_reward
        total_len += rec.length
    return {
        "dialogues": n,
        "success_rate": succ / n,
        "mean_reward": total_reward / n,
        "mean_length": total_len / n,
    }
