"""Cross-evaluation harness: train K policies per simulator, evaluate
every policy against every simulator, aggregate with the two-stage
average (neural simulators first, then the agenda-based one), and rank
rows by overall mean reward."""

from __future__ import annotations

import json
import shutil
from dataclasses import dataclass, field
from pathlib import Path

from .agenda import AgendaSimulator
from .models import load_model
from .ontology import Ontology, load_ontology
from .policy import ErrorChannelConfig, PolicyModel, evaluate_policy, train_policy
from .simulators import NeuralSimulator


class ManifestError(ValueError):
    pass


@dataclass(frozen=True)
class SimSpec:
    name: str
    model_path: str | None = None  # None means the agenda simulator

    @property
    def is_agenda(self) -> bool:
        return self.model_path is None


def build_simulator(spec: SimSpec, ontology: Ontology, seed: int = 0):
    if spec.is_agenda:
        return AgendaSimulator(ontology, seed=seed, name=spec.name)
    model = load_model(spec.model_path)
    if model.kind() != "generator":
        raise ManifestError(f"{spec.model_path} is not a generator model")
    return NeuralSimulator(model, ontology, seed=seed, name=spec.name)


@dataclass
class CrossEvalReport:
    simulators: list[str]
    neural: list[str]
    agenda: str | None
    cells: dict[str, dict]  # "train|eval" -> success_rate(%), mean_reward, mean_length
    rows: dict[str, dict] = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    @staticmethod
    def cell_key(train: str, eval_: str) -> str:
        return f"{train}|{eval_}"

    def cell(self, train: str, eval_: str) -> dict:
        return self.cells[self.cell_key(train, eval_)]

    def finalize(self) -> None:
        """Compute group aggregates and the reward-based ranking."""
        for train in self.simulators:
            row: dict = {}
            if self.neural:
                row["neural_success"] = _mean(
                    [self.cell(train, e)["success_rate"] for e in self.neural]
                )
                row["neural_reward"] = _mean(
                    [self.cell(train, e)["mean_reward"] for e in self.neural]
                )
            if self.agenda is not None:
                c = self.cell(train, self.agenda)
                row["agenda_success"] = c["success_rate"]
                row["agenda_reward"] = c["mean_reward"]
            groups_s = [row[k] for k in ("neural_success", "agenda_success") if k in row]
            groups_r = [row[k] for k in ("neural_reward", "agenda_reward") if k in row]
            row["overall_success"] = _mean(groups_s)
            row["overall_reward"] = _mean(groups_r)
            self.rows[train] = row
        for group in ("neural", "agenda", "overall"):
            key = f"{group}_reward"
            ranked = sorted(
                (t for t in self.simulators if key in self.rows[t]),
                key=lambda t: -self.rows[t][key],
            )
            for i, t in enumerate(ranked, start=1):
                self.rows[t][f"{group}_rank"] = i

    def to_dict(self) -> dict:
        return {
            "simulators": self.simulators,
            "neural": self.neural,
            "agenda": self.agenda,
            "cells": self.cells,
            "rows": self.rows,
            "config": self.config,
        }

    @staticmethod
    def from_dict(d: dict) -> "CrossEvalReport":
        return CrossEvalReport(
            simulators=list(d["simulators"]),
            neural=list(d["neural"]),
            agenda=d.get("agenda"),
            cells=dict(d["cells"]),
            rows=dict(d.get("rows", {})),
            config=dict(d.get("config", {})),
        )


def _mean(values: list[float]) -> float:
    return sum(values) / len(values)


def parse_manifest(path: str | Path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest {path} is not valid JSON: {exc}") from exc
    for key in ("ontology", "simulators"):
        if key not in doc:
            raise ManifestError(f"manifest missing {key!r}")
    specs = []
    for entry in doc["simulators"]:
        if entry.get("agenda"):
            specs.append(SimSpec(entry.get("name", "agenda")))
        else:
            if "model" not in entry:
                raise ManifestError(f"simulator entry needs 'model' or 'agenda': {entry}")
            specs.append(SimSpec(entry.get("name", Path(entry["model"]).stem), entry["model"]))
    if len(specs) < 2:
        raise ManifestError("cross-evaluation needs at least 2 simulators")
    names = [s.name for s in specs]
    if len(set(names)) != len(names):
        raise ManifestError(f"duplicate simulator names: {names}")
    doc["_specs"] = specs
    doc.setdefault("policies_per_sim", 5)
    doc.setdefault("train_episodes", 40_000)
    doc.setdefault("eval_dialogues", 1000)
    doc.setdefault("error_rate", 0.25)
    doc.setdefault("base_seed", 0)
    return doc


def run_crosseval(
    specs: list[SimSpec],
    ontology: Ontology,
    policies_per_sim: int,
    train_episodes: int,
    eval_dialogues: int,
    error_rate: float,
    base_seed: int,
    out_dir: str | Path | None = None,
    progress=None,
) -> CrossEvalReport:
    err_cfg = ErrorChannelConfig(rate=error_rate)
    neural = [s.name for s in specs if not s.is_agenda]
    agenda_names = [s.name for s in specs if s.is_agenda]
    report = CrossEvalReport(
        simulators=[s.name for s in specs],
        neural=neural,
        agenda=agenda_names[0] if agenda_names else None,
        cells={},
        config={
            "policies_per_sim": policies_per_sim,
            "train_episodes": train_episodes,
            "eval_dialogues": eval_dialogues,
            "error_rate": error_rate,
            "base_seed": base_seed,
        },
    )
    out_dir = Path(out_dir) if out_dir else None
    policies: dict[str, list[PolicyModel]] = {}
    for ti, spec in enumerate(specs):
        policies[spec.name] = []
        for k in range(policies_per_sim):
            seed = base_seed + k
            sim = build_simulator(spec, ontology, seed=seed)
            try:
                policy, curve = train_policy(
                    sim, ontology, train_episodes, seed=seed, err_cfg=err_cfg,
                )
            except Exception as exc:
                raise RuntimeError(
                    f"policy training failed for simulator {spec.name!r}, seed {seed}"
                ) from exc
            policies[spec.name].append(policy)
            if out_dir:
                pdir = out_dir / "policies"
                pdir.mkdir(parents=True, exist_ok=True)
                policy.save(pdir / f"{spec.name}_seed{seed}.json")
            if progress:
                progress(f"trained {spec.name} policy {k + 1}/{policies_per_sim}")
    for ti, train_spec in enumerate(specs):
        for ei, eval_spec in enumerate(specs):
            succ, rew, length = [], [], []
            for k, policy in enumerate(policies[train_spec.name]):
                eval_seed = base_seed + 100_000 + ti * 10_000 + k * 100 + ei
                sim = build_simulator(eval_spec, ontology, seed=eval_seed)
                r = evaluate_policy(
                    policy, sim, ontology, eval_dialogues, err_cfg, seed=eval_seed
                )
                succ.append(r["success_rate"] * 100.0)
                rew.append(r["mean_reward"])
                length.append(r["mean_length"])
            report.cells[report.cell_key(train_spec.name, eval_spec.name)] = {
                "success_rate": _mean(succ),
                "mean_reward": _mean(rew),
                "mean_length": _mean(length),
            }
            if progress:
                progress(f"evaluated {train_spec.name} vs {eval_spec.name}")
    report.finalize()
    return report


def _fmt(value: float | None, width: int = 7) -> str:
    if value is None:
        return " " * width
    return f"{value:{width}.2f}"


def render_report(report: CrossEvalReport, fmt: str = "text") -> str:
    """Deterministic rendering; text mirrors the three column groups."""
    if fmt == "json":
        return json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n"
    if fmt == "markdown":
        lines = [
            "| Policy | Neural Succ | Neural Rew | Neural Rank | ABUS Succ | ABUS Rew | ABUS Rank | Overall Succ | Overall Rew | Overall Rank |",
            "|---|---|---|---|---|---|---|---|---|---|",
        ]
        for name in report.simulators:
            row = report.rows[name]

            def cell(key):
                v = row.get(key)
                if v is None:
                    return ""
                return f"{v:.2f}" if isinstance(v, float) else str(v)

            lines.append(
                "| "
                + " | ".join(
                    [
                        name,
                        cell("neural_success"),
                        cell("neural_reward"),
                        cell("neural_rank"),
                        cell("agenda_success"),
                        cell("agenda_reward"),
                        cell("agenda_rank"),
                        cell("overall_success"),
                        cell("overall_reward"),
                        cell("overall_rank"),
                    ]
                )
                + " |"
            )
        return "\n".join(lines) + "\n"
    if fmt == "text":
        name_w = max(12, max((len(s) for s in report.simulators), default=12) + 2)
        header1 = (
            f"{'':{name_w}}  {'Against Neural Simulators':^25}  {'Against ABUS':^25}  {'Overall':^25}"
        )
        header2 = (
            f"{'Policy':{name_w}}  {'Succ':>7} {'Rew':>7} {'Rank':>7}  "
            f"{'Succ':>7} {'Rew':>7} {'Rank':>7}  {'Succ':>7} {'Rew':>7} {'Rank':>7}"
        )
        lines = [header1, header2, "-" * len(header2)]
        for name in report.simulators:
            row = report.rows[name]

            def rank(key):
                return f"{row[key]:>7d}" if key in row else " " * 7

            lines.append(
                f"{name:{name_w}}  "
                f"{_fmt(row.get('neural_success'))} {_fmt(row.get('neural_reward'))} {rank('neural_rank')}  "
                f"{_fmt(row.get('agenda_success'))} {_fmt(row.get('agenda_reward'))} {rank('agenda_rank')}  "
                f"{_fmt(row.get('overall_success'))} {_fmt(row.get('overall_reward'))} {rank('overall_rank')}"
            )
        return "\n".join(lines) + "\n"
    if fmt == "csv":
        lines = ["train_simulator,eval_simulator,success_rate,mean_reward,mean_length"]
        for train in report.simulators:
            for eval_ in report.simulators:
                c = report.cell(train, eval_)
                lines.append(
                    f"{train},{eval_},{c['success_rate']:.6f},"
                    f"{c['mean_reward']:.6f},{c['mean_length']:.6f}"
                )
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown report format {fmt!r}")


def run_from_manifest(manifest_path: str | Path, out_dir: str | Path,
                      progress=None) -> CrossEvalReport:
    doc = parse_manifest(manifest_path)
    ontology = load_ontology(doc["ontology"])
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    report = run_crosseval(
        doc["_specs"],
        ontology,
        doc["policies_per_sim"],
        doc["train_episodes"],
        doc["eval_dialogues"],
        doc["error_rate"],
        doc["base_seed"],
        out_dir=out_dir,
        progress=progress,
    )
    shutil.copy(manifest_path, out_dir / "manifest.json")
    (out_dir / "report.json").write_text(render_report(report, "json"))
    (out_dir / "report.txt").write_text(render_report(report, "text"))
    (out_dir / "report.md").write_text(render_report(report, "markdown"))
    (out_dir / "cells.csv").write_text(render_report(report, "csv"))
    from .plots import crosseval_heatmap

    crosseval_heatmap(report, out_dir / "success_heatmap.png", metric="success_rate")
    crosseval_heatmap(report, out_dir / "reward_heatmap.png", metric="mean_reward")
    return report
