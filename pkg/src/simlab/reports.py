"""Tabular report rendering: simulator direct-evaluation tables and the
human-evaluation summary (dialogue counts, lengths, questionnaire scores)."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Sequence

from .metrics import DirectEvalReport


def render_direct_eval(rows: Sequence[DirectEvalReport], fmt: str = "text") -> str:
    if fmt == "json":
        return json.dumps([r.to_dict() for r in rows], sort_keys=True, indent=2) + "\n"
    if fmt == "csv":
        lines = ["simulator,f_score,kl_divergence,entropy,turns,contexts"]
        for r in rows:
            lines.append(
                f"{r.name},{r.f_score:.6f},{r.kl_divergence:.6f},"
                f"{r.entropy:.6f},{r.turns},{r.contexts}"
            )
        return "\n".join(lines) + "\n"
    if fmt == "text":
        name_w = max(12, max((len(r.name) for r in rows), default=12) + 2)
        lines = [
            f"{'Simulator':{name_w}}  {'F-score':>9} {'KL-div':>9} {'Entropy':>9}",
            "-" * (name_w + 31),
        ]
        for r in rows:
            lines.append(
                f"{r.name:{name_w}}  {100 * r.f_score:9.2f} {r.kl_divergence:9.3f} "
                f"{r.entropy:9.3f}"
            )
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown format {fmt!r}")


def _mean_sd(values: list[float]) -> tuple[float, float]:
    n = len(values)
    mean = sum(values) / n
    var = sum((v - mean) ** 2 for v in values) / n
    return mean, math.sqrt(var)


def load_human_results(path: str | Path) -> list[dict]:
    records = []
    with open(path) as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ValueError(f"results line {line_no} is not valid JSON: {exc}") from exc
    return records


def human_report(records: Sequence[dict]) -> dict:
    """Aggregate questionnaire records per policy.

    Yields dialogue counts, average dialogue length (system turns), yes
    percentages for the binary questions, and Likert means for Q3 to Q6,
    each with its population standard deviation.  Abandoned sessions
    (questionnaire null) are excluded and counted in the footer.
    """
    complete = [r for r in records if r.get("answers")]
    abandoned = len(records) - len(complete)
    by_policy: dict[str, list[dict]] = {}
    for r in complete:
        by_policy.setdefault(str(r.get("policy_id", "unknown")), []).append(r)
    rows = {}
    for policy_id in sorted(by_policy):
        rs = by_policy[policy_id]
        row: dict = {"dialogues": len(rs)}
        lengths = [float(r.get("turns", 0)) for r in rs]
        row["length_mean"], row["length_sd"] = _mean_sd(lengths)
        for q in ("q1", "q2"):
            vals = [100.0 * bool(r["answers"][q]) for r in rs]
            row[f"{q}_mean"], row[f"{q}_sd"] = _mean_sd(vals)
        for q in ("q3", "q4", "q5", "q6"):
            vals = [float(r["answers"][q]) for r in rs]
            row[f"{q}_mean"], row[f"{q}_sd"] = _mean_sd(vals)
        rows[policy_id] = row
    return {"policies": rows, "abandoned_sessions": abandoned}


def render_human_report(report: dict, fmt: str = "text") -> str:
    if fmt == "json":
        return json.dumps(report, sort_keys=True, indent=2) + "\n"
    rows = report["policies"]
    if fmt == "csv":
        cols = ["policy", "dialogues", "length"] + [f"q{i}" for i in range(1, 7)]
        lines = [",".join(cols)]
        for name in sorted(rows):
            r = rows[name]
            cells = [name, str(r["dialogues"]), f"{r['length_mean']:.4f}"]
            cells += [f"{r[f'q{i}_mean']:.4f}" for i in range(1, 7)]
            lines.append(",".join(cells))
        return "\n".join(lines) + "\n"
    if fmt == "text":
        name_w = max(10, max((len(n) for n in rows), default=10) + 2)
        header = (
            f"{'Policy':{name_w}} {'Num':>5} {'AvgLen':>14} {'Q1 [%]':>15} {'Q2 [%]':>15} "
            f"{'Q3':>13} {'Q4':>13} {'Q5':>13} {'Q6':>13}"
        )
        lines = [header, "-" * len(header)]
        for name in sorted(rows):
            r = rows[name]

            def ms(prefix, scale=1):
                return f"{r[f'{prefix}_mean']:.2f} ({r[f'{prefix}_sd']:.2f})"

            lines.append(
                f"{name:{name_w}} {r['dialogues']:>5d} {ms('length'):>14} "
                f"{ms('q1'):>15} {ms('q2'):>15} {ms('q3'):>13} {ms('q4'):>13} "
                f"{ms('q5'):>13} {ms('q6'):>13}"
            )
        lines.append(f"abandoned sessions excluded: {report['abandoned_sessions']}")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown format {fmt!r}")
