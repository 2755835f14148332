"""Command-line entry points for the whole pipeline.

Exit codes: 0 success, 2 usage errors, 3 data errors (files, formats,
ontology violations), 4 numerical failures.
"""

from __future__ import annotations

import functools
import json
import os
import sys
from dataclasses import asdict
from pathlib import Path

import click

from .acts import ActParseError, ActValidationError, ActVocabularyError
from .corpus import (
    CorpusError,
    convert_dstc2,
    corpus_stats,
    load_corpus,
    read_dialogues,
    write_dialogues,
)
from .crosseval import (
    CrossEvalReport,
    ManifestError,
    render_report,
    run_from_manifest,
)
from .models import ModelFormatError, load_model, save_model
from .nnet import NumericalError
from .ontology import OntologyError, load_ontology
from .synth import synthesize_dialogues

DATA_ERRORS = (
    CorpusError,
    OntologyError,
    ManifestError,
    ModelFormatError,
    ActParseError,
    ActValidationError,
    ActVocabularyError,
    FileNotFoundError,
)

EXIT_DATA = 3
EXIT_NUMERIC = 4


def handles_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except DATA_ERRORS as exc:
            click.echo(f"data error: {exc}", err=True)
            sys.exit(EXIT_DATA)
        except NumericalError as exc:
            click.echo(f"numerical failure: {exc}", err=True)
            sys.exit(EXIT_NUMERIC)

    return wrapper


def _load_config_defaults() -> dict:
    path = os.environ.get("SIMLAB_CONFIG")
    if not path:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        click.echo(f"data error: cannot read SIMLAB_CONFIG {path}: {exc}", err=True)
        sys.exit(EXIT_DATA)


@click.group()
def cli():
    """Laboratory for user-simulator training and dialogue-policy RL."""


@cli.group()
def corpus():
    """Corpus synthesis, conversion and statistics."""


@corpus.command("synth")
@click.option("--ontology", "ontology_path", required=True, type=click.Path())
@click.option("--n", default=500, show_default=True)
@click.option("--seed", default=7, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@handles_errors
def corpus_synth(ontology_path, n, seed, out_path):
    """Generate a synthetic corpus from the agenda simulator."""
    o = load_ontology(ontology_path)
    dialogues = synthesize_dialogues(o, n, seed)
    write_dialogues(dialogues, out_path)
    click.echo(f"wrote {len(dialogues)} dialogues to {out_path}")


@corpus.command("convert")
@click.option("--src", "src_dir", required=True, type=click.Path())
@click.option("--out", "out_path", required=True, type=click.Path())
@handles_errors
def corpus_convert(src_dir, out_path):
    """Convert raw DSTC-2 log/label directories to the JSONL shape."""
    result = convert_dstc2(src_dir, out_path)
    click.echo(
        f"converted {result['converted']} dialogues "
        f"({result['skipped']} skipped) to {out_path}"
    )


@corpus.command("stats")
@click.option("--corpus", "corpus_path", required=True, type=click.Path())
@click.option("--ontology", "ontology_path", type=click.Path())
@handles_errors
def corpus_stats_cmd(corpus_path, ontology_path):
    """Print corpus statistics (and validate against an ontology)."""
    dialogues = read_dialogues(corpus_path)
    stats = corpus_stats(dialogues)
    if ontology_path:
        from .acts import validate_dialogue

        o = load_ontology(ontology_path)
        violations = sum(
            len(validate_dialogue(d, o).violations) for d in dialogues
        )
        stats["ontology_violations"] = violations
    click.echo(json.dumps(stats, indent=2, sort_keys=True))


@cli.group()
def sim():
    """Train and evaluate user simulators."""


@sim.command("train")
@click.option("--corpus", "corpus_path", required=True, type=click.Path())
@click.option("--method", type=click.Choice(["mle", "gan"]), default="mle", show_default=True)
@click.option("--epochs", default=20, show_default=True, help="MLE epochs")
@click.option("--pretrain-epochs", default=0, show_default=True)
@click.option("--adv-epochs", default=30, show_default=True)
@click.option("--gen-lr", default=1e-4, show_default=True)
@click.option("--gen-wd", default=1e-3, show_default=True)
@click.option("--disc-lr", default=5e-4, show_default=True)
@click.option("--disc-wd", default=1e-5, show_default=True)
@click.option("--batch-size", default=4, show_default=True)
@click.option("--teacher-forcing", default=0.5, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--selection", type=click.Choice(["best_dev", "final"]), default="best_dev",
              show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--figures/--no-figures", default=True, show_default=True)
@handles_errors
def sim_train(corpus_path, method, epochs, pretrain_epochs, adv_epochs, gen_lr, gen_wd,
              disc_lr, disc_wd, batch_size, teacher_forcing, seed, selection, out_path,
              figures):
    """Train a simulator; writes the model, its log, and a curves figure."""
    from .training import TrainConfig, gan_train, mle_train

    corpus_split = load_corpus(corpus_path)
    cfg = TrainConfig(
        method=method,
        epochs=epochs,
        pretrain_epochs=pretrain_epochs,
        adversarial_epochs=adv_epochs,
        gen_lr=gen_lr,
        gen_wd=gen_wd,
        disc_lr=disc_lr,
        disc_wd=disc_wd,
        batch_size=batch_size,
        teacher_forcing_rate=teacher_forcing,
        seed=seed,
        selection=selection,
    )
    meta = {"config": asdict(cfg), "corpus": str(corpus_path)}
    out_path = Path(out_path)
    if method == "mle":
        gen, log = mle_train(corpus_split, cfg)
    else:
        gen, disc, log = gan_train(corpus_split, cfg)
        save_model(disc, out_path.with_suffix(".disc.json"), meta=meta)
    save_model(gen, out_path, meta=meta)
    log_path = out_path.with_suffix(".log.jsonl")
    log.write_jsonl(log_path)
    if figures:
        from .plots import training_curves

        training_curves(log, out_path.with_suffix(".curves.png"))
    final = log.records[-1]
    click.echo(
        f"trained {method} simulator -> {out_path} "
        f"(final dev NLL {final.dev_nll if final.dev_nll is not None else 'n/a'})"
    )


@sim.command("eval")
@click.option("--model", "model_paths", required=True, multiple=True, type=click.Path())
@click.option("--corpus", "corpus_path", required=True, type=click.Path())
@click.option("--split", type=click.Choice(["train", "dev", "test"]), default="test",
              show_default=True)
@click.option("--format", "fmt", type=click.Choice(["text", "json", "csv"]), default="text",
              show_default=True)
@click.option("--out", "out_path", type=click.Path())
@handles_errors
def sim_eval(model_paths, corpus_path, split, fmt, out_path):
    """Direct evaluation: F-score, KL-divergence, entropy per model."""
    from .metrics import direct_eval
    from .reports import render_direct_eval

    corpus_split = load_corpus(corpus_path)
    dialogues = getattr(corpus_split, split)
    rows = []
    for path in model_paths:
        model = load_model(path)
        if model.kind() != "generator":
            raise ModelFormatError(f"{path} is not a generator model")
        rows.append(
            direct_eval(model, dialogues, name=Path(path).stem,
                        config=getattr(model, "meta", {}).get("config"))
        )
    doc = render_direct_eval(rows, fmt)
    if out_path:
        Path(out_path).write_text(doc)
        click.echo(f"wrote {out_path}")
    else:
        click.echo(doc, nl=False)


@cli.group()
def policy():
    """Dialogue-policy training."""


@policy.command("train")
@click.option("--sim", "sim_spec", required=True,
              help="'agenda' or a path to a generator model")
@click.option("--ontology", "ontology_path", required=True, type=click.Path())
@click.option("--episodes", default=40_000, show_default=True)
@click.option("--error-rate", default=0.25, show_default=True)
@click.option("--runs", default=5, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--eval-dialogues", default=1000, show_default=True)
@click.option("--figures/--no-figures", default=True, show_default=True)
@handles_errors
def policy_train(sim_spec, ontology_path, episodes, error_rate, runs, seed, out_dir,
                 eval_dialogues, figures):
    """Monte Carlo control against a simulator, one policy per seed."""
    from .crosseval import SimSpec, build_simulator
    from .policy import ErrorChannelConfig, evaluate_policy, train_policy

    o = load_ontology(ontology_path)
    spec = SimSpec("agenda") if sim_spec == "agenda" else SimSpec(Path(sim_spec).stem, sim_spec)
    err_cfg = ErrorChannelConfig(rate=error_rate)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = []
    for k in range(runs):
        run_seed = seed + k
        simulator = build_simulator(spec, o, seed=run_seed)
        model, curve = train_policy(
            simulator, o, episodes, seed=run_seed, err_cfg=err_cfg,
        )
        model.save(out / f"policy_seed{run_seed}.json")
        with open(out / f"curve_seed{run_seed}.jsonl", "w") as fh:
            for row in curve.to_rows():
                fh.write(json.dumps(row, sort_keys=True) + "\n")
        if figures:
            from .plots import policy_curve

            policy_curve(curve, out / f"curve_seed{run_seed}.png")
        evaluation = evaluate_policy(
            model, simulator, o, eval_dialogues, err_cfg, seed=run_seed + 777
        )
        summary.append({"seed": run_seed, **evaluation})
        click.echo(
            f"run {k + 1}/{runs}: success {evaluation['success_rate']:.3f}, "
            f"mean reward {evaluation['mean_reward']:.2f}"
        )
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    click.echo(f"wrote {runs} policies to {out}")


@cli.group()
def crosseval():
    """Cross-evaluation experiments and report rendering."""


@crosseval.command("run")
@click.option("--manifest", "manifest_path", required=True, type=click.Path())
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--quiet", is_flag=True)
@handles_errors
def crosseval_run(manifest_path, out_dir, quiet):
    """Run the full matrix experiment described by a manifest."""
    progress = None if quiet else lambda msg: click.echo(msg)
    report = run_from_manifest(manifest_path, out_dir, progress=progress)
    click.echo(render_report(report, "text"), nl=False)


@crosseval.command("render")
@click.option("--report", "report_path", type=click.Path())
@click.option("--human", "human_path", type=click.Path())
@click.option("--format", "fmt", default="text", show_default=True,
              type=click.Choice(["text", "json", "markdown", "csv"]))
@click.option("--out", "out_path", type=click.Path())
@click.option("--figures/--no-figures", default=False, show_default=True)
@handles_errors
def crosseval_render(report_path, human_path, fmt, out_path, figures):
    """Render a stored cross-evaluation report or a human-eval results file."""
    if (report_path is None) == (human_path is None):
        raise click.UsageError("provide exactly one of --report or --human")
    if report_path:
        report = CrossEvalReport.from_dict(json.loads(Path(report_path).read_text()))
        doc = render_report(report, fmt)
        if figures and out_path:
            from .plots import crosseval_heatmap

            crosseval_heatmap(report, Path(out_path).with_suffix(".png"))
    else:
        from .reports import human_report, load_human_results, render_human_report

        if fmt == "markdown":
            raise click.UsageError("human reports support text, json and csv formats")
        report_doc = human_report(load_human_results(human_path))
        doc = render_human_report(report_doc, fmt)
        if figures and out_path:
            from .plots import human_report_bars

            human_report_bars(report_doc, Path(out_path).with_suffix(".png"))
    if out_path:
        Path(out_path).write_text(doc)
        click.echo(f"wrote {out_path}")
    else:
        click.echo(doc, nl=False)


@cli.command("chat")
@click.option("--policy", "policy_path", required=True, type=click.Path())
@click.option("--ontology", "ontology_path", required=True, type=click.Path())
@click.option("--seed", default=0, show_default=True)
@handles_errors
def chat(policy_path, ontology_path, seed):
    """Terminal chat against a trained policy. /quit ends the session."""
    import random as random_mod

    from .ontology import sample_goal
    from .policy import PolicyModel
    from .session import ChatSession, PatternMatcher

    o = load_ontology(ontology_path)
    model = PolicyModel.load(policy_path, o)
    rng = random_mod.Random(seed)
    session = ChatSession(
        "local", Path(policy_path).stem, model, o, sample_goal(o, rng), PatternMatcher(o)
    )
    click.echo(f"scenario: {session.scenario}")
    click.echo(f"system: {session.transcript[0].text}")
    while not session.done:
        try:
            line = click.prompt("you", prompt_suffix="> ", default="", show_default=False)
        except (EOFError, click.Abort):
            break
        if not line.strip():
            continue
        if line.strip() == "/quit":
            break
        if line.strip() == "/transcript":
            for entry in session.transcript:
                click.echo(f"{entry.speaker}: {entry.text}  {entry.acts}")
            continue
        result = session.utterance(text=line)
        click.echo(f"[{' '.join(result['user_acts'])}]")
        click.echo(f"system: {result['system_text']}")
    verdict = "success" if session.success() else "failure"
    click.echo(f"dialogue ended: {verdict} after {session.system_turns} system turns")


@cli.command("serve")
@click.option("--policy", "policy_paths", required=True, multiple=True, type=click.Path())
@click.option("--ontology", "ontology_path", required=True, type=click.Path())
@click.option("--results", "results_path", default="results.jsonl", show_default=True,
              type=click.Path())
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8080, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--static-dir", type=click.Path(), default=None,
              help="directory of built web-UI assets to serve at /")
@handles_errors
def serve(policy_paths, ontology_path, results_path, host, port, seed, static_dir):
    """Serve the human-evaluation chat API (and optionally the web UI)."""
    import uvicorn

    from .policy import PolicyModel
    from .service import create_app

    o = load_ontology(ontology_path)
    policies = [(Path(p).stem, PolicyModel.load(p, o)) for p in policy_paths]
    app = create_app(policies, o, results_path, seed=seed, static_dir=static_dir)
    click.echo(f"serving {len(policies)} policies on http://{host}:{port}/v1")
    uvicorn.run(app, host=host, port=port, log_level="warning")


def main():
    cli(default_map=_load_config_defaults(), max_content_width=100)


if __name__ == "__main__":
    main()
