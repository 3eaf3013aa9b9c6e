"""Command-line entrypoints: init, optimize, resume, export, inspect, report, serve."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .config import build_evaluator, build_gateway, load_config_file, run_config_from
from .engine import SearchEngine
from .errors import RunAbortedError, SynthSearchError
from .hitl import FeedbackSubmission, SessionManager
from .jsonutil import canonical_dumps
from .prompts import PromptPack
from .report import write_report
from .store import RunStore


def _common_overrides(func):
    options = [
        click.option("--task", default=None, help="Task description override."),
        click.option("--max-iterations", type=int, default=None),
        click.option("--epsilon", type=float, default=None),
        click.option("--batch-size", type=int, default=None),
        click.option("--top-k", type=int, default=None),
        click.option("--metric-mode", type=click.Choice(["iterative", "once"]), default=None),
        click.option("--hitl-mode", type=click.Choice(["interactive", "auto"]), default=None),
        click.option("--rng-seed", type=int, default=None),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _build(config_path: str, run_dir: str, overrides: dict):
    data = load_config_file(config_path)
    run_config = run_config_from(data, overrides)
    store = RunStore(run_dir)
    gateway = build_gateway(data, Path(config_path).parent, event_sink=lambda k, p: store.append_event(k, p))
    pack = PromptPack.load(data["prompt_pack"]) if "prompt_pack" in data else PromptPack.load_default()
    evaluator = build_evaluator(data, run_config, gateway, pack)
    return data, run_config, store, gateway, evaluator, pack


@click.group()
def main():
    """Search-based optimizer for synthetic-data generation workflows."""


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--run-dir", required=True, type=click.Path())
@click.option("--no-ui", is_flag=True, default=True, help="Terminal review (default; the web console uses `serve`).")
@_common_overrides
def init(config_path, run_dir, no_ui, **overrides):
    """Start a review session and install the approved workflow as the root."""
    _data, run_config, store, gateway, evaluator, pack = _build(config_path, run_dir, overrides)
    manager = SessionManager(run_config, gateway, evaluator, store, pack)
    session = manager.start_session(run_config.task)
    if run_config.hitl_mode == "interactive":
        while session.status == "awaiting-feedback":
            click.echo("=== workflow prompts ===")
            click.echo(canonical_dumps(session.current_workflow.prompts.templates))
            click.echo("=== workflow script ===")
            click.echo(session.current_workflow.code.script)
            click.echo("=== samples ===")
            for sample in session.current_samples:
                click.echo(json.dumps(sample.payload, ensure_ascii=False))
            if session.round >= 3:
                click.echo("Round limit reached; approving.")
                break
            text = click.prompt("Feedback (empty to approve)", default="", show_default=False)
            if not text.strip():
                break
            session = manager.submit_feedback(session, FeedbackSubmission(session_id=session.id, text=text))
    root_id, _tree = manager.approve(session)
    click.echo(f"root node {root_id} installed in {run_dir}")


def _run_engine(config_path, run_dir, overrides, resume: bool):
    _data, run_config, store, gateway, evaluator, pack = _build(config_path, run_dir, overrides)
    tree = store.load_tree()
    if resume and tree.iteration_count == 0:
        click.echo("note: run has no prior iterations; starting fresh", err=True)
    engine = SearchEngine(run_config, tree, gateway, evaluator, store, pack)
    try:
        report = engine.run()
    except RunAbortedError as exc:
        click.echo(f"run aborted: {exc}", err=True)
        click.echo(canonical_dumps(exc.diagnostic), err=True)
        sys.exit(2)
    (store.directory / "run_report.json").write_text(canonical_dumps(report.to_dict()) + "\n", encoding="utf-8")
    click.echo(canonical_dumps(report.to_dict()))


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--run-dir", required=True, type=click.Path(exists=True))
@_common_overrides
def optimize(config_path, run_dir, **overrides):
    """Run the optimization loop against an initialized run directory."""
    _run_engine(config_path, run_dir, overrides, resume=False)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--run-dir", required=True, type=click.Path(exists=True))
@_common_overrides
def resume(config_path, run_dir, **overrides):
    """Continue a previously interrupted run from its saved tree."""
    _run_engine(config_path, run_dir, overrides, resume=True)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--run-dir", required=True, type=click.Path(exists=True))
@click.option("--count", type=int, required=True)
@click.option("--node", "node_id", type=int, default=None, help="Defaults to the best-scoring node.")
@_common_overrides
def export(config_path, run_dir, count, node_id, **overrides):
    """Generate the final dataset from the best (or given) workflow."""
    _data, run_config, store, _gateway, evaluator, _pack = _build(config_path, run_dir, overrides)
    tree = store.load_tree()
    target = node_id if node_id is not None else tree.best_node()
    path = store.export_dataset(tree, target, count, evaluator.run_batch, run_config.batch_size)
    click.echo(f"wrote {count} records to {path}")


@main.command()
@click.option("--run-dir", required=True, type=click.Path(exists=True))
def inspect(run_dir):
    """Print a summary of a run directory."""
    store = RunStore(run_dir)
    tree = store.load_tree()
    events = store.read_events()
    click.echo(f"run: {store.run_id}")
    click.echo(f"nodes: {len(tree.nodes)}  iterations: {tree.iteration_count}  events: {len(events)}")
    for node_id in sorted(tree.nodes):
        node = tree.get(node_id)
        reward = f"{node.reward:.4f}" if node.reward is not None else "unset"
        mod = node.workflow.parent_modification
        click.echo(f"  node {node_id} (parent {node.parent}): reward={reward}"
                   + (f"  [{mod.description}]" if mod else ""))


@main.command()
@click.option("--run-dir", required=True, type=click.Path(exists=True))
@click.option("--out-dir", type=click.Path(), default=None)
@click.option("--top-k", type=int, default=3)
@click.option("--epsilon", type=float, default=0.05)
def report(run_dir, out_dir, top_k, epsilon):
    """Render reward-trace and tree figures plus CSVs for a run."""
    out = write_report(run_dir, out_dir, top_k=top_k, epsilon=epsilon)
    click.echo(f"report written to {out}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--runs-dir", required=True, type=click.Path())
@click.option("--host", default="127.0.0.1")
@click.option("--port", type=int, default=8612)
@click.option("--ui-dir", type=click.Path(), default=None, help="Static console bundle to serve at /ui.")
@_common_overrides
def serve(config_path, runs_dir, host, port, ui_dir, **overrides):
    """Serve the HTTP control plane (and the web console, if built)."""
    import uvicorn

    from .service import AppState, create_app

    data = load_config_file(config_path)
    run_config = run_config_from(data, overrides)
    gateway = build_gateway(data, Path(config_path).parent)
    pack = PromptPack.load(data["prompt_pack"]) if "prompt_pack" in data else PromptPack.load_default()
    evaluator = build_evaluator(data, run_config, gateway, pack)
    state = AppState(run_config, gateway, evaluator, runs_dir, pack)
    app = create_app(state, ui_dir=ui_dir)
    uvicorn.run(app, host=host, port=port)


if __name__ == "__main__":
    main()
