####################################################################################################
####################  CanvasX | Command Line                     ###################################
####################  Developed by: DatSciX                      ###################################
####################################################################################################

"""
Command Line
`run`, `replay`, `bench`, `export-tree`, `validate-config` and `serve-adapters`.
Every behaviour comes from the config file; the flags here only override a few of its fields.
"""

import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import click
import yaml

from .callbacks import log_trace_event
from .config import DATA_DIR, AppConfig, load_config, setup_logging
from .errors import CanvasError
from .services.orchestrator import JobRequest, OutputPaths, build_engine, replay_trace, run_job, run_jobs
from .services.trace import read_trace, render_dot
from .tools.decomposer import Attachments, TaskInstruction
from .tools.scene_model import SceneGraph

logger = logging.getLogger(__name__)


def _overridden(
    config: AppConfig,
    seed: Optional[int],
    budget_nodes: Optional[int],
    budget_branching: Optional[int],
    mode: Optional[str],
    planning_mode: Optional[str] = None,
) -> AppConfig:
    sections: Dict[str, Dict[str, Any]] = {}
    if seed is not None:
        sections["world"] = {"seed": seed}
    budget = {k: v for k, v in (("max_nodes", budget_nodes), ("max_branching", budget_branching)) if v is not None}
    if budget:
        sections["budget"] = budget
    if mode is not None:
        sections["endpoints"] = {"mode": mode}
    if planning_mode is not None:
        sections["planning"] = {"mode": planning_mode}
    return config.with_overrides(**sections) if sections else config


def _read_document(path: Path) -> Dict[str, Any]:
    try:
        document = yaml.safe_load(path.read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as e:
        raise click.ClickException(f"cannot read '{path}': {e}")
    if not isinstance(document, dict):
        raise click.ClickException(f"'{path}' must hold a mapping")
    return document


def _job_from_file(path: Path, config: AppConfig, trace: Optional[str], outcome: Optional[str]) -> JobRequest:
    document = _read_document(path)
    try:
        instruction = TaskInstruction.model_validate(document["instruction"])
    except (KeyError, ValueError) as e:
        raise click.ClickException(f"job file '{path}' has no valid instruction: {e}")
    job_id = str(document.get("job_id", path.stem))
    outputs = OutputPaths(
        trace=trace or document.get("trace"),
        outcome=outcome or document.get("outcome"),
    )
    return JobRequest(instruction=instruction, config=config, outputs=outputs, job_id=job_id)


common_overrides = [
    click.option("--config", "config_path", type=click.Path(dir_okay=False), help="YAML config file."),
    click.option("--seed", type=int, help="World seed."),
    click.option("--budget-nodes", type=int, help="Maximum executed nodes."),
    click.option("--budget-branching", type=int, help="Maximum alternates per action."),
    click.option("--mode", type=click.Choice(["sim", "endpoints"]), help="Tool backend."),
]


def with_overrides(func):
    for option in reversed(common_overrides):
        func = option(func)
    return func


@click.group()
@click.option("--log-level", default="INFO", show_default=True, help="Logging level.")
def cli(log_level: str) -> None:
    """CanvasX: planning-tree orchestration for image generation and editing."""
    setup_logging(log_level.upper())


@cli.command()
@click.argument("job_files", nargs=-1, type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--prompt", help="Generation prompt.")
@click.option("--edit", "edit_text", help="Editing instruction.")
@click.option("--source", type=click.Path(exists=True, dir_okay=False, path_type=Path), help="Source scene JSON for an edit.")
@click.option("--planning-mode", type=click.Choice(["selection", "chain", "tree"]), help="Planning arm.")
@click.option("--trace", "trace_path", help="Trace JSONL output (single job only).")
@click.option("--outcome", "outcome_path", help="Outcome JSON output (single job only).")
@with_overrides
def run(
    job_files: Tuple[Path, ...],
    prompt: Optional[str],
    edit_text: Optional[str],
    source: Optional[Path],
    planning_mode: Optional[str],
    trace_path: Optional[str],
    outcome_path: Optional[str],
    config_path: Optional[str],
    seed: Optional[int],
    budget_nodes: Optional[int],
    budget_branching: Optional[int],
    mode: Optional[str],
) -> None:
    """Run jobs from job files, or one job from --prompt / --edit."""
    if bool(job_files) + bool(prompt) + bool(edit_text) != 1:
        raise click.UsageError("give job files, --prompt or --edit (exactly one)")
    if len(job_files) > 1 and (trace_path or outcome_path):
        raise click.UsageError("--trace and --outcome need a single job")
    try:
        config = _overridden(load_config(config_path), seed, budget_nodes, budget_branching, mode, planning_mode)
        if job_files:
            requests: List[JobRequest] = [_job_from_file(p, config, trace_path, outcome_path) for p in job_files]
        else:
            attachments = Attachments()
            if source is not None:
                attachments = Attachments(source_scene=SceneGraph.model_validate_json(source.read_text(encoding="utf-8")))
            instruction = TaskInstruction(
                text=prompt or edit_text,
                kind_hint="generation" if prompt else "editing",
                attachments=attachments,
            )
            requests = [JobRequest(
                instruction=instruction, config=config, outputs=OutputPaths(trace=trace_path, outcome=outcome_path)
            )]
        if len(requests) == 1:
            outcomes = [run_job(requests[0], listeners=[log_trace_event])]
        else:
            outcomes = run_jobs(requests, workers=config.workers, engine=build_engine(config))
    except (CanvasError, ValueError) as e:
        raise click.ClickException(str(e))

    for req, outcome in zip(requests, outcomes):
        click.echo(json.dumps({
            "job_id": req.job_id,
            "success": outcome.success,
            "best_score": round(outcome.best_score, 4),
            "best_node": outcome.best_node,
            "nodes_executed": outcome.nodes_executed,
        }, sort_keys=True))
    sys.exit(0 if all(o.success for o in outcomes) else 1)


@cli.command()
@click.argument("trace_file", type=click.Path(exists=True, dir_okay=False))
def replay(trace_file: str) -> None:
    """Re-run the job a trace records and compare the events byte for byte."""
    try:
        outcome, identical = replay_trace(trace_file)
    except CanvasError as e:
        raise click.ClickException(str(e))
    click.echo(f"identical={identical} success={outcome.success} best_score={outcome.best_score:.4f}")
    sys.exit(0 if identical else 1)


@cli.command()
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="Bench config (default: packaged bench.yaml).")
@click.option("--jobs", type=int, help="Corpus size.")
@click.option("--seed", type=int, help="Corpus and world seed.")
@click.option("--quiet", is_flag=True, help="No progress bars.")
def bench(config_path: Optional[str], jobs: Optional[int], seed: Optional[int], quiet: bool) -> None:
    """Ablation bench: selection vs chain vs tree on a synthetic corpus."""
    from .services.bench import load_corpus_config, run_bench

    path = Path(config_path) if config_path else DATA_DIR / "bench.yaml"
    document = _read_document(path)
    corpus_doc = dict(document.pop("corpus", {}) or {})
    min_gap = float(document.pop("min_gap", 0.05))
    if jobs is not None:
        corpus_doc["jobs"] = jobs
    try:
        config = load_config(path)
        if seed is not None:
            config = config.with_overrides(world={"seed": seed})
        report = run_bench(config, load_corpus_config(corpus_doc), min_gap=min_gap, progress=not quiet)
    except (CanvasError, ValueError) as e:
        raise click.ClickException(str(e))
    click.echo(report.summary())
    click.echo(f"ordered={report.ordered()} (min gap {report.min_gap})")
    sys.exit(0 if report.ordered() else 1)


@cli.command("export-tree")
@click.argument("trace_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--dot", "dot_path", required=True, help="DOT output file ('-' for stdout).")
def export_tree(trace_file: str, dot_path: str) -> None:
    """Render the realized planning tree of a trace as DOT."""
    try:
        _, events = read_trace(trace_file)
    except CanvasError as e:
        raise click.ClickException(str(e))
    source = render_dot(events)
    if dot_path == "-":
        click.echo(source)
        return
    Path(dot_path).write_text(source, encoding="utf-8")
    click.echo(f"wrote {dot_path}")


@cli.command("validate-config")
@click.argument("config_file", type=click.Path(exists=True, dir_okay=False))
def validate_config_command(config_file: str) -> None:
    """Validate a config file and the tool library it names."""
    try:
        config = load_config(config_file)
        registry = config.build_registry()
    except CanvasError as e:
        raise click.ClickException(str(e))
    click.echo(f"ok: {len(registry)} tool(s), mode={config.endpoints.mode}, planning={config.planning.mode}")


@cli.command("serve-adapters")
@click.option("--config", "config_path", type=click.Path(dir_okay=False), help="YAML config file.")
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8765, show_default=True, type=int)
def serve_adapters_command(config_path: Optional[str], host: str, port: int) -> None:
    """Host the simulated tools and auxiliary skills behind the adapter protocol."""
    from .services.adapters import create_app, serve_adapters
    from .tools.position_pipeline import PositionPipeline
    from .tools.verifier import Verifier

    try:
        config = load_config(config_path)
    except CanvasError as e:
        raise click.ClickException(str(e))
    pipeline = PositionPipeline(config.detection, config.layout, config.scene, seed=config.world.seed)
    app = create_app(config.world, pipeline, Verifier(config.verifier, config.scene))
    serve_adapters(app, host=host, port=port)


def main() -> None:
    cli()
