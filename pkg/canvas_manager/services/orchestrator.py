####################################################################################################
####################  CanvasX | Orchestrator                     ###################################
####################  Developed by: DatSciX                      ###################################
####################################################################################################

"""
Orchestrator
End-to-end job runner: classify the instruction, decompose it, build the planning tree,
traverse it, and persist the outcome and its trace. Also wires the backends (simulated world
or adapter endpoints) from the configuration.
"""

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Protocol, Tuple, Union

from pydantic import BaseModel, ConfigDict

from ..config import AppConfig, config_hash, endpoint_token, validate_config
from ..errors import AdapterError, EndpointError
from ..sub_agents.scene_planner_agent import LlmDecomposer, build_scene_planner_agent
from ..sub_agents.tool_selector_agent import LlmToolSelector, build_tool_selector_agent
from ..tools.decomposer import (
    AtomicEdit,
    TaskInstruction,
    classify_task,
    decompose_editing,
    decompose_generation,
    decomposition_from_payload,
)
from ..tools.position_pipeline import PositionPipeline
from ..tools.scene_model import SceneGraph, SceneSpec
from ..tools.sim_world import SimulatedBackend
from ..tools.tool_registry import ToolRegistry
from ..tools.verifier import EndpointVerifier, Verifier
from .adapters import AdapterBackend, AdapterClient
from .planning_tree import NodeExecutor, Outcome, Planner, PlanTree, ToolOrdering
from .trace import TraceHeader, TraceListener, TraversalTrace, canonical_line, read_trace, write_trace

logger = logging.getLogger(__name__)


class OutputPaths(BaseModel):
    model_config = ConfigDict(frozen=True)

    trace: Optional[str] = None
    outcome: Optional[str] = None


class JobRequest(BaseModel):
    model_config = ConfigDict(frozen=True)

    instruction: TaskInstruction
    config: AppConfig = AppConfig()
    outputs: OutputPaths = OutputPaths()
    job_id: str = "job"

    def header_job(self) -> Dict[str, Any]:
        return {
            "job_id": self.job_id,
            "instruction": self.instruction.model_dump(mode="json"),
            "config": self.config.model_dump(mode="json"),
        }


class Decomposer(Protocol):
    def decompose(self, instr: TaskInstruction, kind: str) -> Union[SceneSpec, List[AtomicEdit]]: ...


class GrammarDecomposer:
    """The constrained-grammar decomposer."""

    def decompose(self, instr: TaskInstruction, kind: str) -> Union[SceneSpec, List[AtomicEdit]]:
        if kind == "generation":
            return decompose_generation(instr.text)
        return decompose_editing(instr)


class EndpointDecomposer:
    """Delegates decomposition to an `aux.decompose` endpoint and validates the answer."""

    def __init__(self, client: AdapterClient):
        self.client = client

    def decompose(self, instr: TaskInstruction, kind: str) -> Union[SceneSpec, List[AtomicEdit]]:
        try:
            payload = self.client.call_skill("aux.decompose", {"text": instr.text, "kind": kind})
        except AdapterError as e:
            raise EndpointError(f"decomposer endpoint failed: {e}") from e
        return decomposition_from_payload(payload or {}, kind)


@dataclass
class Engine:
    """Everything one job needs, built once from a config."""

    config: AppConfig
    registry: ToolRegistry
    pipeline: PositionPipeline
    verifier: Verifier
    planner: Planner
    decomposer: Decomposer


def build_engine(
    config: AppConfig,
    ordering: Optional[ToolOrdering] = None,
    decomposer: Optional[Decomposer] = None,
    registry: Optional[ToolRegistry] = None,
) -> Engine:
    registry = registry if registry is not None else config.build_registry()
    endpoints = config.endpoints
    token = endpoint_token()

    def client(url: Optional[str]) -> Optional[AdapterClient]:
        return AdapterClient(url, timeout=endpoints.timeout, token=token) if url else None

    aux_client = client(endpoints.aux_url) if endpoints.mode == "endpoints" else None
    pipeline = PositionPipeline(
        detection=config.detection, layout=config.layout, rules=config.scene, seed=config.world.seed, client=aux_client
    )
    judge = client(endpoints.judge_url) if endpoints.mode == "endpoints" else None
    verifier = (
        EndpointVerifier(judge, config.verifier, config.scene) if judge is not None
        else Verifier(config.verifier, config.scene)
    )
    if endpoints.mode == "endpoints":
        backend = AdapterBackend(client(endpoints.tools_url))
    else:
        backend = SimulatedBackend(config.world, pipeline)
    if decomposer is None:
        remote = client(endpoints.decomposer_url) if endpoints.mode == "endpoints" else None
        if remote is not None:
            decomposer = EndpointDecomposer(remote)
        elif config.models.use_llm_decomposer:
            decomposer = LlmDecomposer(build_scene_planner_agent(config.models))
        else:
            decomposer = GrammarDecomposer()
    if ordering is None and config.models.use_llm_selector:
        ordering = LlmToolSelector(registry, pipeline, build_tool_selector_agent(config.models))

    planner = Planner(
        registry, NodeExecutor(backend, pipeline), verifier, config.budget, config.planning, ordering=ordering
    )
    logger.info(f"ORCHESTRATOR [Engine Ready]: {len(registry)} tool(s), backend={endpoints.mode}")
    return Engine(config, registry, pipeline, verifier, planner, decomposer)


def plan_job(req: JobRequest, engine: Engine) -> PlanTree:
    """Classify, decompose, build the tree."""
    instr = req.instruction
    kind = classify_task(instr)
    payload = engine.decomposer.decompose(instr, kind)
    initial = instr.attachments.source_scene or SceneGraph()
    logger.info(f"ORCHESTRATOR [Planned]: {req.job_id} as {kind}")
    return engine.planner.build_tree(kind, payload, initial, prompt=instr.text, attachments=instr.attachments)


def run_job(
    req: JobRequest,
    engine: Optional[Engine] = None,
    listeners: Iterable[TraceListener] = (),
) -> Outcome:
    """Runs one job end to end and writes whatever outputs it asks for."""
    engine = engine or build_engine(req.config)
    tree = plan_job(req, engine)
    trace = TraversalTrace(listeners)
    outcome = engine.planner.traverse(tree, trace)

    if req.outputs.trace:
        write_trace(req.outputs.trace, job_header(req), trace.events)
    if req.outputs.outcome:
        path = Path(req.outputs.outcome)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(
            json.dumps(outcome.model_dump(mode="json", exclude={"trace"}), indent=2, sort_keys=True), encoding="utf-8"
        )
    logger.info(f"ORCHESTRATOR [Job Done]: {req.job_id} success={outcome.success} score={outcome.best_score:.4f}")
    return outcome


def run_jobs(requests: List[JobRequest], workers: int = 1, engine: Optional[Engine] = None) -> List[Outcome]:
    """Independent jobs, up to `workers` at a time; results keep request order."""
    if workers <= 1:
        return [run_job(req, engine) for req in requests]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda req: run_job(req, engine), requests))


def job_header(req: JobRequest) -> TraceHeader:
    return TraceHeader(seed=req.config.world.seed, config_hash=config_hash(req.config), job=req.header_job())


def job_from_header(header: TraceHeader) -> JobRequest:
    job = header.job
    return JobRequest(
        instruction=TaskInstruction.model_validate(job["instruction"]),
        config=validate_config(job["config"]),
        job_id=job.get("job_id", "job"),
    )


def replay_trace(path: Union[str, Path]) -> Tuple[Outcome, bool]:
    """Re-runs the job a trace records; True when the new events match line for line."""
    header, events = read_trace(path)
    req = job_from_header(header)
    outcome = run_job(req)
    recorded = [canonical_line(e) for e in events]
    replayed = [canonical_line(e) for e in outcome.trace]
    identical = recorded == replayed and config_hash(req.config) == header.config_hash
    logger.info(f"ORCHESTRATOR [Replay]: {path} identical={identical}")
    return outcome, identical
