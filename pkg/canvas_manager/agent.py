####################################################################################################
####################  CanvasX | Canvas Manager - Root Agent     ####################################
####################  Developed by: DatSciX                     ####################################
####################################################################################################

"""
Canvas Manager Agent.  Root agent for the CanvasX application.
The chat front-end of the planning engine: it phrases the user's request as a generation or
editing job, runs it through the engine with the function tools below and reports the verified
result. The tools return JSON strings and never raise; failures come back under an "error" key.
"""

import json
import logging
from typing import Any, Dict, List, Optional

from google.adk.agents import LlmAgent
from pydantic import ValidationError

from .callbacks import after_model_callback, after_tool_callback, log_trace_event
from .config import ModelsConfig, llm, load_config
from .errors import CanvasError
from .prompts import agent_prompt
from .services.orchestrator import Engine, JobRequest, build_engine, plan_job
from .services.planning_tree import Outcome, PlanTree
from .services.trace import TraversalTrace
from .tools.decomposer import Attachments, TaskInstruction
from .tools.scene_model import DiscrepancyReport, SceneGraph

logger = logging.getLogger(__name__)

# Engine cache: built on the first job
_ENGINE: Dict[str, Engine] = {}


def get_engine() -> Engine:
    """Creates or retrieves the engine for the configured config file."""
    if "default" not in _ENGINE:
        _ENGINE["default"] = build_engine(load_config())
    return _ENGINE["default"]


def _unmet(report: DiscrepancyReport) -> List[str]:
    unmet = [f"missing {m.deficit} x {(m.attrs.describe() + ' ' + m.category).strip()}" for m in report.missing]
    unmet += [
        f"{a.object_id} has {a.attribute} {a.found or 'unset'}, wanted {a.wanted}" for a in report.wrong_attribute
    ]
    unmet += [f"relation not held: {v.relation.describe()}" for v in report.relation_violations]
    unmet += [f"extraneous {ref.object_id}" for ref in report.extraneous]
    unmet += [f"background lacks {token}" for token in report.background_mismatch]
    return unmet


def _summary(engine: Engine, tree: PlanTree, outcome: Outcome) -> Dict[str, Any]:
    if tree.spec is not None:
        unmet = _unmet(engine.verifier.verify_spec(outcome.state, tree.spec).report)
    else:
        done = int(round(outcome.best_score * len(tree.edits)))
        unmet = [edit.describe() for edit in tree.edits[done:]]
    return {
        "success": outcome.success,
        "best_score": round(outcome.best_score, 4),
        "best_node": outcome.best_node,
        "nodes_executed": outcome.nodes_executed,
        "objects": [obj.describe() for obj in outcome.state.objects],
        "background": list(outcome.state.background),
        "unmet": unmet,
        "scene": outcome.state.model_dump(mode="json", exclude={"provenance"}),
    }


def _run(instruction: TaskInstruction, engine: Optional[Engine] = None) -> str:
    engine = engine or get_engine()
    req = JobRequest(instruction=instruction, config=engine.config, job_id="chat")
    tree = plan_job(req, engine)
    outcome = engine.planner.traverse(tree, TraversalTrace([log_trace_event]))
    return json.dumps(_summary(engine, tree, outcome))


def run_generation_job(prompt: str) -> str:
    """
    Generates an image for a prompt through the planning engine.

    Args:
        prompt: The generation prompt in the engine's grammar, e.g.
            "a black bicycle, a blue scooter and a bird".

    Returns:
        A JSON string with success, best_score, the resulting objects and any unmet
        requirements, or an "error" key.
    """
    logger.info(f"TOOL [Generation Job]: '{prompt}'")
    try:
        return _run(TaskInstruction(text=prompt, kind_hint="generation"))
    except (CanvasError, ValidationError) as e:
        logger.warning(f"TOOL [Job Rejected]: {e}")
        return json.dumps({"error": str(e)})
    except Exception as e:
        logger.error("TOOL [Unexpected]: generation job failed", exc_info=True)
        return json.dumps({"error": f"An unexpected error occurred: {str(e)}"})


def run_editing_job(instruction: str, source_scene_json: str) -> str:
    """
    Edits an existing scene through the planning engine.

    Args:
        instruction: The editing instruction, one clause per change, e.g.
            "change the color of the scooter to blue; add a black bicycle".
        source_scene_json: The scene to edit, as the JSON of a scene graph
            ({"objects": [{"id", "category", "attrs", "bbox"}], "background": [...]}).

    Returns:
        A JSON string with success, best_score, the resulting objects and the edits
        still unmet, or an "error" key.
    """
    logger.info(f"TOOL [Editing Job]: '{instruction}'")
    try:
        source = SceneGraph.model_validate_json(source_scene_json)
    except ValidationError as e:
        logger.warning(f"TOOL [Job Rejected]: bad source scene: {e}")
        return json.dumps({"error": f"The source scene is not a valid scene graph: {e.errors()[0]['msg']}"})
    try:
        return _run(TaskInstruction(
            text=instruction, kind_hint="editing", attachments=Attachments(source_scene=source)
        ))
    except (CanvasError, ValidationError) as e:
        logger.warning(f"TOOL [Job Rejected]: {e}")
        return json.dumps({"error": str(e)})
    except Exception as e:
        logger.error("TOOL [Unexpected]: editing job failed", exc_info=True)
        return json.dumps({"error": f"An unexpected error occurred: {str(e)}"})


def list_tools() -> str:
    """
    Lists the tools in the engine's library.

    Returns:
        A JSON string: a list of {skill, name, characteristics}, or an "error" key.
    """
    try:
        registry = get_engine().registry
    except CanvasError as e:
        return json.dumps({"error": str(e)})
    return json.dumps([
        {"skill": desc.skill, "name": desc.name, "characteristics": desc.characteristics} for desc in registry
    ])


def build_root_agent(models: ModelsConfig = ModelsConfig()) -> LlmAgent:
    return LlmAgent(
        name="canvas_manager",
        description="Root agent for the CanvasX application. Runs image generation and editing jobs through the planning engine.",
        model=llm(models.chat, models.temperature),
        instruction=agent_prompt.CANVAS_X_ROOT_PROMPT,
        tools=[run_generation_job, run_editing_job, list_tools],
        after_tool_callback=after_tool_callback,
        after_model_callback=after_model_callback,
    )


root_agent = build_root_agent()
