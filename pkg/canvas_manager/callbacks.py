####################################################################################################
####################  CanvasX | Callbacks and Guardrails         ###################################
####################  Developed by: DatSciX                      ###################################
####################################################################################################

"""
CanvasX Callbacks
Traversal-event logging, the selection guardrail that validates what the tool selector agent
answers, and the ADK callbacks of the chat front-end.
"""

import json
import logging
from typing import Any, Dict, Optional, Sequence

from google.adk.agents.callback_context import CallbackContext
from google.adk.models import LlmResponse
from google.adk.tools import BaseTool, ToolContext
from google.genai import types

from .errors import MalformedSelection
from .tools.tool_registry import Selection, ToolDescriptor, ToolRegistry, parse_selection

logger = logging.getLogger(__name__)

JOB_TOOLS = ("run_generation_job", "run_editing_job")


# --- Traversal Events ---

def log_trace_event(event: Dict[str, Any]) -> None:
    """Trace listener: one tagged log line per traversal event."""
    kind = event.get("event")
    if kind == "execute":
        score = event.get("score")
        scored = "" if score is None else f" score={score:.4f}"
        logger.info(f"TRAVERSAL [Node Executed]: {event['node']} {event['tool']} -> {event['verdict']}{scored}")
    elif kind == "expand":
        tools = ", ".join(child["tool"] for child in event.get("children", []))
        logger.info(f"TRAVERSAL [Expanded]: {event['parent']} '{event.get('action')}' -> [{tools}]")
    elif kind == "attach":
        logger.info(f"TRAVERSAL [Correction Attached]: {event['node']} with {len(event['edits'])} edit(s)")
    elif kind == "backtrack":
        logger.info(f"TRAVERSAL [Backtrack]: {event['failed']} -> {event['next']}")
    elif kind == "switch":
        logger.info(f"TRAVERSAL [Tool Switch]: {event['from']} -> {event['to']}")
    elif kind == "prune":
        logger.info(f"TRAVERSAL [Pruned]: {', '.join(event['pruned'])} after {event['node']}")
    elif kind == "stall":
        logger.warning(f"TRAVERSAL [Stall]: corrections stopped improving at {event['node']}")
    elif kind == "budget":
        logger.warning(f"TRAVERSAL [Budget Exhausted]: {event['nodes_executed']} node(s) executed")
    elif kind == "outcome":
        logger.info(
            f"TRAVERSAL [Outcome]: success={event['success']} best={event['best_node']} "
            f"({event['best_score']:.4f})"
        )
    else:
        logger.debug(f"TRAVERSAL [Event]: {kind}")


# --- Selection Guardrail ---

def guard_selection(
    answer: str, registry: ToolRegistry, candidates: Sequence[ToolDescriptor]
) -> Optional[Selection]:
    """
    Validates a selector answer: it must parse, name a registered tool, and that tool must be one
    of the candidates offered for this action. Returns None (and logs the violation) otherwise;
    the caller then keeps the rule-based ranking.
    """
    try:
        selection = registry.validate_selection(parse_selection(answer, registry))
    except MalformedSelection as e:
        logger.critical(f"GUARDRAIL [Violation]: selector answer rejected: {e}")
        return None
    offered = {desc.name for desc in candidates}
    if selection.tool_name not in offered:
        logger.critical(f"GUARDRAIL [Violation]: selector chose '{selection.tool_name}', which was not offered")
        return None
    logger.info(f"GUARDRAIL [Selection Accepted]: {selection.tool_name}")
    return selection


# --- ADK Callbacks ---

def _tool_payload(tool_response: Any) -> Optional[Dict[str, Any]]:
    # function tools returning a string arrive wrapped as {"result": "..."}
    if isinstance(tool_response, dict) and isinstance(tool_response.get("result"), str):
        tool_response = tool_response["result"]
    if isinstance(tool_response, str):
        try:
            tool_response = json.loads(tool_response)
        except json.JSONDecodeError:
            return None
    return tool_response if isinstance(tool_response, dict) else None


def after_tool_callback(
    tool: BaseTool, args: Dict[str, Any], tool_context: ToolContext, tool_response: Any
) -> Optional[Dict]:
    """Keeps the last job outcome in session state for the output guardrail."""
    logger.info(f"CALLBACK [Tool Executed]: '{tool.name}'")
    if tool.name not in JOB_TOOLS:
        return None
    payload = _tool_payload(tool_response)
    if payload is None:
        logger.error(f"CALLBACK [Error]: Failed to decode JSON from tool '{tool.name}'.")
        return None
    if "error" in payload:
        tool_context.state["last_job_error"] = payload["error"]
        logger.warning(f"CALLBACK [Job Error]: {payload['error']}")
        return None
    tool_context.state["last_outcome"] = {
        "success": payload.get("success"),
        "best_score": payload.get("best_score"),
        "best_node": payload.get("best_node"),
    }
    logger.info(f"CALLBACK [State Update]: stored outcome of {payload.get('best_node')}")
    return None


def _response_text(llm_response: LlmResponse) -> str:
    if llm_response.content is None or not llm_response.content.parts:
        return ""
    return "".join(part.text or "" for part in llm_response.content.parts)


def after_model_callback(callback_context: CallbackContext, llm_response: LlmResponse) -> Optional[LlmResponse]:
    """Output guardrail: a reply about a job must not misreport whether it succeeded."""
    outcome = callback_context.state.get("last_outcome")
    text = _response_text(llm_response)
    if not isinstance(outcome, dict) or not text:
        return None
    lowered = text.lower()
    admits_failure = "failed" in lowered or "did not succeed" in lowered
    if outcome.get("success") is False and "succeeded" in lowered and not admits_failure:
        logger.critical("GUARDRAIL [Violation]: reply claims success for a job that failed")
        return LlmResponse(content=types.Content(role="model", parts=[types.Part(text=(
            f"The job did not succeed. The closest result reached a spec score of {outcome.get('best_score')} "
            f"at node {outcome.get('best_node')}."
        ))]))
    if outcome.get("success") and admits_failure and "succeeded" not in lowered:
        logger.warning("GUARDRAIL NOTICE: reply may have understated a successful job")
    return None
