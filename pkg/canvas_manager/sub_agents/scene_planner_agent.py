####################################################################################################
####################  CanvasX | Scene Planner SubAgent           ###################################
####################  Developed by: DatSciX                      ###################################
####################################################################################################

"""
Scene Planner SubAgent
The LLM alternative to the instruction grammar. Its JSON answer is validated against the same
output schema the grammar produces; an answer that does not fit raises EndpointError.
"""

import json
import logging
from typing import Callable, List, Optional, Union

from google.adk.agents import LlmAgent

from ..config import ModelsConfig, llm
from ..errors import EndpointError
from ..prompts.planner_prompt import SCENE_PLANNER_PROMPT
from ..tools.decomposer import AtomicEdit, TaskInstruction, decomposition_from_payload
from ..tools.scene_model import SceneSpec
from .runner import ask_agent

logger = logging.getLogger(__name__)


def build_scene_planner_agent(models: ModelsConfig = ModelsConfig()) -> LlmAgent:
    return LlmAgent(
        name="scene_planner",
        description="Decomposes generation prompts into scene specs and editing instructions into simple edits",
        model=llm(models.planner, models.temperature),
        instruction=SCENE_PLANNER_PROMPT,
    )


def _json_object(text: str) -> dict:
    start = text.find("{")
    if start < 0:
        raise EndpointError("planner answer contains no JSON object")
    try:
        payload, _ = json.JSONDecoder().raw_decode(text[start:])
    except json.JSONDecodeError as e:
        raise EndpointError(f"planner answer is not valid JSON: {e.msg}") from e
    if not isinstance(payload, dict):
        raise EndpointError("planner answer is not a JSON object")
    return payload


class LlmDecomposer:
    """Decomposer backed by the scene planner agent."""

    def __init__(self, agent: Optional[LlmAgent] = None, ask: Callable[[LlmAgent, str], str] = ask_agent):
        self.agent = agent or build_scene_planner_agent()
        self.ask = ask

    def decompose(self, instr: TaskInstruction, kind: str) -> Union[SceneSpec, List[AtomicEdit]]:
        answer = self.ask(self.agent, f"Task kind: {kind}\nInstruction: {instr.text}")
        payload = _json_object(answer)
        if payload.get("kind", kind) != kind:
            raise EndpointError(f"planner answered a {payload.get('kind')} plan for a {kind} task")
        result = decomposition_from_payload(payload, kind)
        logger.info(f"DECOMPOSER [LLM Plan]: {kind} plan accepted for '{instr.text}'")
        return result
