####################################################################################################
####################  CanvasX | Tool Selector SubAgent           ###################################
####################  Developed by: DatSciX                      ###################################
####################################################################################################

"""
Tool Selector SubAgent
An LLM agent that reads the three-part selection prompt and names the most suitable tool.
LlmToolSelector plugs it into the planner as the tool ordering: the agent's choice moves to
the leftmost sibling, the rule-based ranking keeps the rest of the order and is the fallback
whenever the answer fails the guardrail.
"""

import logging
from typing import Callable, List, Optional, Union

from google.adk.agents import LlmAgent

from ..callbacks import guard_selection
from ..config import ModelsConfig, llm
from ..errors import EndpointError
from ..prompts.selection_prompt import TOOL_SELECTOR_PROMPT
from ..tools.decomposer import AtomicEdit, GenerationRequest
from ..tools.position_pipeline import PositionPipeline, SelectionContext
from ..tools.scene_model import SceneGraph
from ..tools.tool_registry import ToolDescriptor, ToolRegistry, render_selection_prompt
from .runner import ask_agent

logger = logging.getLogger(__name__)


def build_tool_selector_agent(models: ModelsConfig = ModelsConfig()) -> LlmAgent:
    return LlmAgent(
        name="tool_selector",
        description="Chooses the most suitable image generation or editing tool for one planning step",
        model=llm(models.selector, models.temperature),
        instruction=TOOL_SELECTOR_PROMPT,
    )


class LlmToolSelector:
    """ToolOrdering backed by the tool selector agent."""

    def __init__(
        self,
        registry: ToolRegistry,
        pipeline: PositionPipeline,
        agent: Optional[LlmAgent] = None,
        ask: Callable[[LlmAgent, str], str] = ask_agent,
    ):
        self.registry = registry
        self.pipeline = pipeline
        self.agent = agent or build_tool_selector_agent()
        self.ask = ask

    def order(
        self,
        action: Union[GenerationRequest, AtomicEdit],
        ranked: List[ToolDescriptor],
        ctx: SelectionContext,
        state: SceneGraph,
    ) -> List[ToolDescriptor]:
        if len(ranked) < 2:
            return ranked
        detections = tuple(self.pipeline.detect_objects(state)) if isinstance(action, AtomicEdit) else ()
        prompt = render_selection_prompt(ctx.model_copy(update={"candidates": tuple(ranked), "detections": detections}))
        try:
            answer = self.ask(self.agent, prompt)
        except EndpointError as e:
            logger.warning(f"GUARDRAIL [Fallback]: selector unavailable, keeping ranked order: {e}")
            return ranked
        selection = guard_selection(answer, self.registry, ranked)
        if selection is None:
            logger.warning("GUARDRAIL [Fallback]: keeping ranked order")
            return ranked
        chosen = next(desc for desc in ranked if desc.name == selection.tool_name)
        logger.info(f"SELECTOR [Chosen]: {chosen.name} for '{action.describe()}'")
        return [chosen] + [desc for desc in ranked if desc.name != chosen.name]
