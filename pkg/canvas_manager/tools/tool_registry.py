####################################################################################################
####################  CanvasX | Tool Registry                    ###################################
####################  Developed by: DatSciX                      ###################################
####################################################################################################

"""
Tool Registry
Houses the tool descriptors, ranks the tools able to realize an action (the left-to-right
sibling order of the planning tree) and renders/parses the selection prompt format used by
the LLM-backed selector.
"""

import json
import logging
import re
from pathlib import Path
from typing import TYPE_CHECKING, Any, Dict, Iterator, List, Literal, Optional, Sequence, Tuple, Union

import yaml
from jinja2 import Environment, StrictUndefined
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from ..errors import ConfigError, DuplicateName, MalformedSelection, NoCapableTool
from ..prompts.selection_prompt import SELECTION_PROMPT_TEMPLATE
from .decomposer import AtomicEdit, GenerationRequest

if TYPE_CHECKING:
    from .position_pipeline import SelectionContext

logger = logging.getLogger(__name__)

Skill = Literal[
    "text_to_image", "layout_to_image", "image_to_image", "customization_single", "customization_multi",
    "super_resolution", "text_rendering", "condition_to_image", "add", "remove", "replace",
    "edit_attribute", "instruction_edit", "drag_detail", "drag_object", "style_transfer",
]
SlotKind = Literal["text", "bbox", "object_name", "layout", "subject_image", "condition", "style_image", "mask"]
Realization = Literal["direct", "indirect"]

MISSING = "<MISSING>"

GENERATION_SKILLS = ("text_to_image", "layout_to_image", "text_rendering")

# action -> skills able to realize it, best first
EDIT_REALIZATIONS: Dict[str, Tuple[Tuple[str, Realization], ...]] = {
    "add": (("add", "direct"), ("instruction_edit", "indirect")),
    "remove": (("remove", "direct"), ("instruction_edit", "indirect")),
    "replace": (("replace", "direct"), ("instruction_edit", "indirect")),
    "edit_attribute": (("edit_attribute", "direct"), ("replace", "indirect"), ("instruction_edit", "indirect")),
    "move": (("drag_object", "direct"), ("drag_detail", "indirect")),
    "style": (("style_transfer", "direct"), ("instruction_edit", "indirect")),
    "instruction_passthrough": (("instruction_edit", "direct"),),
}

REALIZATION_SCORE = {"direct": 2.0, "indirect": 1.0}
LAYOUT_BONUS = 2.0
TEXT_RENDERING_BONUS = 3.0
CUSTOMIZATION_BONUS = 3.0
KEYWORD_BONUS = 1.0


class InputSlot(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str = Field(min_length=1)
    kind: SlotKind


class ToolDescriptor(BaseModel):
    """Skill and name, required inputs, characteristics: the three-part tool introduction."""

    model_config = ConfigDict(frozen=True)

    skill: Skill
    name: str = Field(min_length=1)
    required_inputs: Tuple[InputSlot, ...] = ()
    characteristics: str = ""
    cost: float = Field(default=1.0, ge=0)
    variant: int = Field(default=0, ge=0)

    def slot(self, name: str) -> Optional[InputSlot]:
        return next((s for s in self.required_inputs if s.name == name), None)

    def reseeded(self, variant: int) -> "ToolDescriptor":
        """Same tool under a different random seed: a sibling alternate of its own."""
        return self.model_copy(update={"variant": variant, "name": f"{self.name}#seed{variant}"})

    def introduction(self) -> str:
        inputs = ", ".join(f"{s.name} ({s.kind})" for s in self.required_inputs) or "none"
        return (
            f"Tool skill and name: {self.skill} / {self.name}\n"
            f"Required inputs: {inputs}\n"
            f"Characteristics: {self.characteristics or 'none'}"
        )


class Selection(BaseModel):
    """A chosen tool plus its input binding; unbound slots hold MISSING."""

    model_config = ConfigDict(frozen=True)

    tool_name: str = Field(min_length=1)
    inputs: Dict[str, Any] = Field(default_factory=dict)

    def missing_slots(self) -> List[str]:
        return [name for name, value in self.inputs.items() if value == MISSING]

    def with_input(self, name: str, value: Any) -> "Selection":
        return Selection(tool_name=self.tool_name, inputs={**self.inputs, name: value})

    def render(self) -> str:
        return json.dumps({"tool_name": self.tool_name, "input": self.inputs}, sort_keys=True)


def _object_name(edit: AtomicEdit) -> str:
    if edit.action in ("add", "replace"):
        return edit.new_object
    if edit.action == "edit_attribute":
        attrs = edit.target.attrs.with_value(edit.attribute, edit.value)
        return f"{attrs.describe()} {edit.target.category}".strip()
    return edit.target.describe() if edit.target is not None else MISSING


def draft_selection(tool: ToolDescriptor, action: Union[AtomicEdit, GenerationRequest]) -> Selection:
    """Binds the inputs the action itself supplies; position-related slots are left MISSING."""
    inputs: Dict[str, Any] = {}
    for slot in tool.required_inputs:
        value: Any = MISSING
        if isinstance(action, GenerationRequest):
            if slot.kind == "text":
                value = action.prompt
            elif slot.kind == "subject_image" and action.subject_refs:
                value = action.subject_refs[0] if len(action.subject_refs) == 1 else list(action.subject_refs)
        elif slot.kind == "text":
            if slot.name == "style" and action.style is not None:
                value = action.style
            elif action.action == "instruction_passthrough":
                value = action.text
            else:
                value = action.describe()
        elif slot.kind == "object_name":
            value = _object_name(action)
        elif slot.kind == "bbox" and action.bbox is not None:
            if (slot.name == "destination_bbox") == (action.action == "move"):
                value = action.bbox.model_dump()
        inputs[slot.name] = value
    return Selection(tool_name=tool.name, inputs=inputs)


# --- Suitability ---

def _features(action: Union[AtomicEdit, GenerationRequest], ctx: Optional["SelectionContext"]) -> Dict[str, bool]:
    spec = action.spec if isinstance(action, GenerationRequest) else (ctx.spec if ctx is not None else None)
    subjects = bool(action.subject_refs) if isinstance(action, GenerationRequest) else False
    conditions = bool(action.condition_refs) if isinstance(action, GenerationRequest) else False
    if ctx is not None:
        subjects = subjects or ctx.has_subjects
        conditions = conditions or ctx.has_conditions
    many_objects = spec is not None and (spec.object_count >= 3 or bool(spec.relations))
    return {
        "compositional": many_objects,
        "spatial": spec is not None and bool(spec.relations),
        "rendering": spec is not None and bool(spec.text_tokens),
        "subject": subjects,
        "conditioned": conditions,
        "attribute": isinstance(action, AtomicEdit) and action.action == "edit_attribute",
    }


def suitability(
    tool: ToolDescriptor,
    realization: Realization,
    action: Union[AtomicEdit, GenerationRequest],
    ctx: Optional["SelectionContext"] = None,
) -> float:
    """Rule-based score: realization, feature bonuses, characteristic keywords, minus cost."""
    features = _features(action, ctx)
    score = REALIZATION_SCORE[realization]
    if tool.skill == "layout_to_image" and features["compositional"]:
        score += LAYOUT_BONUS
    if tool.skill == "text_rendering" and features["rendering"]:
        score += TEXT_RENDERING_BONUS
    if tool.skill.startswith("customization") and features["subject"]:
        score += CUSTOMIZATION_BONUS
    words = set(re.findall(r"[a-z]+", tool.characteristics.lower()))
    score += KEYWORD_BONUS * sum(1 for keyword, active in features.items() if active and keyword in words)
    return round(score - tool.cost, 6)


class ToolRegistry:
    """Name-unique descriptor store. Built once at startup, read-only afterwards."""

    def __init__(self, descriptors: Sequence[ToolDescriptor] = ()):
        self._tools: Dict[str, ToolDescriptor] = {}
        for desc in descriptors:
            self.register(desc)

    def register(self, desc: ToolDescriptor) -> None:
        if desc.name in self._tools:
            raise DuplicateName(f"tool '{desc.name}' is already registered")
        self._tools[desc.name] = desc
        logger.debug(f"REGISTRY [Registered]: {desc.skill} / {desc.name}")

    def get(self, name: str) -> Optional[ToolDescriptor]:
        return self._tools.get(name)

    def lookup_by_skill(self, skill: str) -> List[ToolDescriptor]:
        return [desc for desc in self._tools.values() if desc.skill == skill]

    def __len__(self) -> int:
        return len(self._tools)

    def __iter__(self) -> Iterator[ToolDescriptor]:
        return iter(self._tools.values())

    def _capable(self, action: Union[AtomicEdit, GenerationRequest]) -> List[Tuple[ToolDescriptor, Realization]]:
        if isinstance(action, GenerationRequest):
            found: List[Tuple[ToolDescriptor, Realization]] = []
            for desc in self._tools.values():
                if desc.skill in GENERATION_SKILLS:
                    found.append((desc, "direct"))
                elif desc.skill == "customization_single" and len(action.subject_refs) == 1:
                    found.append((desc, "direct"))
                elif desc.skill == "customization_multi" and len(action.subject_refs) > 1:
                    found.append((desc, "direct"))
                elif desc.skill == "condition_to_image" and any(
                    s.kind == "condition" and s.name in action.condition_refs for s in desc.required_inputs
                ):
                    found.append((desc, "direct"))
            return found
        realizations = dict(EDIT_REALIZATIONS[action.action])
        return [(desc, realizations[desc.skill]) for desc in self._tools.values() if desc.skill in realizations]

    def rank_tools(
        self, action: Union[AtomicEdit, GenerationRequest], ctx: Optional["SelectionContext"] = None
    ) -> List[ToolDescriptor]:
        """Every capable tool, best first; ties keep registration order."""
        if not self._tools:
            raise NoCapableTool("the tool registry is empty")
        capable = self._capable(action)
        if not capable:
            raise NoCapableTool(f"no registered tool can realize '{action.describe()}'")
        scored = [(-suitability(desc, realization, action, ctx), i, desc) for i, (desc, realization) in enumerate(capable)]
        scored.sort(key=lambda item: (item[0], item[1]))
        return [desc for _, _, desc in scored]

    def validate_selection(self, sel: Selection) -> Selection:
        desc = self.get(sel.tool_name)
        if desc is None:
            raise MalformedSelection(f"unknown tool '{sel.tool_name}'")
        absent = [s.name for s in desc.required_inputs if s.name not in sel.inputs]
        if absent:
            raise MalformedSelection(f"selection for '{sel.tool_name}' lacks slots {absent}")
        return sel


# --- Selection Prompt ---

_PROMPT_ENV = Environment(undefined=StrictUndefined, keep_trailing_newline=True, autoescape=False)
_PROMPT = _PROMPT_ENV.from_string(SELECTION_PROMPT_TEMPLATE)


def render_selection_prompt(ctx: "SelectionContext") -> str:
    """Task instruction, tool introductions, position information, in that order."""
    tools = "\n\n".join(f"{i}. {desc.introduction()}" for i, desc in enumerate(ctx.candidates, start=1))
    positions = "\n".join(f"{d.name}: {d.bbox_text()}" for d in ctx.detections) or "none"
    return _PROMPT.render(instruction=ctx.instruction, tools=tools or "none", positions=positions)


def parse_selection(text: str, registry: ToolRegistry) -> Selection:
    """Reads the first {"tool_name": ..., "input": {...}} object out of an answer."""
    start = text.find("{")
    if start < 0:
        raise MalformedSelection("answer contains no JSON object")
    try:
        payload, _ = json.JSONDecoder().raw_decode(text[start:])
    except json.JSONDecodeError as e:
        raise MalformedSelection(f"answer is not valid JSON: {e.msg}") from e
    if not isinstance(payload, dict) or not isinstance(payload.get("tool_name"), str):
        raise MalformedSelection("answer has no tool_name")
    desc = registry.get(payload["tool_name"])
    if desc is None:
        raise MalformedSelection(f"unknown tool '{payload['tool_name']}'")
    raw_inputs = payload.get("input") or {}
    if not isinstance(raw_inputs, dict):
        raise MalformedSelection("input must be an object")
    inputs = {s.name: raw_inputs.get(s.name, MISSING) for s in desc.required_inputs}
    return Selection(tool_name=desc.name, inputs=inputs)


# --- Loading ---

def load_registry(source: Union[str, Path, Sequence[Dict[str, Any]]]) -> ToolRegistry:
    """Builds a registry from a YAML tool library file or already-loaded descriptor rows."""
    if isinstance(source, (str, Path)):
        try:
            with open(source, "r", encoding="utf-8") as handle:
                document = yaml.safe_load(handle)
        except (OSError, yaml.YAMLError) as e:
            raise ConfigError(f"cannot read tool library '{source}': {e}") from e
        rows = document.get("tools", []) if isinstance(document, dict) else document
    else:
        rows = source
    try:
        registry = ToolRegistry([ToolDescriptor.model_validate(row) for row in rows or []])
    except ValidationError as e:
        raise ConfigError(f"invalid tool descriptor: {e}") from e
    logger.info(f"REGISTRY [Loaded]: {len(registry)} tool(s)")
    return registry
