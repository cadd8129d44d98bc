####################################################################################################
####################  CanvasX | Simulated World                  ###################################
####################  Developed by: DatSciX                      ###################################
####################################################################################################

"""
Simulated World
Stands in for the image models. Every tool skill becomes a symbolic mutation of a scene graph,
succeeding or failing by a draw from a stream keyed on (seed, node id) so that replays stay
identical no matter in which order backtracking visits the nodes.
"""

import logging
from typing import Any, Dict, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ..errors import PlacementInfeasible, UnboundInput
from .decomposer import AtomicEdit, GenerationRequest
from .position_pipeline import PositionPipeline, match_detections
from .random_streams import stream_for
from .scene_model import (
    DEFAULT_VOCABULARY,
    BBox,
    SceneGraph,
    SceneObject,
    SceneSpec,
)
from .tool_registry import MISSING, Selection, ToolDescriptor

logger = logging.getLogger(__name__)

FailureMode = Literal["noop", "wrong_attribute", "collateral", "shrink", "misplace"]
ToolOutcome = Literal["success", "noop", "wrong_attribute", "collateral", "shrink", "misplace"]
FAILURE_MODES: Tuple[str, ...] = ("noop", "wrong_attribute", "collateral", "shrink", "misplace")

GENERATIVE_SKILLS = (
    "text_to_image", "layout_to_image", "text_rendering",
    "customization_single", "customization_multi", "condition_to_image",
)
PASSIVE_SKILLS = ("image_to_image", "super_resolution")

SHRINK_FACTOR = 0.1
RANDOM_SIDE = (0.15, 0.3)


class SkillReliability(BaseModel):
    """Success probability of one skill plus how its failures are distributed."""

    model_config = ConfigDict(frozen=True)

    p_success: float = Field(default=1.0, ge=0.0, le=1.0)
    weights: Dict[FailureMode, float] = Field(default_factory=lambda: {mode: 0.2 for mode in FAILURE_MODES})

    @model_validator(mode="after")
    def _weights_sum_to_one(self) -> "SkillReliability":
        if any(w < 0 for w in self.weights.values()):
            raise ValueError("failure-mode weights must be non-negative")
        if abs(sum(self.weights.values()) - 1.0) > 1e-6:
            raise ValueError(f"failure-mode weights must sum to 1, got {sum(self.weights.values())}")
        return self

    def distribution(self) -> np.ndarray:
        return np.array([self.weights.get(mode, 0.0) for mode in FAILURE_MODES], dtype=float)


class ScriptedOutcome(BaseModel):
    """Fixed outcome for one node id; `state` replaces the tool's output outright."""

    model_config = ConfigDict(frozen=True)

    outcome: ToolOutcome = "success"
    state: Optional[SceneGraph] = None


class WorldConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    seed: int = 0
    failures: Dict[str, SkillReliability] = Field(default_factory=dict)
    default: SkillReliability = SkillReliability()
    p_attr: float = Field(default=1.0, ge=0.0, le=1.0)
    p_obj: float = Field(default=1.0, ge=0.0, le=1.0)
    mode: Literal["stochastic", "scripted"] = "stochastic"
    script: Dict[str, ScriptedOutcome] = Field(default_factory=dict)

    def reliability(self, skill: str) -> SkillReliability:
        return self.failures.get(skill, self.default)

    def uniform(self, p_success: float) -> "WorldConfig":
        """Same world with every skill at one success rate."""
        return self.model_copy(update={"failures": {}, "default": SkillReliability(p_success=p_success)})


# --- Outcome Draws ---

def draw_outcome(skill: str, node_id: str, cfg: WorldConfig) -> Tuple[str, np.random.Generator]:
    """Outcome for a node plus the stream its effects keep drawing from."""
    rng = stream_for(cfg.seed, node_id)
    if cfg.mode == "scripted":
        scripted = cfg.script.get(node_id)
        return (scripted.outcome if scripted is not None else "success"), rng
    reliability = cfg.reliability(skill)
    if rng.random() < reliability.p_success:
        return "success", rng
    mode = FAILURE_MODES[int(rng.choice(len(FAILURE_MODES), p=reliability.distribution()))]
    return mode, rng


def action_failure_rate(skill: str, k_alternates: int, cfg: WorldConfig, trials: int = 10_000) -> float:
    """Monte Carlo estimate that all k independent alternates of an action fail."""
    if k_alternates < 1:
        raise ValueError("k_alternates must be at least 1")
    p = cfg.reliability(skill).p_success
    rng = stream_for(cfg.seed, "failure-rate", skill, k_alternates)
    succeeded = rng.random((trials, k_alternates)) < p
    return float(np.mean(~succeeded.any(axis=1)))


# --- Helpers ---

def _wrong_value(attribute: str, avoid: Optional[str], rng: np.random.Generator) -> str:
    choices = [v for v in DEFAULT_VOCABULARY.values(attribute) if v != avoid]
    return choices[int(rng.integers(len(choices)))]


def _random_box(rng: np.random.Generator, size: Optional[Tuple[float, float]] = None) -> BBox:
    w, h = size or (float(rng.uniform(*RANDOM_SIDE)), float(rng.uniform(*RANDOM_SIDE)))
    return BBox.clamped(float(rng.uniform(0.0, 1.0 - w)), float(rng.uniform(0.0, 1.0 - h)), w, h)


def _bbox_input(inputs: Dict[str, Any], name: str) -> BBox:
    try:
        return BBox.model_validate(inputs[name])
    except KeyError as e:
        raise UnboundInput(f"input '{name}' is not bound") from e
    except ValidationError as e:
        raise UnboundInput(f"input '{name}' is not a box: {e}") from e


def _locate(state: SceneGraph, edit: AtomicEdit, inputs: Dict[str, Any]) -> Optional[SceneObject]:
    """The object an edit tool acts on: best box overlap when given a box, else the selector."""
    if "object_bbox" in inputs and edit.action != "add":
        region = _bbox_input(inputs, "object_bbox")
        best, best_iou = None, 0.0
        for obj in state.objects:
            overlap = obj.bbox.iou(region)
            if overlap > best_iou:
                best, best_iou = obj, overlap
        return best
    if edit.target is None:
        return None
    if edit.target.object_id is not None:
        return state.get(edit.target.object_id)
    found = state.find(edit.target)
    return found[0] if found else None


def _set_attr(state: SceneGraph, obj: SceneObject, attribute: str, value: str) -> SceneGraph:
    return state.replacing(obj.id, obj.model_copy(update={"attrs": obj.attrs.with_value(attribute, value)}))


def _set_bbox(state: SceneGraph, obj: SceneObject, bbox: BBox) -> SceneGraph:
    return state.replacing(obj.id, obj.model_copy(update={"bbox": bbox}))


# --- Generation ---

def _generate(
    skill: str, inputs: Dict[str, Any], request: GenerationRequest, cfg: WorldConfig, rng: np.random.Generator
) -> SceneGraph:
    spec: SceneSpec = request.spec
    layout = inputs.get("layout") if skill == "layout_to_image" else None
    if skill == "layout_to_image" and not isinstance(layout, dict):
        raise UnboundInput("layout_to_image needs a bound layout")

    graph = SceneGraph()
    for index, entry in enumerate(spec.required):
        for unit in range(entry.count):
            if layout is not None:
                key = f"{index}.{unit}"
                if key not in layout:
                    raise UnboundInput(f"layout has no box for unit '{key}'")
                bbox = BBox.model_validate(layout[key])
            else:
                if rng.random() >= cfg.p_obj:
                    continue
                bbox = _random_box(rng)
            attrs = entry.attrs
            for name, value in entry.attrs.constrained().items():
                if rng.random() >= cfg.p_attr:
                    attrs = attrs.with_value(name, _wrong_value(name, value, rng))
            graph = graph.adding(SceneObject(id=graph.next_id(entry.category), category=entry.category, attrs=attrs, bbox=bbox))

    tokens = [t for t in spec.background if skill == "text_rendering" or not t.startswith("text:")]
    return graph.with_background(tokens)


def _spoil_generation(mode: str, state: SceneGraph, rng: np.random.Generator) -> SceneGraph:
    if not state.objects:
        return state
    victim = state.objects[int(rng.integers(len(state.objects)))]
    if mode == "wrong_attribute":
        constrained = list(victim.attrs.constrained()) or ["color"]
        name = constrained[int(rng.integers(len(constrained)))]
        return _set_attr(state, victim, name, _wrong_value(name, victim.attrs.get(name), rng))
    if mode == "collateral":
        return state.removing(victim.id)
    if mode == "shrink":
        return _set_bbox(state, victim, victim.bbox.scaled(SHRINK_FACTOR))
    if mode == "misplace":
        return _set_bbox(state, victim, _random_box(rng, (victim.bbox.w, victim.bbox.h)))
    return state


# --- Editing ---

def _place(
    edit: AtomicEdit, state: SceneGraph, pipeline: PositionPipeline, size: Tuple[float, float], exclude: Optional[str]
) -> BBox:
    """Where an instruction-following editor puts an added or moved object."""
    if edit.bbox is not None:
        return edit.bbox
    detections = pipeline.detect_objects(state)
    if edit.placement is None:
        return pipeline.free_box([d.bbox for d in detections if d.object_id != exclude], size)
    anchors = match_detections(edit.placement.anchor, detections, exclude=exclude)
    if edit.placement.kind in ("next_to", "on"):
        anchors = anchors[:1]
    current = state.get(exclude).bbox if exclude is not None and state.get(exclude) is not None else None
    return pipeline.place_relative(edit.placement.kind, [d.bbox for d in anchors], size=size, current=current)


def _apply_style(state: SceneGraph, token: str) -> SceneGraph:
    tokens = list(state.background)
    if token.startswith("style:"):
        tokens = [t for t in tokens if not t.startswith("style:")]
    return state.with_background(tokens + [token])


def _edit(
    skill: str, inputs: Dict[str, Any], edit: AtomicEdit, state: SceneGraph, pipeline: PositionPipeline
) -> Tuple[SceneGraph, Optional[str], Optional[str]]:
    """Exact semantics of an edit skill: (new state, id of the object acted on or produced, target id)."""
    if skill == "add":
        obj = SceneObject(
            id=state.next_id(edit.category), category=edit.category, attrs=edit.attrs,
            bbox=_bbox_input(inputs, "object_bbox"),
        )
        return state.adding(obj), obj.id, None

    if skill == "style_transfer":
        return _apply_style(state, edit.style or inputs.get("style")), None, None

    if skill == "instruction_edit":
        return _instruction_edit(edit, state, pipeline)

    target = _locate(state, edit, inputs)
    if target is None:
        logger.info(f"WORLD [No Target]: '{edit.describe()}' found nothing to act on")
        return state, None, None

    if skill == "remove":
        return state.removing(target.id), None, target.id
    if skill == "replace":
        if edit.action == "edit_attribute":
            category, attrs = target.category, target.attrs.with_value(edit.attribute, edit.value)
        else:
            category, attrs = edit.category, edit.attrs
        new = SceneObject(id=state.next_id(category), category=category, attrs=attrs, bbox=target.bbox)
        return state.replacing(target.id, new), new.id, target.id
    if skill == "edit_attribute":
        return _set_attr(state, target, edit.attribute, edit.value), target.id, target.id
    if skill in ("drag_object", "drag_detail"):
        return _set_bbox(state, target, _bbox_input(inputs, "destination_bbox")), target.id, target.id
    raise UnboundInput(f"skill '{skill}' cannot realize '{edit.describe()}'")


def _instruction_edit(
    edit: AtomicEdit, state: SceneGraph, pipeline: PositionPipeline
) -> Tuple[SceneGraph, Optional[str], Optional[str]]:
    size = (pipeline.layout.default_size, pipeline.layout.default_size)
    if edit.action == "instruction_passthrough":
        return state, None, None
    if edit.action == "style":
        return _apply_style(state, edit.style), None, None
    if edit.action == "add":
        try:
            bbox = _place(edit, state, pipeline, size, exclude=None)
        except PlacementInfeasible:
            bbox = pipeline.free_box([o.bbox for o in state.objects], size)
        obj = SceneObject(id=state.next_id(edit.category), category=edit.category, attrs=edit.attrs, bbox=bbox)
        return state.adding(obj), obj.id, None

    target = _locate(state, edit, {})
    if target is None:
        return state, None, None
    if edit.action == "remove":
        return state.removing(target.id), None, target.id
    if edit.action == "replace":
        new = SceneObject(id=state.next_id(edit.category), category=edit.category, attrs=edit.attrs, bbox=target.bbox)
        return state.replacing(target.id, new), new.id, target.id
    if edit.action == "edit_attribute":
        return _set_attr(state, target, edit.attribute, edit.value), target.id, target.id
    try:
        bbox = _place(edit, state, pipeline, (target.bbox.w, target.bbox.h), exclude=target.id)
    except PlacementInfeasible:
        return state, target.id, target.id
    return _set_bbox(state, target, bbox), target.id, target.id


def _spoil_edit(
    mode: str,
    before: SceneGraph,
    after: SceneGraph,
    result_id: Optional[str],
    target_id: Optional[str],
    edit: AtomicEdit,
    rng: np.random.Generator,
) -> SceneGraph:
    result = after.get(result_id) if result_id is not None else None
    if mode == "noop":
        return before
    if mode == "collateral":
        bystanders = [o for o in after.objects if o.id not in (result_id, target_id)]
        if not bystanders:
            return before
        victim = bystanders[int(rng.integers(len(bystanders)))]
        return _set_attr(after, victim, "color", _wrong_value("color", victim.attrs.color, rng))
    if result is None:
        return before
    if mode == "wrong_attribute":
        name = edit.attribute or next(iter(result.attrs.constrained()), "color")
        return _set_attr(after, result, name, _wrong_value(name, edit.value or result.attrs.get(name), rng))
    if mode == "shrink":
        return _set_bbox(after, result, result.bbox.scaled(SHRINK_FACTOR))
    return _set_bbox(after, result, _random_box(rng, (result.bbox.w, result.bbox.h)))


# --- Entry Point ---

def apply_tool(
    skill: str,
    inputs: Dict[str, Any],
    state: SceneGraph,
    node_id: str,
    cfg: WorldConfig,
    action: Union[AtomicEdit, GenerationRequest, None] = None,
    tool_name: Optional[str] = None,
    pipeline: Optional[PositionPipeline] = None,
) -> SceneGraph:
    """Runs one simulated tool. The input state is never modified; the result is stamped with the node."""
    unbound = sorted(name for name, value in inputs.items() if value == MISSING)
    if unbound:
        raise UnboundInput(f"{tool_name or skill} called with unbound inputs {unbound}")

    outcome, rng = draw_outcome(skill, node_id, cfg)
    scripted = cfg.script.get(node_id) if cfg.mode == "scripted" else None
    if scripted is not None and scripted.state is not None:
        result = scripted.state
    elif skill in GENERATIVE_SKILLS:
        if not isinstance(action, GenerationRequest):
            raise UnboundInput(f"{skill} needs a generation request")
        if outcome == "noop":
            result = state
        else:
            result = _generate(skill, inputs, action, cfg, rng)
            if outcome != "success":
                result = _spoil_generation(outcome, result, rng)
    elif skill in PASSIVE_SKILLS:
        result = state
    else:
        if not isinstance(action, AtomicEdit):
            raise UnboundInput(f"{skill} needs an edit")
        after, result_id, target_id = _edit(skill, inputs, action, state, pipeline or PositionPipeline(seed=cfg.seed))
        result = after if outcome == "success" else _spoil_edit(outcome, state, after, result_id, target_id, action, rng)

    logger.info(f"WORLD [Tool Applied]: {node_id} {tool_name or skill} -> {outcome}")
    return result.stamped(node_id, tool_name or skill)


class SimulatedBackend:
    """In-process tool backend: every selected tool runs in the simulated world."""

    def __init__(self, world: WorldConfig, pipeline: Optional[PositionPipeline] = None):
        self.world = world
        self.pipeline = pipeline or PositionPipeline(seed=world.seed)

    def invoke(
        self,
        tool: ToolDescriptor,
        selection: Selection,
        state: SceneGraph,
        node_id: str,
        action: Union[AtomicEdit, GenerationRequest],
    ) -> SceneGraph:
        return apply_tool(tool.skill, selection.inputs, state, node_id, self.world, action, tool.name, self.pipeline)
