####################################################################################################
####################  CanvasX | Position Pipeline                ###################################
####################  Developed by: DatSciX                      ###################################
####################################################################################################

"""
Position Pipeline
The auxiliary tool library: object detection, scene layout generation, condition extraction,
relative placement, and compensation of MISSING position-related tool inputs.

Detections are matched to selectors leniently (category, then attributes, then highest
confidence) since detectors legitimately return duplicates; scene-model selectors stay strict.
"""

import hashlib
import logging
import math
from typing import Any, Dict, List, Optional, Protocol, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from ..errors import AdapterError, CompensationFailed, EndpointError, InvalidSpec, MalformedSelection, PlacementInfeasible
from .arrangement import Arranger, Piece, spec_clauses, spec_links
from .decomposer import AtomicEdit, GenerationRequest
from .random_streams import stream_for
from .scene_model import (
    DEFAULT_RULES,
    EXISTENTIAL_RELATIONS,
    AttributeSet,
    BBox,
    ObjectSelector,
    SceneGraph,
    SceneRules,
    SceneSpec,
    pair_holds,
)
from .tool_registry import MISSING, Selection, ToolDescriptor

logger = logging.getLogger(__name__)


class AuxiliaryClient(Protocol):
    """What the pipeline needs from an endpoint client in endpoint mode."""

    def call_skill(self, skill: str, inputs: Dict[str, Any], state: Optional[SceneGraph] = None) -> Any: ...


class DetectionConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    sigma: float = Field(default=0.0, ge=0)
    confidence_floor: float = Field(default=0.01, gt=0, le=1)


class LayoutConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    fill: float = Field(default=0.8, gt=0, le=1)
    margin: float = Field(default=0.05, ge=0)
    default_size: float = Field(default=0.2, gt=0, le=1)
    next_to_fraction: float = Field(default=0.8, gt=0, lt=1)
    free_step: float = Field(default=0.05, gt=0)


class Detection(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str = Field(min_length=1)
    bbox: BBox
    confidence: float = Field(default=1.0, gt=0, le=1)
    object_id: Optional[str] = None
    attrs: AttributeSet = AttributeSet()

    def bbox_text(self) -> str:
        b = self.bbox
        return f"({b.x:.3f}, {b.y:.3f}, {b.w:.3f}, {b.h:.3f})"


class SelectionContext(BaseModel):
    """Everything tool selection and compensation may look at for one step."""

    model_config = ConfigDict(frozen=True)

    instruction: str
    candidates: Tuple[ToolDescriptor, ...] = ()
    detections: Tuple[Detection, ...] = ()
    spec: Optional[SceneSpec] = None
    edit: Optional[AtomicEdit] = None
    request: Optional[GenerationRequest] = None
    source_ref: Optional[str] = None
    subject_refs: Tuple[str, ...] = ()
    condition_refs: Dict[str, str] = Field(default_factory=dict)

    @property
    def has_subjects(self) -> bool:
        return bool(self.subject_refs)

    @property
    def has_conditions(self) -> bool:
        return bool(self.condition_refs)


def match_detections(
    selector: ObjectSelector, detections: Sequence[Detection], exclude: Optional[str] = None
) -> List[Detection]:
    """Detections a selector may refer to, best first."""
    pool = [d for d in detections if exclude is None or d.object_id != exclude]
    if selector.object_id is not None:
        pinned = [d for d in pool if d.object_id == selector.object_id]
        if pinned:
            return pinned
    found = [d for d in pool if d.name == selector.category]
    if selector.attrs.constrained():
        found = [d for d in found if d.attrs.satisfies(selector.attrs)]
    # stable sort keeps detection order among equal confidences
    return sorted(found, key=lambda d: -d.confidence)


# unit sizes a layout may shrink to, as fractions of the grid size
LAYOUT_SCALES = (1.0, 0.5, 0.25)


def _layout_keys(spec: SceneSpec) -> List[List[str]]:
    return [[f"{i}.{u}" for u in range(entry.count)] for i, entry in enumerate(spec.required)]


class PositionPipeline:
    """Auxiliary tools. In simulation they read the scene graph; with a client they call endpoints."""

    def __init__(
        self,
        detection: DetectionConfig = DetectionConfig(),
        layout: LayoutConfig = LayoutConfig(),
        rules: SceneRules = DEFAULT_RULES,
        seed: int = 0,
        client: Optional[AuxiliaryClient] = None,
    ):
        self.detection = detection
        self.layout = layout
        self.rules = rules
        self.seed = seed
        self.client = client

    def _call(self, skill: str, inputs: Dict[str, Any], state: Optional[SceneGraph] = None) -> Any:
        try:
            return self.client.call_skill(skill, inputs, state)
        except AdapterError as e:
            raise EndpointError(f"auxiliary endpoint '{skill}' failed: {e}") from e

    # --- Detection ---

    def detect_objects(self, state: SceneGraph) -> List[Detection]:
        """One detection per object; boxes jittered by seeded noise when sigma > 0."""
        if self.client is not None:
            answer = self._call("aux.detect", {}, state)
            try:
                return [Detection.model_validate(item) for item in answer]
            except (TypeError, ValidationError) as e:
                raise EndpointError(f"aux.detect answered off-schema: {e}") from e

        sigma = self.detection.sigma
        detections: List[Detection] = []
        for obj in state.objects:
            bbox, confidence = obj.bbox, 1.0
            if sigma > 0:
                jitter = stream_for(self.seed, "detect", obj.id).normal(0.0, sigma, 4)
                bbox = BBox.clamped(obj.bbox.x + jitter[0], obj.bbox.y + jitter[1], obj.bbox.w + jitter[2], obj.bbox.h + jitter[3])
                confidence = max(self.detection.confidence_floor, 1.0 - float(np.mean(np.abs(jitter))))
            detections.append(Detection(
                name=obj.category, bbox=bbox, confidence=confidence, object_id=obj.id, attrs=obj.attrs
            ))
        return detections

    # --- Conditions ---

    def extract_condition(self, kind: str, source: Optional[str]) -> str:
        """Opaque condition token derived from the source handle."""
        if not source:
            raise CompensationFailed(kind, "no source image is attached to extract a condition from")
        if self.client is not None:
            token = self._call(f"aux.condition.{kind}", {"source": source})
            if not isinstance(token, str) or not token:
                raise EndpointError(f"aux.condition.{kind} answered off-schema: {token!r}")
            return token
        digest = hashlib.sha256(f"{kind}|{source}".encode("utf-8")).hexdigest()
        return f"{kind}:{digest[:16]}"

    # --- Placement ---

    def free_box(self, occupied: Sequence[BBox], size: Optional[Tuple[float, float]] = None) -> BBox:
        """First grid position (row-major) whose box overlaps nothing; least overlap otherwise."""
        w, h = size or (self.layout.default_size, self.layout.default_size)
        step = self.layout.free_step
        xs = np.arange(0.0, 1.0 - w + 1e-9, step)
        ys = np.arange(0.0, 1.0 - h + 1e-9, step)
        if not len(xs) or not len(ys):
            return BBox.clamped(0.0, 0.0, w, h)
        gx, gy = np.meshgrid(xs, ys)
        gx, gy = gx.ravel(), gy.ravel()
        overlap = np.zeros_like(gx)
        for b in occupied:
            dx = np.clip(np.minimum(gx + w, b.right) - np.maximum(gx, b.x), 0.0, None)
            dy = np.clip(np.minimum(gy + h, b.bottom) - np.maximum(gy, b.y), 0.0, None)
            overlap += dx * dy
        best = int(np.argmin(overlap))
        return BBox.clamped(float(gx[best]), float(gy[best]), w, h)

    def place_relative(
        self,
        kind: str,
        anchors: Sequence[BBox],
        size: Optional[Tuple[float, float]] = None,
        current: Optional[BBox] = None,
    ) -> BBox:
        """A box of about `size` that holds `kind` against every anchor."""
        if not anchors:
            raise PlacementInfeasible(f"'{kind}' placement has no anchor")
        w, h = size or (self.layout.default_size, self.layout.default_size)
        margin = self.layout.margin
        ref = current or anchors[0]

        if kind == "left_of":
            limit, edge = min(a.cx for a in anchors), min(a.x for a in anchors)
            x = edge - margin - w
            if x < 0:
                if w / 2 >= limit:
                    w = limit
                x = 0.0
            placed = BBox.clamped(x, ref.y, w, h)
        elif kind == "right_of":
            limit, edge = max(a.cx for a in anchors), max(a.right for a in anchors)
            x = edge + margin
            if x + w > 1:
                if 1 - w / 2 <= limit:
                    w = 1 - limit
                x = 1 - w
            placed = BBox.clamped(x, ref.y, w, h)
        elif kind == "above":
            limit, edge = min(a.cy for a in anchors), min(a.y for a in anchors)
            y = edge - margin - h
            if y < 0:
                if h / 2 >= limit:
                    h = limit
                y = 0.0
            placed = BBox.clamped(ref.x, y, w, h)
        elif kind == "below":
            limit, edge = max(a.cy for a in anchors), max(a.bottom for a in anchors)
            y = edge + margin
            if y + h > 1:
                if 1 - h / 2 <= limit:
                    h = 1 - limit
                y = 1 - h
            placed = BBox.clamped(ref.x, y, w, h)
        elif kind == "next_to":
            cx = sum(a.cx for a in anchors) / len(anchors)
            cy = sum(a.cy for a in anchors) / len(anchors)
            reach = self.layout.next_to_fraction * self.rules.next_to_distance
            placed = None
            for dx, dy in ((reach, 0.0), (-reach, 0.0), (0.0, reach), (0.0, -reach), (0.0, 0.0)):
                candidate = BBox.centered(cx + dx, cy + dy, w, h)
                if all(pair_holds("next_to", candidate, a, self.rules) for a in anchors):
                    placed = candidate
                    break
            if placed is None:
                raise PlacementInfeasible("no box is next to every anchor")
        elif kind == "on":
            if len(anchors) != 1:
                raise PlacementInfeasible(f"'on' needs exactly one anchor, got {len(anchors)}")
            anchor = anchors[0]
            if anchor.y >= h:
                y = anchor.y - h
            else:
                h = anchor.y if anchor.y > 0 else self.rules.on_epsilon / 2
                y = 0.0
            placed = BBox.clamped(anchor.cx - w / 2, y, w, h)
        else:
            raise PlacementInfeasible(f"unknown relation kind '{kind}'")

        if not all(pair_holds(kind, placed, a, self.rules) for a in anchors):
            raise PlacementInfeasible(f"cannot place a box {kind} the anchors")
        return placed

    # --- Layout ---

    def generate_layout(self, spec: SceneSpec) -> Dict[str, BBox]:
        """Boxes for every required unit, keyed "<entry>.<unit>", satisfying every relation.

        Units start on a ceil(sqrt(N)) grid in (relation level, spec) order and are spread into
        bands by level along each axis, with 'on' subjects stacked onto their anchor's top edge.
        Whatever still fails goes to the Arranger, which moves units to the nearest cells that
        satisfy it and, failing that, grows the entries outward from the first one. Only
        contradictory orderings are infeasible.
        """
        if not spec.required:
            raise InvalidSpec("a layout needs at least one required object")
        if self.client is not None:
            return self._endpoint_layout(spec)

        keys = _layout_keys(spec)
        clauses = spec_clauses(spec, keys)
        arranger = self._arranger()
        x_level, y_level = arranger.axis_levels(clauses)

        units = [(i, key) for i, group in enumerate(keys) for key in group]
        order = sorted(units, key=lambda unit: (x_level.get(unit[1], 0) + y_level.get(unit[1], 0), unit[0]))
        n = math.ceil(math.sqrt(len(units)))
        cell = 1.0 / n
        size = cell * self.layout.fill
        start = {
            key: BBox.centered((k % n + 0.5) * cell, (k // n + 0.5) * cell, size, size)
            for k, (_, key) in enumerate(order)
        }
        pieces = [
            Piece(key, start[key], group=i, sizes=tuple((size * s, size * s) for s in LAYOUT_SCALES))
            for i, key in units
        ]

        boxes = arranger.banded(pieces, clauses, start)
        if arranger.broken(clauses, boxes):
            boxes = arranger.solve(pieces, clauses, spec_links(spec), boxes)

        layout = {key: boxes[key] for _, key in units}
        logger.info(f"PIPELINE [Layout]: {len(layout)} box(es) for {spec.describe()}")
        return layout

    def _arranger(self) -> Arranger:
        return Arranger(rules=self.rules, fill=self.layout.fill, margin=self.layout.margin)

    def _check_layout(self, spec: SceneSpec, layout: Dict[str, BBox]) -> None:
        broken = self._arranger().broken(spec_clauses(spec, _layout_keys(spec)), layout)
        if broken:
            raise PlacementInfeasible(f"no layout satisfies '{broken[0].label}' with the other relations")

    def _endpoint_layout(self, spec: SceneSpec) -> Dict[str, BBox]:
        answer = self._call("aux.layout", {"spec": spec.model_dump(mode="json")})
        try:
            layout = {key: BBox.model_validate(value) for key, value in answer.items()}
        except (AttributeError, ValidationError) as e:
            raise EndpointError(f"aux.layout answered off-schema: {e}") from e
        expected = {f"{i}.{u}" for i, entry in enumerate(spec.required) for u in range(entry.count)}
        if set(layout) != expected:
            raise EndpointError(f"aux.layout returned keys {sorted(layout)}, expected {sorted(expected)}")
        self._check_layout(spec, layout)
        return layout

    # --- Compensation ---

    def _anchors(self, edit: AtomicEdit, detections: Sequence[Detection], exclude: Optional[str]) -> List[BBox]:
        matches = match_detections(edit.placement.anchor, detections, exclude=exclude)
        if edit.placement.kind in EXISTENTIAL_RELATIONS:
            matches = matches[:1]
        return [d.bbox for d in matches]

    def _target(self, slot: str, edit: AtomicEdit, ctx: SelectionContext) -> Detection:
        matches = match_detections(edit.target, ctx.detections)
        if not matches:
            raise CompensationFailed(slot, f"no detection matches {edit.target.describe()!r}")
        return matches[0]

    def _object_bbox(self, slot: str, ctx: SelectionContext) -> BBox:
        edit = ctx.edit
        if edit is None:
            raise CompensationFailed(slot, "no edit to locate")
        if edit.action == "add":
            size = (self.layout.default_size, self.layout.default_size)
            if edit.bbox is not None:
                return edit.bbox
            if edit.placement is not None:
                try:
                    return self.place_relative(edit.placement.kind, self._anchors(edit, ctx.detections, None), size)
                except PlacementInfeasible as e:
                    raise CompensationFailed(slot, str(e)) from e
            return self.free_box([d.bbox for d in ctx.detections], size)
        if edit.target is None:
            raise CompensationFailed(slot, f"'{edit.describe()}' names no object")
        return self._target(slot, edit, ctx).bbox

    def _destination_bbox(self, slot: str, ctx: SelectionContext) -> BBox:
        edit = ctx.edit
        if edit is None or edit.action != "move":
            raise CompensationFailed(slot, "only moves have a destination")
        if edit.bbox is not None:
            return edit.bbox
        target = self._target(slot, edit, ctx)
        anchors = self._anchors(edit, ctx.detections, exclude=target.object_id)
        try:
            return self.place_relative(
                edit.placement.kind, anchors, size=(target.bbox.w, target.bbox.h), current=target.bbox
            )
        except PlacementInfeasible as e:
            raise CompensationFailed(slot, str(e)) from e

    def compensate_inputs(self, sel: Selection, ctx: SelectionContext) -> Selection:
        """Binds every MISSING slot through an auxiliary tool, or names the slot it cannot bind."""
        missing = sel.missing_slots()
        if not missing:
            return sel
        tool = next((c for c in ctx.candidates if c.name == sel.tool_name), None)
        if tool is None:
            raise MalformedSelection(f"selected tool '{sel.tool_name}' is not among the candidates")

        for name in missing:
            slot = tool.slot(name)
            kind = slot.kind if slot is not None else None
            if kind == "bbox":
                if name == "destination_bbox":
                    value = self._destination_bbox(name, ctx).model_dump()
                else:
                    value = self._object_bbox(name, ctx).model_dump()
            elif kind == "layout":
                spec = ctx.spec or (ctx.request.spec if ctx.request is not None else None)
                if spec is None:
                    raise CompensationFailed(name, "no scene spec to lay out")
                try:
                    value = {key: box.model_dump() for key, box in self.generate_layout(spec).items()}
                except (PlacementInfeasible, InvalidSpec) as e:
                    raise CompensationFailed(name, str(e)) from e
            elif kind == "condition":
                value = self.extract_condition(name, ctx.condition_refs.get(name) or ctx.source_ref)
            else:
                raise CompensationFailed(name, f"no auxiliary tool provides {kind or 'unknown'} inputs")
            sel = sel.with_input(name, value)
            logger.info(f"PIPELINE [Compensated]: {sel.tool_name}.{name}")
        return sel
