####################################################################################################
####################  CanvasX | Scene Model                      ###################################
####################  Developed by: DatSciX                      ###################################
####################################################################################################

"""
Scene Model
The symbolic domain that stands in for images: boxes, attribute sets, scene graphs, target
specs, the spatial-relation semantics, and the spec-vs-state diff that drives verification
and correction. Every type here is an immutable value.
"""

import itertools
import json
import logging
import math
from typing import Dict, Iterator, List, Literal, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from shapely.geometry import Polygon, box

from ..errors import UnresolvedSelector

logger = logging.getLogger(__name__)

ATTRIBUTE_NAMES = ("color", "shape", "texture")
RELATION_KINDS = ("left_of", "right_of", "above", "below", "next_to", "on")
INVERSE_RELATION = {
    "left_of": "right_of",
    "right_of": "left_of",
    "above": "below",
    "below": "above",
}
# held against one anchor; the directional kinds must hold against every anchor
EXISTENTIAL_RELATIONS = ("next_to", "on")

RelationKind = Literal["left_of", "right_of", "above", "below", "next_to", "on"]

# Float slack for canvas bounds; boxes are built with arithmetic, not exact decimals.
_CANVAS_EPS = 1e-9


class SceneRules(BaseModel):
    """Thresholds that make the fuzzy relations decidable."""

    model_config = ConfigDict(frozen=True)

    next_to_distance: float = Field(default=0.25, gt=0)
    on_epsilon: float = Field(default=0.05, ge=0)


DEFAULT_RULES = SceneRules()


class Vocabulary(BaseModel):
    """Closed attribute vocabularies. Categories stay open (any noun token)."""

    model_config = ConfigDict(frozen=True)

    color: Tuple[str, ...] = (
        "red", "blue", "green", "yellow", "black", "white",
        "brown", "gray", "orange", "purple", "pink",
    )
    shape: Tuple[str, ...] = ("round", "square", "triangular", "oval", "rectangular", "cylindrical")
    texture: Tuple[str, ...] = (
        "wooden", "metallic", "plastic", "fluffy", "furry", "glass", "leather", "rubber", "fabric",
    )
    plurals: Dict[str, str] = Field(default_factory=lambda: {
        "sheep": "sheep", "people": "person", "men": "man", "women": "woman",
        "children": "child", "mice": "mouse", "geese": "goose", "fish": "fish",
        "benches": "bench", "boxes": "box", "buses": "bus", "glasses": "glass",
    })

    def values(self, attribute: str) -> Tuple[str, ...]:
        return getattr(self, attribute)

    def attribute_of(self, token: str) -> Optional[str]:
        """Returns which attribute a token belongs to, or None."""
        for name in ATTRIBUTE_NAMES:
            if token in self.values(name):
                return name
        return None

    def singular(self, noun: str) -> str:
        if noun in self.plurals:
            return self.plurals[noun]
        if noun.endswith("s") and not noun.endswith("ss") and len(noun) > 2:
            return noun[:-1]
        return noun


DEFAULT_VOCABULARY = Vocabulary()


class BBox(BaseModel):
    """Normalized canvas box, origin top-left."""

    model_config = ConfigDict(frozen=True)

    x: float
    y: float
    w: float
    h: float

    @model_validator(mode="after")
    def _inside_canvas(self) -> "BBox":
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box must have positive size, got w={self.w}, h={self.h}")
        if self.x < -_CANVAS_EPS or self.y < -_CANVAS_EPS:
            raise ValueError(f"box origin off canvas: ({self.x}, {self.y})")
        if self.x + self.w > 1 + _CANVAS_EPS or self.y + self.h > 1 + _CANVAS_EPS:
            raise ValueError(f"box extends past canvas: {self.x}+{self.w}, {self.y}+{self.h}")
        return self

    @classmethod
    def clamped(cls, x: float, y: float, w: float, h: float) -> "BBox":
        """Builds the nearest valid box: size capped to the canvas, origin shifted inside."""
        w = round(min(max(w, 1e-4), 1.0), 6)
        h = round(min(max(h, 1e-4), 1.0), 6)
        x = round(min(max(x, 0.0), 1.0 - w), 6)
        y = round(min(max(y, 0.0), 1.0 - h), 6)
        return cls(x=x, y=y, w=w, h=h)

    @classmethod
    def centered(cls, cx: float, cy: float, w: float, h: float) -> "BBox":
        return cls.clamped(cx - w / 2, cy - h / 2, w, h)

    @property
    def cx(self) -> float:
        return self.x + self.w / 2

    @property
    def cy(self) -> float:
        return self.y + self.h / 2

    @property
    def right(self) -> float:
        return self.x + self.w

    @property
    def bottom(self) -> float:
        return self.y + self.h

    @property
    def area(self) -> float:
        return self.w * self.h

    def drift(self, other: "BBox") -> float:
        """Largest coordinate difference between two boxes."""
        return max(abs(self.x - other.x), abs(self.y - other.y), abs(self.w - other.w), abs(self.h - other.h))

    def scaled(self, factor: float) -> "BBox":
        """Scales the area by `factor` around the centroid."""
        side = math.sqrt(factor)
        return BBox.centered(self.cx, self.cy, self.w * side, self.h * side)

    def polygon(self) -> Polygon:
        return box(self.x, self.y, self.right, self.bottom)

    def iou(self, other: "BBox") -> float:
        a, b = self.polygon(), other.polygon()
        union = a.union(b).area
        return a.intersection(b).area / union if union > 0 else 0.0


class AttributeSet(BaseModel):
    """Absent means unconstrained (in specs) or unspecified (in graphs)."""

    model_config = ConfigDict(frozen=True)

    color: Optional[str] = None
    shape: Optional[str] = None
    texture: Optional[str] = None

    def constrained(self) -> Dict[str, str]:
        return {name: getattr(self, name) for name in ATTRIBUTE_NAMES if getattr(self, name) is not None}

    def get(self, name: str) -> Optional[str]:
        return getattr(self, name)

    def satisfies(self, wanted: "AttributeSet") -> bool:
        return all(self.get(name) == value for name, value in wanted.constrained().items())

    def with_value(self, name: str, value: Optional[str]) -> "AttributeSet":
        return AttributeSet(**{**self.model_dump(), name: value})

    def merged(self, other: "AttributeSet") -> "AttributeSet":
        return AttributeSet(**{**self.model_dump(), **other.constrained()})

    def describe(self) -> str:
        return " ".join(self.constrained().values())


class SceneObject(BaseModel):
    model_config = ConfigDict(frozen=True)

    id: str = Field(min_length=1)
    category: str = Field(min_length=1)
    attrs: AttributeSet = AttributeSet()
    bbox: BBox

    def describe(self) -> str:
        words = self.attrs.describe()
        return f"{words} {self.category}".strip()


class ObjectSelector(BaseModel):
    """Category + attribute match, optionally pinned to an object id."""

    model_config = ConfigDict(frozen=True)

    category: str = Field(min_length=1)
    attrs: AttributeSet = AttributeSet()
    object_id: Optional[str] = None

    def matches(self, obj: SceneObject) -> bool:
        if self.object_id is not None and obj.id != self.object_id:
            return False
        return obj.category == self.category and obj.attrs.satisfies(self.attrs)

    def describe(self) -> str:
        words = self.attrs.describe()
        return f"{words} {self.category}".strip()


class Relation(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: RelationKind
    subject: ObjectSelector
    object: ObjectSelector

    @model_validator(mode="after")
    def _distinct_selectors(self) -> "Relation":
        if self.subject == self.object:
            raise ValueError("relation subject and object selectors must differ")
        return self

    def describe(self) -> str:
        return f"{self.subject.describe()} {self.kind} {self.object.describe()}"


class SceneGraph(BaseModel):
    """Simulated world state: the symbolic stand-in for an image."""

    model_config = ConfigDict(frozen=True)

    objects: Tuple[SceneObject, ...] = ()
    background: Tuple[str, ...] = ()
    provenance: Tuple[Tuple[str, str], ...] = ()

    @field_validator("background")
    @classmethod
    def _normalize_background(cls, tokens: Tuple[str, ...]) -> Tuple[str, ...]:
        return tuple(sorted(set(tokens)))

    @model_validator(mode="after")
    def _unique_ids(self) -> "SceneGraph":
        ids = [obj.id for obj in self.objects]
        if len(ids) != len(set(ids)):
            raise ValueError(f"duplicate object ids in scene graph: {ids}")
        return self

    def get(self, object_id: str) -> Optional[SceneObject]:
        for obj in self.objects:
            if obj.id == object_id:
                return obj
        return None

    def find(self, selector: ObjectSelector) -> List[SceneObject]:
        return [obj for obj in self.objects if selector.matches(obj)]

    def resolve(self, selector: ObjectSelector) -> SceneObject:
        matches = self.find(selector)
        if len(matches) != 1:
            raise UnresolvedSelector(
                f"selector '{selector.describe()}' matched {len(matches)} objects", matches=len(matches)
            )
        return matches[0]

    def next_id(self, category: str) -> str:
        stem = category.replace(" ", "_")
        taken = {obj.id for obj in self.objects}
        n = 0
        while f"{stem}_{n}" in taken:
            n += 1
        return f"{stem}_{n}"

    def with_objects(self, objects: Sequence[SceneObject]) -> "SceneGraph":
        return SceneGraph(objects=tuple(objects), background=self.background, provenance=self.provenance)

    def adding(self, obj: SceneObject) -> "SceneGraph":
        return self.with_objects(self.objects + (obj,))

    def removing(self, object_id: str) -> "SceneGraph":
        return self.with_objects([obj for obj in self.objects if obj.id != object_id])

    def replacing(self, object_id: str, new: SceneObject) -> "SceneGraph":
        return self.with_objects([new if obj.id == object_id else obj for obj in self.objects])

    def with_background(self, tokens: Sequence[str]) -> "SceneGraph":
        return SceneGraph(objects=self.objects, background=tuple(tokens), provenance=self.provenance)

    def stamped(self, node_id: str, tool_name: str) -> "SceneGraph":
        return SceneGraph(
            objects=self.objects,
            background=self.background,
            provenance=self.provenance + ((node_id, tool_name),),
        )

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))


class RequiredObject(BaseModel):
    model_config = ConfigDict(frozen=True)

    category: str = Field(min_length=1)
    attrs: AttributeSet = AttributeSet()
    count: int = Field(default=1, ge=1)

    def describe(self) -> str:
        words = self.attrs.describe()
        return f"{self.count}x {words} {self.category}".replace("  ", " ")

    def accepts(self, selector: ObjectSelector) -> bool:
        return selector.category == self.category and self.attrs.satisfies(selector.attrs)


class SceneSpec(BaseModel):
    """The decomposed target of a generation job."""

    model_config = ConfigDict(frozen=True)

    required: Tuple[RequiredObject, ...] = ()
    relations: Tuple[Relation, ...] = ()
    background: Tuple[str, ...] = ()
    forbid_extraneous: bool = False

    @model_validator(mode="after")
    def _selectors_resolve(self) -> "SceneSpec":
        for relation in self.relations:
            self.entry_index(relation.subject)
            self.entry_index(relation.object)
        return self

    def entry_index(self, selector: ObjectSelector) -> int:
        """Index of the one required entry a relation selector refers to."""
        hits = [i for i, entry in enumerate(self.required) if entry.accepts(selector)]
        if len(hits) != 1:
            raise ValueError(f"selector '{selector.describe()}' resolves to {len(hits)} required entries")
        return hits[0]

    @property
    def object_count(self) -> int:
        return sum(entry.count for entry in self.required)

    @property
    def text_tokens(self) -> Tuple[str, ...]:
        return tuple(token for token in self.background if token.startswith("text:"))

    def describe(self) -> str:
        parts = [entry.describe() for entry in self.required]
        parts += [relation.describe() for relation in self.relations]
        parts += list(self.background)
        return "; ".join(parts)


class MissingObject(BaseModel):
    model_config = ConfigDict(frozen=True)

    category: str
    attrs: AttributeSet = AttributeSet()
    deficit: int = Field(ge=1)


class ObjectRef(BaseModel):
    """A present object named by id and category."""

    model_config = ConfigDict(frozen=True)

    object_id: str
    category: str


class AttributeMismatch(BaseModel):
    model_config = ConfigDict(frozen=True)

    object_id: str
    category: str
    attribute: str
    found: Optional[str] = None
    wanted: str


class RelationViolation(BaseModel):
    """A failed relation plus the present objects bound to its two sides.

    `subject_ids` lists the subjects that need moving: the violating ones when the object side
    is complete, otherwise every present subject.
    """

    model_config = ConfigDict(frozen=True)

    relation: Relation
    subject_ids: Tuple[str, ...] = ()
    object_ids: Tuple[str, ...] = ()


class DiscrepancyReport(BaseModel):
    """What a graph leaves unsatisfied. `spec` and `bound` record what was checked: the spec and
    the objects matched to each of its required entries, in entry order."""

    model_config = ConfigDict(frozen=True)

    missing: Tuple[MissingObject, ...] = ()
    wrong_attribute: Tuple[AttributeMismatch, ...] = ()
    relation_violations: Tuple[RelationViolation, ...] = ()
    extraneous: Tuple[ObjectRef, ...] = ()
    background_mismatch: Tuple[str, ...] = ()
    score: float = Field(default=1.0, ge=0.0, le=1.0)
    satisfied: int = 0
    total: int = 0
    spec: Optional[SceneSpec] = None
    bound: Tuple[Tuple[SceneObject, ...], ...] = ()

    @property
    def is_empty(self) -> bool:
        return not (
            self.missing or self.wrong_attribute or self.relation_violations
            or self.extraneous or self.background_mismatch
        )

    def unsatisfied_count(self) -> int:
        missing = sum(item.deficit * (1 + len(item.attrs.constrained())) for item in self.missing)
        return (
            missing + len(self.wrong_attribute) + len(self.relation_violations)
            + len(self.extraneous) + len(self.background_mismatch)
        )


def pair_holds(kind: str, a: BBox, b: BBox, rules: SceneRules = DEFAULT_RULES) -> bool:
    """Relation semantics between two boxes, `a` being the subject."""
    if kind == "left_of":
        return a.cx < b.cx
    if kind == "right_of":
        return a.cx > b.cx
    if kind == "above":
        return a.cy < b.cy
    if kind == "below":
        return a.cy > b.cy
    if kind == "next_to":
        return math.dist((a.cx, a.cy), (b.cx, b.cy)) < rules.next_to_distance
    if kind == "on":
        overlap = min(a.right, b.right) - max(a.x, b.x)
        return abs(a.bottom - b.y) <= rules.on_epsilon and overlap > 0
    raise ValueError(f"unknown relation kind '{kind}'")


def holds_against(kind: str, subject: BBox, anchors: Sequence[BBox], rules: SceneRules = DEFAULT_RULES) -> bool:
    """A subject against every box its anchor selector binds: all of them for the directional
    kinds, at least one for 'next_to' and 'on'. No anchors, no relation."""
    if not anchors:
        return False
    if kind in EXISTENTIAL_RELATIONS:
        return any(pair_holds(kind, subject, anchor, rules) for anchor in anchors)
    return all(pair_holds(kind, subject, anchor, rules) for anchor in anchors)


def relation_holds(graph: SceneGraph, rel: Relation, rules: SceneRules = DEFAULT_RULES) -> bool:
    """Evaluates a relation whose selectors must each resolve to exactly one object."""
    subject = graph.resolve(rel.subject)
    anchor = graph.resolve(rel.object)
    if subject.id == anchor.id:
        raise UnresolvedSelector(f"relation '{rel.describe()}' resolves both sides to '{subject.id}'", matches=1)
    return pair_holds(rel.kind, subject.bbox, anchor.bbox, rules)


# --- Matching ---

def _distributions(objects: List[int], entries: List[Tuple[int, int]]) -> Iterator[Dict[int, Tuple[int, ...]]]:
    """Every way to hand objects of one category to its entries, filling as many slots as possible.

    Only maximum-size matchings are enumerated: an extra same-category assignment never lowers
    the satisfied count, so the optimum is always among them.
    """
    take = min(len(objects), sum(count for _, count in entries))
    capacity_after = [sum(count for _, count in entries[i + 1:]) for i in range(len(entries))]

    def walk(pos: int, remaining: List[int], need: int, acc: List[Tuple[int, Tuple[int, ...]]]):
        if pos == len(entries):
            if need == 0:
                yield dict(acc)
            return
        entry, count = entries[pos]
        low = max(0, need - capacity_after[pos])
        high = min(count, need, len(remaining))
        for k in range(low, high + 1):
            for chosen in itertools.combinations(remaining, k):
                left = [o for o in remaining if o not in chosen]
                acc.append((entry, chosen))
                yield from walk(pos + 1, left, need - k, acc)
                acc.pop()

    yield from walk(0, list(objects), take, [])


def _assignments(graph: SceneGraph, spec: SceneSpec) -> Iterator[Dict[int, Tuple[int, ...]]]:
    categories: List[str] = []
    for entry in spec.required:
        if entry.category not in categories:
            categories.append(entry.category)
    per_category = []
    for category in categories:
        objects = [i for i, obj in enumerate(graph.objects) if obj.category == category]
        entries = [(i, entry.count) for i, entry in enumerate(spec.required) if entry.category == category]
        per_category.append(list(_distributions(objects, entries)))
    for combo in itertools.product(*per_category):
        merged: Dict[int, Tuple[int, ...]] = {}
        for part in combo:
            merged.update(part)
        yield merged


def _evaluate(
    graph: SceneGraph, spec: SceneSpec, assignment: Dict[int, Tuple[int, ...]], rules: SceneRules
) -> DiscrepancyReport:
    satisfied = 0
    total = 0
    missing: List[MissingObject] = []
    wrong: List[AttributeMismatch] = []
    bound: Dict[int, List[SceneObject]] = {}

    for index, entry in enumerate(spec.required):
        wanted = entry.attrs.constrained()
        total += entry.count * (1 + len(wanted))
        objs = [graph.objects[i] for i in assignment.get(index, ())]
        bound[index] = objs
        for obj in objs:
            satisfied += 1
            for name, value in wanted.items():
                found = obj.attrs.get(name)
                if found == value:
                    satisfied += 1
                else:
                    wrong.append(AttributeMismatch(
                        object_id=obj.id, category=obj.category, attribute=name, found=found, wanted=value
                    ))
        if len(objs) < entry.count:
            missing.append(MissingObject(category=entry.category, attrs=entry.attrs, deficit=entry.count - len(objs)))

    violations: List[RelationViolation] = []
    for relation in spec.relations:
        total += 1
        s_index = spec.entry_index(relation.subject)
        o_index = spec.entry_index(relation.object)
        subjects, anchors = bound[s_index], bound[o_index]
        complete = (
            len(subjects) == spec.required[s_index].count and len(anchors) == spec.required[o_index].count
        )

        def violates(s: SceneObject) -> bool:
            others = [o.bbox for o in anchors if o.id != s.id]
            return bool(others) and not holds_against(relation.kind, s.bbox, others, rules)

        offenders = [s.id for s in subjects if violates(s)]
        if complete and not offenders:
            satisfied += 1
            continue
        if len(anchors) < spec.required[o_index].count:
            offenders = [s.id for s in subjects]
        violations.append(RelationViolation(
            relation=relation, subject_ids=tuple(offenders), object_ids=tuple(o.id for o in anchors)
        ))

    mismatch: List[str] = []
    for token in spec.background:
        total += 1
        if token in graph.background:
            satisfied += 1
        else:
            mismatch.append(token)

    extraneous: List[ObjectRef] = []
    if spec.forbid_extraneous:
        used = {i for objs in assignment.values() for i in objs}
        extraneous = [
            ObjectRef(object_id=obj.id, category=obj.category)
            for i, obj in enumerate(graph.objects) if i not in used
        ]
        total += len(extraneous)

    score = 1.0 if total == 0 else satisfied / total
    return DiscrepancyReport(
        missing=tuple(missing),
        wrong_attribute=tuple(wrong),
        relation_violations=tuple(violations),
        extraneous=tuple(extraneous),
        background_mismatch=tuple(mismatch),
        score=score,
        satisfied=satisfied,
        total=total,
        spec=spec,
        bound=tuple(tuple(bound[i]) for i in range(len(spec.required))),
    )


def diff(graph: SceneGraph, spec: SceneSpec, rules: SceneRules = DEFAULT_RULES) -> DiscrepancyReport:
    """Lists exactly the constraints of `spec` that `graph` leaves unsatisfied.

    Objects are matched to required slots by the assignment that satisfies the most
    constraints; ties keep the first assignment in graph order.
    """
    best: Optional[DiscrepancyReport] = None
    for assignment in _assignments(graph, spec):
        report = _evaluate(graph, spec, assignment, rules)
        if best is None or report.satisfied > best.satisfied:
            best = report
            if report.satisfied == report.total:
                break
    return best if best is not None else _evaluate(graph, spec, {}, rules)


def spec_score(graph: SceneGraph, spec: SceneSpec, rules: SceneRules = DEFAULT_RULES) -> float:
    """Satisfied over total constraints; an empty spec scores 1.0."""
    return diff(graph, spec, rules).score
