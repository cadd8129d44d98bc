####################################################################################################
####################  CanvasX | Decomposer                       ###################################
####################  Developed by: DatSciX                      ###################################
####################################################################################################

"""
Decomposer
Turns user instructions into a SceneSpec (generation) or an ordered list of atomic edits
(editing), and maps discrepancy reports to correction edits. The instruction grammar is
documented in docs/grammar.md.
"""

import logging
import math
import re
from collections import Counter
from dataclasses import dataclass
from typing import Any, Dict, List, Literal, Optional, Sequence, Set, Tuple, Union

import pyparsing as pp
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ..errors import EndpointError, ParseError, PlacementInfeasible
from .arrangement import Arranger, Piece, spec_clauses, spec_links
from .scene_model import (
    ATTRIBUTE_NAMES,
    DEFAULT_RULES,
    DEFAULT_VOCABULARY,
    AttributeSet,
    BBox,
    DiscrepancyReport,
    ObjectSelector,
    Relation,
    RelationKind,
    RequiredObject,
    SceneGraph,
    SceneRules,
    SceneSpec,
    Vocabulary,
)

logger = logging.getLogger(__name__)

TaskKind = Literal["generation", "editing"]
EditAction = Literal["add", "remove", "replace", "edit_attribute", "move", "style", "instruction_passthrough"]

NUMBER_WORDS = {
    "one": 1, "two": 2, "three": 3, "four": 4, "five": 5,
    "six": 6, "seven": 7, "eight": 8, "nine": 9, "ten": 10,
}
ARTICLES = ("a", "an", "the")
STOP_WORDS = ARTICLES + tuple(NUMBER_WORDS) + (
    "and", "is", "are", "with", "of", "to", "then", "at", "in", "text", "style", "background",
    "this", "that",
)
BACKGROUND_FILLERS = {"in", "on", "at", "with", "a", "an", "the", "of", "background"}
EXCLUSIVE_CLAUSES = {"nothing else", "no other objects", "only these objects"}

_GENERATION_SPLIT = re.compile(r";")
_EDITING_SPLIT = re.compile(r";|\s+and\s+then\s+", re.IGNORECASE)
_FRAMING = re.compile(r"^(?:a|an)\s+(?:photo|picture|image|painting|drawing)\s+of\s+", re.IGNORECASE)
_BACKGROUND_TEXT = re.compile(r"[A-Za-z][\w\s,'-]*")
_RELATION_PATTERN = (
    r"(?:to\s+the\s+left\s+of|left[_\s]of|to\s+the\s+right\s+of|right[_\s]of|next[_\s]to|beside"
    r"|on\s+top\s+of|above|below|on)(?![\w])"
)


# --- Instruction Types ---

class Attachments(BaseModel):
    """References that travel with an instruction."""

    model_config = ConfigDict(frozen=True)

    source_scene: Optional[SceneGraph] = None
    source_ref: Optional[str] = None
    subject_refs: Tuple[str, ...] = ()
    condition_refs: Dict[str, str] = Field(default_factory=dict)


class TaskInstruction(BaseModel):
    model_config = ConfigDict(frozen=True)

    text: str = Field(min_length=1)
    kind_hint: Optional[TaskKind] = None
    attachments: Attachments = Attachments()

    @model_validator(mode="after")
    def _text_not_blank(self) -> "TaskInstruction":
        if not self.text.strip():
            raise ValueError("instruction text must not be blank")
        return self


class GenerationRequest(BaseModel):
    """The action of a generation node: the spec to realize plus what the user attached."""

    model_config = ConfigDict(frozen=True)

    prompt: str
    spec: SceneSpec
    subject_refs: Tuple[str, ...] = ()
    condition_refs: Dict[str, str] = Field(default_factory=dict)

    def describe(self) -> str:
        return f"generate: {self.spec.describe()}"


class Placement(BaseModel):
    """A relation the edited object must hold against its anchors."""

    model_config = ConfigDict(frozen=True)

    kind: RelationKind
    anchor: ObjectSelector


def _article(words: str) -> str:
    return "an" if words[:1].lower() in "aeiou" else "a"


def _selector_text(selector: ObjectSelector) -> str:
    text = f"the {selector.describe()}"
    if selector.object_id is not None:
        text += f" ({selector.object_id})"
    return text


def _box_text(bbox: BBox) -> str:
    return f"({bbox.x:g}, {bbox.y:g}, {bbox.w:g}, {bbox.h:g})"


class AtomicEdit(BaseModel):
    """One simple editing action. Exactly the fields its action needs are set."""

    model_config = ConfigDict(frozen=True)

    action: EditAction
    target: Optional[ObjectSelector] = None
    category: Optional[str] = None
    attrs: AttributeSet = AttributeSet()
    attribute: Optional[str] = None
    value: Optional[str] = None
    bbox: Optional[BBox] = None
    placement: Optional[Placement] = None
    style: Optional[str] = None
    text: Optional[str] = None

    @model_validator(mode="after")
    def _params_match_action(self) -> "AtomicEdit":
        needs = {
            "add": {"category"},
            "remove": {"target"},
            "replace": {"target", "category"},
            "edit_attribute": {"target", "attribute", "value"},
            "move": {"target"},
            "style": {"style"},
            "instruction_passthrough": {"text"},
        }[self.action]
        allowed = needs | {
            "add": {"attrs", "bbox", "placement"},
            "replace": {"attrs"},
            "move": {"bbox", "placement"},
        }.get(self.action, set())
        present = {
            name for name in ("target", "category", "attribute", "value", "bbox", "placement", "style", "text")
            if getattr(self, name) is not None
        }
        if self.attrs.constrained():
            present.add("attrs")
        if needs - present:
            raise ValueError(f"{self.action} needs {sorted(needs - present)}")
        if present - allowed:
            raise ValueError(f"{self.action} does not take {sorted(present - allowed)}")
        if self.bbox is not None and self.placement is not None:
            raise ValueError(f"{self.action} takes a box or a placement, not both")
        if self.action == "move" and self.bbox is None and self.placement is None:
            raise ValueError("move needs a destination box or a placement")
        if self.attribute is not None and self.attribute not in ATTRIBUTE_NAMES:
            raise ValueError(f"unknown attribute '{self.attribute}'")
        return self

    @property
    def new_object(self) -> str:
        """Category and attributes of the object an add/replace produces."""
        words = self.attrs.describe()
        return f"{words} {self.category}".strip()

    def describe(self) -> str:
        if self.action == "add":
            text = f"add {_article(self.new_object)} {self.new_object}"
            if self.placement is not None:
                text += f" {self.placement.kind} {_selector_text(self.placement.anchor)}"
            elif self.bbox is not None:
                text += f" at {_box_text(self.bbox)}"
            return text
        if self.action == "remove":
            return f"remove {_selector_text(self.target)}"
        if self.action == "replace":
            return f"replace {_selector_text(self.target)} with {_article(self.new_object)} {self.new_object}"
        if self.action == "edit_attribute":
            return f"edit the {self.attribute} of {_selector_text(self.target)} to {self.value}"
        if self.action == "move":
            if self.placement is not None:
                return f"move {_selector_text(self.target)} {self.placement.kind} {_selector_text(self.placement.anchor)}"
            return f"move {_selector_text(self.target)} to {_box_text(self.bbox)}"
        if self.action == "style":
            return f"apply style {self.style}"
        return self.text


# --- Grammar ---

@dataclass(frozen=True)
class _Clause:
    text: str
    offset: int


def _relation_kind(text: str) -> str:
    words = re.sub(r"[\s_]+", " ", text.lower())
    if "left" in words:
        return "left_of"
    if "right" in words:
        return "right_of"
    if "next" in words or "beside" in words:
        return "next_to"
    if "above" in words:
        return "above"
    if "below" in words:
        return "below"
    return "on"


class InstructionGrammar:
    """pyparsing productions for one attribute vocabulary."""

    def __init__(self, vocabulary: Vocabulary = DEFAULT_VOCABULARY):
        self.vocabulary = vocabulary
        ck = pp.CaselessKeyword

        attribute_tokens = [token for name in ATTRIBUTE_NAMES for token in vocabulary.values(name)]
        self.attr = pp.MatchFirst([ck(token) for token in attribute_tokens])
        self.rel = pp.Regex(_RELATION_PATTERN, flags=re.IGNORECASE)
        stop = pp.MatchFirst([ck(word) for word in STOP_WORDS])
        word = pp.Word(pp.alphas, pp.alphanums + "_-")
        self.noun = ~stop + ~self.rel + ~self.attr + word

        numeral = pp.Regex(r"\d+") | pp.MatchFirst([ck(w) for w in NUMBER_WORDS])
        determiner = pp.MatchFirst([ck(w) for w in ARTICLES + ("this", "that")])
        quant = (numeral | determiner)("quant")
        attrs = pp.Group(pp.ZeroOrMore(self.attr))("attrs")
        noun = pp.Group(pp.OneOrMore(self.noun))("noun")
        object_id = pp.Suppress("(") + pp.Word(pp.alphanums + "_-:.")("object_id") + pp.Suppress(")")
        number = pp.Regex(r"\d*\.?\d+")
        bbox = pp.Group(
            pp.Suppress("(") + number + pp.Suppress(",") + number + pp.Suppress(",")
            + number + pp.Suppress(",") + number + pp.Suppress(")")
        )

        # generation productions
        self.phrase = pp.Group(quant + attrs + noun)
        separator = (pp.Literal(",") + pp.Opt(ck("and"))) | ck("and")
        self.object_list = self.phrase + pp.ZeroOrMore(pp.Suppress(separator) + self.phrase)
        self.selector = pp.Group(pp.Opt(determiner) + attrs + noun + pp.Opt(object_id))
        self.relation_clause = (
            self.selector("subject") + pp.Opt(ck("is") | ck("are")) + self.rel("rel") + self.selector("anchor")
        )
        self.text_clause = pp.Opt(ck("with")) + pp.Opt(determiner) + ck("text") + pp.QuotedString('"')("text")

        # editing productions
        new_object = pp.Group(pp.Opt(quant) + attrs + noun)
        attribute_name = pp.MatchFirst([ck(name) for name in ATTRIBUTE_NAMES])
        value_word = pp.Word(pp.alphas, pp.alphanums + "_-")
        self.edit_add = (
            (ck("add") | ck("insert"))("verb") + new_object("object")
            + pp.Opt(self.rel("rel") + self.selector("anchor") | ck("at") + bbox("bbox"))
        )
        self.edit_remove = (ck("remove") | ck("delete") | ck("erase"))("verb") + self.selector("target")
        self.edit_replace = ck("replace")("verb") + self.selector("target") + ck("with") + new_object("object")
        self.edit_attribute_named = (
            (ck("edit") | ck("change") | ck("set"))("verb") + pp.Opt(ck("the")) + attribute_name("attribute")
            + ck("of") + self.selector("target") + ck("to") + value_word("value")
        )
        self.edit_attribute_inferred = (
            (ck("change") | ck("turn") | ck("paint") | ck("make") | ck("color"))("verb")
            + self.selector("target") + pp.Opt(ck("to") | ck("into")) + self.attr("value")
        )
        self.edit_move = (
            (ck("move") | ck("drag") | ck("place") | ck("put"))("verb") + self.selector("target")
            + (self.rel("rel") + self.selector("anchor") | ck("to") + bbox("bbox"))
        )
        self.edit_style_token = (ck("apply") | ck("use"))("verb") + ck("style") + pp.Regex(r"\S+")("token")
        self.edit_style_named = (
            (ck("apply") | ck("use"))("verb") + pp.Opt(ck("the")) + pp.Group(pp.OneOrMore(~ck("style") + word))("words")
            + ck("style")
        )
        self.edit_background = (
            (ck("change") | ck("set"))("verb") + pp.Opt(ck("the")) + ck("background") + ck("to")
            + pp.Opt(pp.MatchFirst([ck(w) for w in ARTICLES])) + pp.Group(pp.OneOrMore(word))("words")
        )


_DEFAULT_GRAMMAR: Optional[InstructionGrammar] = None


def default_grammar() -> InstructionGrammar:
    global _DEFAULT_GRAMMAR
    if _DEFAULT_GRAMMAR is None:
        _DEFAULT_GRAMMAR = InstructionGrammar()
    return _DEFAULT_GRAMMAR


def split_clauses(text: str, editing: bool = False) -> List[_Clause]:
    """Splits on ';' (and 'and then' when editing), tracking each clause's offset."""
    if not text.strip():
        raise ParseError("instruction is empty", 0)
    pattern = _EDITING_SPLIT if editing else _GENERATION_SPLIT
    clauses: List[_Clause] = []
    start = 0
    for match in list(pattern.finditer(text)) + [None]:
        end = match.start() if match else len(text)
        raw = text[start:end]
        lead = len(raw) - len(raw.lstrip())
        body = raw.strip()
        if body.endswith("."):
            body = body[:-1].rstrip()
        if not body:
            raise ParseError("empty clause", start + lead)
        clauses.append(_Clause(body, start + lead))
        start = match.end() if match else len(text)
    return clauses


def _attributes(tokens: Sequence[str], vocabulary: Vocabulary, position: int) -> AttributeSet:
    values: Dict[str, str] = {}
    for token in tokens:
        token = token.lower()
        name = vocabulary.attribute_of(token)
        if name in values and values[name] != token:
            raise ParseError(f"conflicting {name} values '{values[name]}' and '{token}'", position)
        values[name] = token
    return AttributeSet(**values)


def _count(quant: Optional[str]) -> int:
    if quant is None:
        return 1
    quant = quant.lower()
    if quant.isdigit():
        return int(quant)
    return NUMBER_WORDS.get(quant, 1)


def _category(nouns: Sequence[str], count: int, vocabulary: Vocabulary) -> str:
    words = [noun.lower() for noun in nouns]
    if count > 1:
        words[-1] = vocabulary.singular(words[-1])
    return "_".join(words)


def _selector(group: pp.ParseResults, vocabulary: Vocabulary, position: int) -> ObjectSelector:
    return ObjectSelector(
        category=_category(group.get("noun", []), 1, vocabulary),
        attrs=_attributes(group.get("attrs", []), vocabulary, position),
        object_id=group.get("object_id"),
    )


def _bbox(group: pp.ParseResults, position: int) -> BBox:
    try:
        return BBox(**dict(zip("xywh", (float(v) for v in group))))
    except ValidationError as e:
        raise ParseError(f"invalid box: {e.errors()[0]['msg']}", position) from e


def _parse(expr: pp.ParserElement, clause: _Clause) -> Optional[pp.ParseResults]:
    try:
        return expr.parse_string(clause.text, parse_all=True)
    except pp.ParseBaseException:
        return None


# --- Classification ---

def classify_task(instr: TaskInstruction) -> TaskKind:
    """Editing iff a source scene or image is attached; an explicit hint always wins."""
    if instr.kind_hint is not None:
        return instr.kind_hint
    attachments = instr.attachments
    if attachments.source_scene is not None or attachments.source_ref is not None:
        return "editing"
    return "generation"


# --- Generation ---

def _background_token(clause: _Clause) -> str:
    if not _BACKGROUND_TEXT.fullmatch(clause.text):
        bad = next(
            (i for i, ch in enumerate(clause.text) if not (ch.isalnum() or ch in " ,'-_")), 0
        )
        raise ParseError(f"cannot read clause '{clause.text}'", clause.offset + bad)
    words = re.findall(r"[A-Za-z0-9][\w'-]*", clause.text.lower())
    while words and words[0] in BACKGROUND_FILLERS:
        words.pop(0)
    if words[:2] == ["style", "of"] and len(words) > 2:
        return "style:" + "_".join(words[2:])
    if len(words) >= 2 and words[-1] == "style":
        return "style:" + "_".join(words[:-1])
    if not words:
        raise ParseError(f"clause '{clause.text}' names nothing", clause.offset)
    return "_".join(words)


def decompose_generation(prompt: str, grammar: Optional[InstructionGrammar] = None) -> SceneSpec:
    """Parses a generation prompt into a SceneSpec."""
    grammar = grammar or default_grammar()
    vocabulary = grammar.vocabulary
    clauses = split_clauses(prompt, editing=False)
    first = clauses[0]
    framing = _FRAMING.match(first.text)
    if framing:
        clauses[0] = _Clause(first.text[framing.end():], first.offset + framing.end())

    entries: List[Tuple[str, AttributeSet, int]] = []
    relation_phrases: List[Tuple[str, ObjectSelector, ObjectSelector, _Clause]] = []
    background: List[str] = []
    forbid_extraneous = False

    for clause in clauses:
        if clause.text.lower() in EXCLUSIVE_CLAUSES:
            forbid_extraneous = True
            continue
        parsed = _parse(grammar.text_clause, clause)
        if parsed is not None:
            background.append(f"text:{parsed['text']}")
            continue
        parsed = _parse(grammar.relation_clause, clause)
        if parsed is not None:
            subject = _selector(parsed["subject"], vocabulary, clause.offset)
            anchor = _selector(parsed["anchor"], vocabulary, clause.offset)
            relation_phrases.append((_relation_kind(parsed["rel"]), subject, anchor, clause))
            continue
        starts_quantified = re.match(r"(\d+|[A-Za-z]+)\b", clause.text)
        head = starts_quantified.group(1).lower() if starts_quantified else ""
        if head.isdigit() or head in NUMBER_WORDS or head in ARTICLES:
            try:
                phrases = grammar.object_list.parse_string(clause.text, parse_all=True)
            except pp.ParseBaseException as e:
                raise ParseError(f"cannot read object list '{clause.text}'", clause.offset + e.loc) from e
            for phrase in phrases:
                count = _count(phrase.get("quant"))
                if count < 1:
                    raise ParseError("object count must be at least 1", clause.offset)
                attrs = _attributes(phrase.get("attrs", []), vocabulary, clause.offset)
                entries.append((_category(phrase.get("noun", []), count, vocabulary), attrs, count))
            continue
        background.append(_background_token(clause))

    grouped: Dict[Tuple[str, AttributeSet], int] = {}
    for category, attrs, count in entries:
        grouped[(category, attrs)] = grouped.get((category, attrs), 0) + count
    required = [RequiredObject(category=c, attrs=a, count=n) for (c, a), n in grouped.items()]

    relations: List[Relation] = []
    for kind, subject, anchor, clause in relation_phrases:
        for side in (subject, anchor):
            if not any(entry.accepts(side) for entry in required):
                required.append(RequiredObject(category=side.category, attrs=side.attrs, count=1))
        try:
            relations.append(Relation(kind=kind, subject=subject, object=anchor))
        except ValidationError as e:
            raise ParseError(f"invalid relation in '{clause.text}'", clause.offset) from e

    if not required:
        raise ParseError("prompt names no objects", 0)
    try:
        spec = SceneSpec(
            required=tuple(required),
            relations=tuple(relations),
            background=tuple(dict.fromkeys(background)),
            forbid_extraneous=forbid_extraneous,
        )
    except ValidationError as e:
        raise ParseError(f"inconsistent prompt: {e.errors()[0]['msg']}", 0) from e
    logger.info(f"DECOMPOSER [Generation]: '{prompt}' -> {spec.describe()}")
    return spec


# --- Editing ---

def _edit_from_clause(clause: _Clause, grammar: InstructionGrammar) -> AtomicEdit:
    vocabulary = grammar.vocabulary
    at = clause.offset

    parsed = _parse(grammar.edit_add, clause)
    if parsed is not None:
        obj = parsed["object"]
        placement = bbox = None
        if "rel" in parsed:
            placement = Placement(kind=_relation_kind(parsed["rel"]), anchor=_selector(parsed["anchor"], vocabulary, at))
        elif "bbox" in parsed:
            bbox = _bbox(parsed["bbox"], at)
        return AtomicEdit(
            action="add",
            category=_category(obj.get("noun", []), 1, vocabulary),
            attrs=_attributes(obj.get("attrs", []), vocabulary, at),
            placement=placement,
            bbox=bbox,
        )

    parsed = _parse(grammar.edit_remove, clause)
    if parsed is not None:
        return AtomicEdit(action="remove", target=_selector(parsed["target"], vocabulary, at))

    parsed = _parse(grammar.edit_replace, clause)
    if parsed is not None:
        obj = parsed["object"]
        return AtomicEdit(
            action="replace",
            target=_selector(parsed["target"], vocabulary, at),
            category=_category(obj.get("noun", []), 1, vocabulary),
            attrs=_attributes(obj.get("attrs", []), vocabulary, at),
        )

    parsed = _parse(grammar.edit_attribute_named, clause)
    if parsed is not None:
        return AtomicEdit(
            action="edit_attribute",
            target=_selector(parsed["target"], vocabulary, at),
            attribute=parsed["attribute"].lower(),
            value=parsed["value"].lower(),
        )

    parsed = _parse(grammar.edit_background, clause)
    if parsed is not None:
        return AtomicEdit(action="style", style="_".join(w.lower() for w in parsed["words"]))

    parsed = _parse(grammar.edit_attribute_inferred, clause)
    if parsed is not None:
        value = parsed["value"].lower()
        return AtomicEdit(
            action="edit_attribute",
            target=_selector(parsed["target"], vocabulary, at),
            attribute=vocabulary.attribute_of(value),
            value=value,
        )

    parsed = _parse(grammar.edit_move, clause)
    if parsed is not None:
        target = _selector(parsed["target"], vocabulary, at)
        if "rel" in parsed:
            anchor = _selector(parsed["anchor"], vocabulary, at)
            return AtomicEdit(action="move", target=target, placement=Placement(kind=_relation_kind(parsed["rel"]), anchor=anchor))
        return AtomicEdit(action="move", target=target, bbox=_bbox(parsed["bbox"], at))

    parsed = _parse(grammar.edit_style_token, clause)
    if parsed is not None:
        return AtomicEdit(action="style", style=parsed["token"])

    parsed = _parse(grammar.edit_style_named, clause)
    if parsed is not None:
        return AtomicEdit(action="style", style="style:" + "_".join(w.lower() for w in parsed["words"]))

    return AtomicEdit(action="instruction_passthrough", text=clause.text)


def decompose_editing(
    instr: Union[TaskInstruction, str], grammar: Optional[InstructionGrammar] = None
) -> List[AtomicEdit]:
    """One AtomicEdit per clause, in textual order. Unreadable clauses pass through verbatim."""
    grammar = grammar or default_grammar()
    text = instr.text if isinstance(instr, TaskInstruction) else instr
    edits: List[AtomicEdit] = []
    for clause in split_clauses(text, editing=True):
        try:
            edit = _edit_from_clause(clause, grammar)
        except ValidationError as e:
            raise ParseError(f"invalid edit '{clause.text}': {e.errors()[0]['msg']}", clause.offset) from e
        if edit.action == "instruction_passthrough":
            logger.warning(f"DECOMPOSER [Passthrough]: no edit grammar matches '{clause.text}'")
        edits.append(edit)
    logger.info(f"DECOMPOSER [Editing]: {len(edits)} edit(s) from '{text}'")
    return edits


# --- Correction ---

# side of the boxes given to objects added by a joint placement, then the smaller fallback
JOINT_ADD_SIZES = ((0.2, 0.2), (0.1, 0.1))


def _entry_components(spec: SceneSpec) -> List[int]:
    """Component id per required entry, joining the two sides of every relation."""
    parent = list(range(len(spec.required)))

    def root(i: int) -> int:
        while parent[i] != i:
            i = parent[i]
        return i

    for _, s, o in spec_links(spec):
        parent[root(s)] = root(o)
    return [root(i) for i in range(len(spec.required))]


def _arrange_component(
    report: DiscrepancyReport, entries: Sequence[int], arranger: Arranger, avoid: Dict[str, BBox]
) -> Tuple[List[AtomicEdit], List[AtomicEdit]]:
    """Adds and moves with explicit boxes that satisfy every relation among `entries` at once."""
    spec = report.spec
    keys: List[List[str]] = [[] for _ in spec.required]
    fresh: List[Tuple[int, str]] = []
    for i in entries:
        keys[i] = [obj.id for obj in report.bound[i]]
        for k in range(spec.required[i].count - len(report.bound[i])):
            keys[i].append(f"{i}+{k}")
            fresh.append((i, keys[i][-1]))

    n = math.ceil(math.sqrt(len(fresh))) if fresh else 1
    side, _ = JOINT_ADD_SIZES[0]
    pieces = [
        Piece(key, BBox.centered((j % n + 0.5) / n, (j // n + 0.5) / n, side, side), group=i, sizes=JOINT_ADD_SIZES)
        for j, (i, key) in enumerate(fresh)
    ]
    offenders = {sid for v in report.relation_violations for sid in v.subject_ids}
    present = [(i, obj) for i in entries for obj in report.bound[i]]
    present.sort(key=lambda item: item[1].id not in offenders)
    pieces += [Piece(obj.id, obj.bbox, group=i) for i, obj in present]

    links = [link for link in spec_links(spec) if link[1] in entries]
    boxes = arranger.solve(pieces, spec_clauses(spec, keys), links, {p.key: p.box for p in pieces}, avoid)

    adds = [
        AtomicEdit(action="add", category=spec.required[i].category, attrs=spec.required[i].attrs, bbox=boxes[key])
        for i, key in fresh
    ]
    moves = [
        AtomicEdit(
            action="move", target=ObjectSelector(category=obj.category, object_id=obj.id), bbox=boxes[obj.id]
        )
        for _, obj in present if boxes[obj.id] != obj.bbox
    ]
    return adds, moves


def _joint_edits(report: DiscrepancyReport, rules: SceneRules) -> Tuple[List[AtomicEdit], List[AtomicEdit], Set[int]]:
    """Joint placements for every component of two or more relations with a violation; the
    entries they cover are left out of the one-relation-at-a-time path."""
    spec = report.spec
    if spec is None or not report.relation_violations:
        return [], [], set()
    component = _entry_components(spec)
    sizes = Counter(component[s] for _, s, _ in spec_links(spec))
    violated = sorted({component[spec.entry_index(v.relation.subject)] for v in report.relation_violations})
    avoid = {obj.id: obj.bbox for objs in report.bound for obj in objs}
    arranger = Arranger(rules)

    adds: List[AtomicEdit] = []
    moves: List[AtomicEdit] = []
    joint: Set[int] = set()
    for root in violated:
        if sizes[root] < 2:
            continue
        entries = [i for i, c in enumerate(component) if c == root]
        try:
            found_adds, found_moves = _arrange_component(report, entries, arranger, avoid)
        except PlacementInfeasible as e:
            logger.warning(f"DECOMPOSER [Joint Placement]: {e}; placing one relation at a time")
            continue
        adds += found_adds
        moves += found_moves
        joint.update(entries)
    return adds, moves, joint


def discrepancies_to_edits(report: DiscrepancyReport, rules: SceneRules = DEFAULT_RULES) -> List[AtomicEdit]:
    """Correction edits for a report: removes, attribute edits, adds, moves, then styles.

    Objects tied together by two or more relations are placed jointly: their adds and moves carry
    explicit boxes satisfying every one of those relations. Everything else is placed one
    relation at a time, against whatever anchors exist when the edit runs.
    """
    edits: List[AtomicEdit] = []

    for ref in report.extraneous:
        edits.append(AtomicEdit(action="remove", target=ObjectSelector(category=ref.category, object_id=ref.object_id)))

    for mismatch in report.wrong_attribute:
        edits.append(AtomicEdit(
            action="edit_attribute",
            target=ObjectSelector(category=mismatch.category, object_id=mismatch.object_id),
            attribute=mismatch.attribute,
            value=mismatch.wanted,
        ))

    joint_adds, joint_moves, joint = _joint_edits(report, rules)
    missing, violations = report.missing, report.relation_violations
    if joint:
        spec = report.spec
        short = [i for i, entry in enumerate(spec.required) if len(report.bound[i]) < entry.count]
        missing = tuple(m for i, m in zip(short, report.missing) if i not in joint)
        violations = tuple(v for v in violations if spec.entry_index(v.relation.subject) not in joint)

    plain: List[AtomicEdit] = []
    placed: List[Tuple[AtomicEdit, RequiredObject]] = []
    for missing_entry in missing:
        entry = RequiredObject(category=missing_entry.category, attrs=missing_entry.attrs, count=missing_entry.deficit)
        violation = next((v for v in violations if entry.accepts(v.relation.subject)), None)
        for _ in range(missing_entry.deficit):
            if violation is None:
                plain.append(AtomicEdit(action="add", category=missing_entry.category, attrs=missing_entry.attrs))
            else:
                relation = violation.relation
                edit = AtomicEdit(
                    action="add",
                    category=missing_entry.category,
                    attrs=missing_entry.attrs,
                    placement=Placement(kind=relation.kind, anchor=relation.object),
                )
                placed.append((edit, entry))
    edits.extend(plain)
    edits.extend(joint_adds)

    # placement adds whose anchor is itself still being placed go after it
    pending = list(placed)
    while pending:
        ready = [
            item for item in pending
            if not any(other[1].accepts(item[0].placement.anchor) for other in pending if other is not item)
        ]
        chosen = ready[0] if ready else pending[0]
        edits.append(chosen[0])
        pending.remove(chosen)

    edits.extend(joint_moves)
    moved: Set[str] = set()
    for violation in violations:
        relation = violation.relation
        for subject_id in violation.subject_ids:
            if subject_id in moved:
                continue
            moved.add(subject_id)
            edits.append(AtomicEdit(
                action="move",
                target=ObjectSelector(category=relation.subject.category, object_id=subject_id),
                placement=Placement(kind=relation.kind, anchor=relation.object),
            ))

    for token in report.background_mismatch:
        edits.append(AtomicEdit(action="style", style=token))

    return edits


# --- External decomposition payloads ---

def decomposition_from_payload(payload: Dict[str, Any], kind: TaskKind) -> Union[SceneSpec, List[AtomicEdit]]:
    """Validates an endpoint or LLM decomposition answer against the grammar's output schema."""
    try:
        if kind == "generation":
            return SceneSpec.model_validate(payload["spec"])
        return [AtomicEdit.model_validate(item) for item in payload["edits"]]
    except (KeyError, TypeError, ValidationError) as e:
        raise EndpointError(f"decomposition answer does not match the {kind} schema: {e}") from e


def decomposition_payload(result: Union[SceneSpec, Sequence[AtomicEdit]]) -> Dict[str, Any]:
    if isinstance(result, SceneSpec):
        return {"kind": "generation", "spec": result.model_dump(mode="json")}
    return {"kind": "editing", "edits": [edit.model_dump(mode="json") for edit in result]}
