"""Hypothesis strategies shared by the property tests."""

from hypothesis import strategies as st

from canvas_manager.tools.scene_model import (
    AttributeSet,
    BBox,
    ObjectSelector,
    Relation,
    RequiredObject,
    SceneGraph,
    SceneObject,
    SceneSpec,
)

CATEGORIES = ("cat", "dog", "bird", "car")
COLORS = ("red", "blue", "green")
DIRECTIONAL = ("left_of", "right_of", "above", "below")

coords = st.floats(min_value=0.0, max_value=0.8, allow_nan=False)
sizes = st.floats(min_value=0.05, max_value=0.2, allow_nan=False)
boxes = st.builds(BBox.clamped, coords, coords, sizes, sizes)
colors = st.one_of(st.none(), st.sampled_from(COLORS))


@st.composite
def scene_graphs(draw, max_objects: int = 5) -> SceneGraph:
    graph = SceneGraph(background=tuple(draw(st.lists(st.sampled_from(("grassland", "beach")), max_size=1))))
    for _ in range(draw(st.integers(min_value=0, max_value=max_objects))):
        category = draw(st.sampled_from(CATEGORIES))
        graph = graph.adding(SceneObject(
            id=graph.next_id(category),
            category=category,
            attrs=AttributeSet(color=draw(colors)),
            bbox=draw(boxes),
        ))
    return graph


def _entries(draw, max_entries: int, max_count: int, max_units: int):
    categories = draw(st.lists(st.sampled_from(CATEGORIES), min_size=1, max_size=max_entries, unique=True))
    required = []
    for k, category in enumerate(categories):
        room = max_units - sum(entry.count for entry in required) - (len(categories) - k - 1)
        required.append(RequiredObject(
            category=category,
            attrs=AttributeSet(color=draw(colors)),
            count=draw(st.integers(min_value=1, max_value=max(1, min(max_count, room)))),
        ))
    return tuple(required)


def _relation(kind: str, subject: RequiredObject, anchor: RequiredObject) -> Relation:
    return Relation(
        kind=kind,
        subject=ObjectSelector(category=subject.category, attrs=subject.attrs),
        object=ObjectSelector(category=anchor.category, attrs=anchor.attrs),
    )


def _finish(draw, required, relations) -> SceneSpec:
    background = tuple(draw(st.lists(st.sampled_from(("grassland", "beach")), max_size=1)))
    return SceneSpec(
        required=required, relations=tuple(relations), background=background, forbid_extraneous=draw(st.booleans())
    )


@st.composite
def scene_specs(
    draw, max_entries: int = 4, max_count: int = 2, max_relations: int = 3, kinds=DIRECTIONAL + ("next_to", "on")
) -> SceneSpec:
    """Specs with one entry per category, so every relation selector resolves. Relations join
    distinct entries, may share subjects and anchors, and may contradict each other."""
    required = _entries(draw, max_entries, max_count, max_units=2 * max_entries)
    pairs = [(s, o) for s in range(len(required)) for o in range(len(required)) if s != o]
    chosen = draw(st.lists(st.sampled_from(pairs), max_size=max_relations, unique=True)) if pairs else []
    relations = [_relation(draw(st.sampled_from(kinds)), required[s], required[o]) for s, o in chosen]
    return _finish(draw, required, relations)


@st.composite
def forest_specs(
    draw, max_entries: int = 4, max_count: int = 2, max_units: int = 5, kinds=DIRECTIONAL + ("next_to", "on")
) -> SceneSpec:
    """Specs whose relations form a forest over the entries: every entry after the first is
    related to at most one earlier entry, in either direction. Such specs are always satisfiable."""
    required = _entries(draw, max_entries, max_count, max_units)
    relations = []
    for j in range(1, len(required)):
        if not draw(st.booleans()):
            continue
        i = draw(st.integers(min_value=0, max_value=j - 1))
        s, o = (i, j) if draw(st.booleans()) else (j, i)
        relations.append(_relation(draw(st.sampled_from(kinds)), required[s], required[o]))
    return _finish(draw, required, relations)


@st.composite
def spread_scene_graphs(draw, max_objects: int = 4) -> SceneGraph:
    """Scene graphs whose objects sit in separate columns, so no two boxes overlap."""
    graph = SceneGraph()
    for column in range(draw(st.integers(min_value=0, max_value=max_objects))):
        category = draw(st.sampled_from(CATEGORIES))
        x = 0.25 * column + draw(st.floats(min_value=0.0, max_value=0.04, allow_nan=False))
        graph = graph.adding(SceneObject(
            id=graph.next_id(category),
            category=category,
            attrs=AttributeSet(color=draw(colors)),
            bbox=BBox.clamped(x, draw(coords), draw(sizes), draw(sizes)),
        ))
    return graph
