import itertools
import unittest
from unittest.mock import Mock

from hypothesis import given, settings

from canvas_manager.config import DATA_DIR
from canvas_manager.errors import AdapterError, CompensationFailed, EndpointError, MalformedSelection, PlacementInfeasible
from canvas_manager.tests.strategies import DIRECTIONAL, forest_specs, scene_specs
from canvas_manager.tools.decomposer import GenerationRequest, decompose_editing, decompose_generation
from canvas_manager.tools.position_pipeline import (
    Detection,
    DetectionConfig,
    PositionPipeline,
    SelectionContext,
    match_detections,
)
from canvas_manager.tools.scene_model import (
    AttributeSet,
    BBox,
    ObjectSelector,
    Relation,
    RequiredObject,
    SceneGraph,
    SceneObject,
    SceneSpec,
    holds_against,
    pair_holds,
)
from canvas_manager.tools.tool_registry import MISSING, Selection, draft_selection, load_registry

REGISTRY = load_registry(DATA_DIR / "tool_library.yaml")


def det(name, x, y, w=0.2, h=0.2, object_id=None, confidence=1.0, color=None):
    return Detection(
        name=name, bbox=BBox(x=x, y=y, w=w, h=h), confidence=confidence,
        object_id=object_id, attrs=AttributeSet(color=color),
    )


def layout_holds(spec, layout):
    for relation in spec.relations:
        s, o = spec.entry_index(relation.subject), spec.entry_index(relation.object)
        for su in range(spec.required[s].count):
            anchors = [layout[f"{o}.{ou}"] for ou in range(spec.required[o].count) if (s, su) != (o, ou)]
            if anchors and not holds_against(relation.kind, layout[f"{s}.{su}"], anchors):
                return False
    return True


class TestDetection(unittest.TestCase):

    def setUp(self):
        self.graph = SceneGraph(objects=(
            SceneObject(id="cat_0", category="cat", attrs=AttributeSet(color="red"), bbox=BBox(x=0.1, y=0.1, w=0.2, h=0.2)),
            SceneObject(id="dog_0", category="dog", bbox=BBox(x=0.5, y=0.5, w=0.2, h=0.2)),
        ))

    def test_exact_detection_without_noise(self):
        found = PositionPipeline().detect_objects(self.graph)
        self.assertEqual([(d.name, d.object_id, d.confidence) for d in found], [("cat", "cat_0", 1.0), ("dog", "dog_0", 1.0)])
        self.assertEqual(found[0].bbox, self.graph.objects[0].bbox)
        self.assertEqual(found[0].attrs.color, "red")

    def test_noisy_detection_is_seeded(self):
        pipeline = PositionPipeline(detection=DetectionConfig(sigma=0.02), seed=3)
        first, second = pipeline.detect_objects(self.graph), pipeline.detect_objects(self.graph)
        self.assertEqual(first, second)
        for d in first:
            self.assertGreaterEqual(d.confidence, 0.01)
            self.assertLessEqual(d.confidence, 1.0)

    def test_endpoint_detection(self):
        client = Mock()
        client.call_skill.return_value = [{"name": "cat", "bbox": {"x": 0.1, "y": 0.1, "w": 0.2, "h": 0.2}}]
        found = PositionPipeline(client=client).detect_objects(self.graph)
        self.assertEqual(found[0].name, "cat")
        client.call_skill.assert_called_once_with("aux.detect", {}, self.graph)

    def test_endpoint_failures_become_endpoint_errors(self):
        client = Mock()
        client.call_skill.return_value = [{"name": ""}]
        with self.assertRaises(EndpointError):
            PositionPipeline(client=client).detect_objects(self.graph)
        client.call_skill.side_effect = AdapterError("timeout", "detector too slow")
        with self.assertRaises(EndpointError):
            PositionPipeline(client=client).detect_objects(self.graph)

    def test_match_detections(self):
        detections = [
            det("cat", 0.1, 0.1, object_id="cat_0", confidence=0.6),
            det("cat", 0.5, 0.1, object_id="cat_1", confidence=0.9, color="blue"),
            det("dog", 0.5, 0.5, object_id="dog_0"),
        ]
        by_confidence = match_detections(ObjectSelector(category="cat"), detections)
        self.assertEqual([d.object_id for d in by_confidence], ["cat_1", "cat_0"])
        pinned = match_detections(ObjectSelector(category="cat", object_id="cat_0"), detections)
        self.assertEqual([d.object_id for d in pinned], ["cat_0"])
        colored = match_detections(ObjectSelector(category="cat", attrs=AttributeSet(color="blue")), detections)
        self.assertEqual([d.object_id for d in colored], ["cat_1"])
        self.assertEqual(match_detections(ObjectSelector(category="cat"), detections, exclude="cat_1")[0].object_id, "cat_0")


class TestPlacement(unittest.TestCase):

    def setUp(self):
        self.pipeline = PositionPipeline()

    def test_free_box_avoids_occupied_space(self):
        first = self.pipeline.free_box([])
        self.assertEqual((first.x, first.y), (0.0, 0.0))
        beside = self.pipeline.free_box([BBox(x=0.0, y=0.0, w=0.2, h=0.2)])
        self.assertAlmostEqual(beside.x, 0.2)
        self.assertAlmostEqual(beside.y, 0.0)

    def test_left_of_with_room(self):
        anchor = BBox(x=0.5, y=0.4, w=0.2, h=0.2)
        placed = self.pipeline.place_relative("left_of", [anchor])
        self.assertAlmostEqual(placed.x, 0.25)
        self.assertAlmostEqual(placed.y, 0.4)
        self.assertTrue(pair_holds("left_of", placed, anchor))

    def test_left_of_at_the_canvas_edge_shrinks(self):
        anchor = BBox(x=0.0, y=0.4, w=0.2, h=0.2)
        placed = self.pipeline.place_relative("left_of", [anchor])
        self.assertAlmostEqual(placed.w, 0.1)
        self.assertTrue(pair_holds("left_of", placed, anchor))

    def test_every_kind_holds_against_a_central_anchor(self):
        anchor = BBox(x=0.4, y=0.4, w=0.2, h=0.2)
        for kind in ("left_of", "right_of", "above", "below", "next_to", "on"):
            with self.subTest(kind=kind):
                self.assertTrue(pair_holds(kind, self.pipeline.place_relative(kind, [anchor]), anchor))

    def test_on_rests_on_the_top_edge(self):
        table = BBox(x=0.3, y=0.5, w=0.4, h=0.2)
        placed = self.pipeline.place_relative("on", [table])
        self.assertAlmostEqual(placed.bottom, 0.5)
        self.assertAlmostEqual(placed.cx, table.cx)

    def test_infeasible_placements(self):
        with self.assertRaises(PlacementInfeasible):
            self.pipeline.place_relative("left_of", [])
        with self.assertRaises(PlacementInfeasible):
            self.pipeline.place_relative("on", [BBox(x=0.1, y=0.5, w=0.2, h=0.2), BBox(x=0.6, y=0.5, w=0.2, h=0.2)])
        with self.assertRaises(PlacementInfeasible):
            self.pipeline.place_relative("next_to", [BBox(x=0.0, y=0.0, w=0.1, h=0.1), BBox(x=0.8, y=0.8, w=0.2, h=0.2)])


class TestConditions(unittest.TestCase):

    def test_tokens_follow_the_source(self):
        pipeline = PositionPipeline()
        token = pipeline.extract_condition("canny", "img://a")
        self.assertEqual(token, PositionPipeline(seed=9).extract_condition("canny", "img://a"))
        self.assertTrue(token.startswith("canny:"))
        self.assertNotEqual(token, pipeline.extract_condition("canny", "img://b"))
        self.assertNotEqual(token, pipeline.extract_condition("depth", "img://a"))

    def test_no_source(self):
        with self.assertRaises(CompensationFailed) as caught:
            PositionPipeline().extract_condition("pose", None)
        self.assertEqual(caught.exception.slot, "pose")

    def test_endpoint_tokens(self):
        client = Mock()
        client.call_skill.return_value = "pose:remote"
        self.assertEqual(PositionPipeline(client=client).extract_condition("pose", "img://a"), "pose:remote")
        client.call_skill.assert_called_once_with("aux.condition.pose", {"source": "img://a"}, None)
        client.call_skill.return_value = {"not": "a token"}
        with self.assertRaises(EndpointError):
            PositionPipeline(client=client).extract_condition("pose", "img://a")


KINDS = DIRECTIONAL + ("next_to", "on")
# (subject, anchor) entry pairs of two relations over three entries
SHAPES = {
    "shared subject": ((0, 1), (0, 2)),
    "shared anchor": ((1, 0), (2, 0)),
    "chain": ((0, 1), (1, 2)),
    "reversed chain": ((2, 1), (1, 0)),
}


def three_entry_spec(shape, kinds, counts=(1, 1, 1)):
    required = tuple(RequiredObject(category=c, count=n) for c, n in zip(("cat", "dog", "bird"), counts))
    relations = tuple(
        Relation(
            kind=kind,
            subject=ObjectSelector(category=required[s].category),
            object=ObjectSelector(category=required[o].category),
        )
        for kind, (s, o) in zip(kinds, SHAPES[shape])
    )
    return SceneSpec(required=required, relations=relations)


class TestLayout(unittest.TestCase):

    def setUp(self):
        self.pipeline = PositionPipeline()

    def test_layout_has_one_box_per_unit(self):
        spec = decompose_generation("two white sheep and a goat; the goat is right of the sheep; in a grassland")
        layout = self.pipeline.generate_layout(spec)
        self.assertEqual(sorted(layout), ["0.0", "0.1", "1.0"])
        self.assertTrue(layout_holds(spec, layout))

    def test_stacked_and_chained_relations(self):
        spec = decompose_generation(
            "a cup, a book and a table; the cup is on the book; the book is on the table; a lamp; the lamp is left of the table"
        )
        self.assertTrue(layout_holds(spec, self.pipeline.generate_layout(spec)))

    def test_contradictory_relations(self):
        spec = decompose_generation("a cat and a dog; the cat is left of the dog; the dog is left of the cat")
        with self.assertRaises(PlacementInfeasible):
            self.pipeline.generate_layout(spec)

    def test_mutual_stacking_is_contradictory(self):
        spec = decompose_generation("a cat and a dog; the cat is on the dog; the dog is on the cat")
        with self.assertRaises(PlacementInfeasible):
            self.pipeline.generate_layout(spec)

    def test_sitting_on_one_of_two_objects(self):
        spec = decompose_generation("a cup and two tables; the cup is on the table")
        self.assertTrue(layout_holds(spec, self.pipeline.generate_layout(spec)))

    def test_relations_sharing_an_object(self):
        for text in (
            "a cat, a dog and a bird; the cat is next to the dog; the cat is next to the bird",
            "a cat, a dog and a bird; the cat is left of the dog; the cat is next to the bird",
            "a cat, a dog and a bird; the cat is on the dog; the dog is next to the bird",
        ):
            with self.subTest(text=text):
                spec = decompose_generation(text)
                self.assertTrue(layout_holds(spec, self.pipeline.generate_layout(spec)))

    def test_every_pair_of_relations_over_three_objects(self):
        for shape in SHAPES:
            for kinds in itertools.product(KINDS, repeat=2):
                with self.subTest(shape=shape, kinds=kinds):
                    spec = three_entry_spec(shape, kinds)
                    layout = self.pipeline.generate_layout(spec)
                    self.assertEqual(len(layout), 3)
                    self.assertTrue(layout_holds(spec, layout))

    def test_pairs_of_relations_with_two_of_each_object(self):
        for shape in SHAPES:
            for kinds in itertools.product(KINDS, repeat=2):
                with self.subTest(shape=shape, kinds=kinds):
                    spec = three_entry_spec(shape, kinds, counts=(2, 2, 1))
                    self.assertTrue(layout_holds(spec, self.pipeline.generate_layout(spec)))

    @settings(max_examples=1000, deadline=None)
    @given(forest_specs())
    def test_acyclic_relations_always_lay_out(self, spec):
        self.assertTrue(layout_holds(spec, self.pipeline.generate_layout(spec)))

    @settings(max_examples=1000, deadline=None)
    @given(scene_specs())
    def test_layout_holds_or_is_infeasible(self, spec):
        try:
            layout = self.pipeline.generate_layout(spec)
        except PlacementInfeasible:
            return
        self.assertTrue(layout_holds(spec, layout))


class TestCompensation(unittest.TestCase):

    def setUp(self):
        self.pipeline = PositionPipeline()

    def context(self, action, tool, detections=(), **extra):
        return SelectionContext(
            instruction=action.describe(), candidates=(REGISTRY.get(tool),), detections=tuple(detections),
            edit=action if not isinstance(action, GenerationRequest) else None,
            request=action if isinstance(action, GenerationRequest) else None, **extra,
        )

    def test_add_is_placed_relative_to_every_anchor(self):
        action = decompose_editing("add a goat to the right of the sheep")[0]
        sheep = [det("sheep", 0.1, 0.4, object_id="sheep_0"), det("sheep", 0.4, 0.4, object_id="sheep_1")]
        ctx = self.context(action, "AnyDoor", sheep)
        sel = self.pipeline.compensate_inputs(draft_selection(REGISTRY.get("AnyDoor"), action), ctx)
        placed = BBox(**sel.inputs["object_bbox"])
        self.assertEqual(sel.inputs["object_name"], "goat")
        self.assertTrue(all(pair_holds("right_of", placed, d.bbox) for d in sheep))

    def test_move_binds_source_and_destination(self):
        action = decompose_editing("move the cat to the left of the dog")[0]
        detections = [det("cat", 0.6, 0.4, object_id="cat_0"), det("dog", 0.3, 0.4, object_id="dog_0")]
        ctx = self.context(action, "DragonDiffusion", detections)
        sel = self.pipeline.compensate_inputs(draft_selection(REGISTRY.get("DragonDiffusion"), action), ctx)
        self.assertEqual(BBox(**sel.inputs["object_bbox"]), detections[0].bbox)
        self.assertTrue(pair_holds("left_of", BBox(**sel.inputs["destination_bbox"]), detections[1].bbox))

    def test_unlocatable_target(self):
        action = decompose_editing("remove the bird")[0]
        with self.assertRaises(CompensationFailed) as caught:
            self.pipeline.compensate_inputs(
                draft_selection(REGISTRY.get("LaMa"), action), self.context(action, "LaMa", [det("cat", 0.1, 0.1)])
            )
        self.assertEqual(caught.exception.slot, "object_bbox")

    def test_layout_slot(self):
        prompt = "a black bicycle, a blue scooter and a bird"
        action = GenerationRequest(prompt=prompt, spec=decompose_generation(prompt))
        sel = self.pipeline.compensate_inputs(draft_selection(REGISTRY.get("LMD"), action), self.context(action, "LMD"))
        self.assertEqual(sorted(sel.inputs["layout"]), ["0.0", "1.0", "2.0"])
        self.assertEqual(sel.inputs["prompt"], prompt)

    def test_condition_slot(self):
        prompt = "a house"
        action = GenerationRequest(prompt=prompt, spec=decompose_generation(prompt), condition_refs={"canny": "img://ref"})
        draft = draft_selection(REGISTRY.get("ControlNet-Canny"), action)
        ctx = self.context(action, "ControlNet-Canny", condition_refs={"canny": "img://ref"})
        token = self.pipeline.compensate_inputs(draft, ctx).inputs["canny"]
        self.assertRegex(token, r"^canny:[0-9a-f]{16}$")
        self.assertEqual(self.pipeline.compensate_inputs(draft, ctx).inputs["canny"], token)
        with self.assertRaises(CompensationFailed):
            self.pipeline.compensate_inputs(draft, self.context(action, "ControlNet-Canny"))

    def test_complete_selection_is_untouched(self):
        sel = Selection(tool_name="SDXL", inputs={"prompt": "a bird"})
        self.assertIs(self.pipeline.compensate_inputs(sel, SelectionContext(instruction="a bird")), sel)

    def test_selection_outside_the_candidates(self):
        sel = Selection(tool_name="LaMa", inputs={"object_bbox": MISSING})
        with self.assertRaises(MalformedSelection):
            self.pipeline.compensate_inputs(sel, SelectionContext(instruction="remove the cat"))


if __name__ == "__main__":
    unittest.main()
