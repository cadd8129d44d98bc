import unittest
from unittest.mock import Mock

from hypothesis import assume, given, settings, strategies as st

from canvas_manager.errors import AdapterError, EndpointError
from canvas_manager.tests.strategies import scene_graphs, scene_specs
from canvas_manager.tools.decomposer import AtomicEdit, Placement, decompose_editing, decompose_generation
from canvas_manager.tools.scene_model import AttributeSet, BBox, ObjectSelector, SceneGraph, SceneObject, diff
from canvas_manager.tools.verifier import EndpointVerifier, Verdict, Verifier, VerifierConfig


def scene():
    return SceneGraph(objects=(
        SceneObject(id="scooter_0", category="scooter", attrs=AttributeSet(color="red"), bbox=BBox(x=0.1, y=0.4, w=0.2, h=0.2)),
        SceneObject(id="bird_0", category="bird", bbox=BBox(x=0.6, y=0.1, w=0.2, h=0.2)),
    ))


def edit(text):
    return decompose_editing(text)[0]


class TestVerifySpec(unittest.TestCase):

    def setUp(self):
        self.verifier = Verifier()

    def test_partial_result_fails_with_its_score(self):
        verdict = self.verifier.verify_spec(scene(), decompose_generation("a black bicycle, a blue scooter and a bird"))
        self.assertFalse(verdict.passed)
        self.assertAlmostEqual(verdict.score, 0.4)
        self.assertEqual(verdict.failed_aspects(), ["objects", "attributes"])

    def test_satisfied_spec_passes(self):
        verdict = self.verifier.verify_spec(scene(), decompose_generation("a red scooter and a bird"))
        self.assertTrue(verdict.passed)
        self.assertEqual(verdict.score, 1.0)
        self.assertEqual(verdict.failed_aspects(), [])

    def test_verdict_serializes_pass(self):
        dumped = Verdict(passed=True, score=1.0).model_dump(mode="json")
        self.assertIs(dumped["pass"], True)
        self.assertFalse(Verdict.model_validate({"pass": False, "score": 0.5}).passed)


class TestVerifyEdit(unittest.TestCase):

    def setUp(self):
        self.verifier = Verifier()
        self.before = scene()

    def test_add_with_placement(self):
        cat = SceneObject(id="cat_0", category="cat", bbox=BBox(x=0.35, y=0.1, w=0.2, h=0.2))
        verdict = self.verifier.verify_edit(self.before, self.before.adding(cat), edit("add a cat to the left of the bird"))
        self.assertTrue(verdict.passed)
        self.assertEqual(verdict.score, 1.0)

    def test_placement_against_several_anchors(self):
        dogs = SceneGraph(objects=(
            SceneObject(id="dog_0", category="dog", bbox=BBox(x=0.1, y=0.6, w=0.2, h=0.2)),
            SceneObject(id="dog_1", category="dog", bbox=BBox(x=0.6, y=0.6, w=0.2, h=0.2)),
        ))
        between = SceneObject(id="cat_0", category="cat", bbox=BBox(x=0.6, y=0.4, w=0.2, h=0.2))
        on_one = AtomicEdit(action="add", category="cat", placement=Placement(kind="on", anchor=ObjectSelector(category="dog")))
        left_of_all = AtomicEdit(
            action="add", category="cat", placement=Placement(kind="left_of", anchor=ObjectSelector(category="dog"))
        )
        self.assertTrue(self.verifier.verify_edit(dogs, dogs.adding(between), on_one).passed)
        verdict = self.verifier.verify_edit(dogs, dogs.adding(between), left_of_all)
        self.assertEqual(verdict.failed_aspects(), ["relations"])

    def test_add_in_the_wrong_place(self):
        cat = SceneObject(id="cat_0", category="cat", bbox=BBox(x=0.75, y=0.5, w=0.2, h=0.2))
        verdict = self.verifier.verify_edit(self.before, self.before.adding(cat), edit("add a cat to the left of the bird"))
        self.assertFalse(verdict.passed)
        self.assertEqual(verdict.failed_aspects(), ["relations"])

    def test_add_that_did_nothing(self):
        verdict = self.verifier.verify_edit(self.before, self.before, edit("add a cat"))
        self.assertFalse(verdict.passed)
        self.assertIn("objects", verdict.failed_aspects())

    def test_shrunken_result_is_implausible(self):
        cat = SceneObject(id="cat_0", category="cat", bbox=BBox(x=0.5, y=0.5, w=0.06, h=0.06))
        verdict = self.verifier.verify_edit(self.before, self.before.adding(cat), edit("add a cat"))
        self.assertEqual(verdict.failed_aspects(), ["positions"])

    def test_collateral_change_fails(self):
        bird = self.before.get("bird_0")
        after = self.before.replacing("bird_0", bird.model_copy(update={"attrs": AttributeSet(color="green")}))
        after = after.removing("scooter_0")
        verdict = self.verifier.verify_edit(self.before, after, edit("remove the scooter"))
        self.assertFalse(verdict.passed)
        self.assertEqual(verdict.failed_aspects(), ["objects"])

    def test_remove(self):
        self.assertTrue(self.verifier.verify_edit(self.before, self.before.removing("scooter_0"), edit("remove the scooter")).passed)
        self.assertFalse(self.verifier.verify_edit(self.before, self.before, edit("remove the scooter")).passed)

    def test_attribute_edit_in_place(self):
        scooter = self.before.get("scooter_0")
        after = self.before.replacing("scooter_0", scooter.model_copy(update={"attrs": AttributeSet(color="blue")}))
        self.assertTrue(self.verifier.verify_edit(self.before, after, edit("make the scooter blue")).passed)
        self.assertFalse(self.verifier.verify_edit(self.before, self.before, edit("make the scooter blue")).passed)

    def test_attribute_edit_through_replacement_is_tracked(self):
        scooter = self.before.get("scooter_0")
        swapped = SceneObject(id="scooter_1", category="scooter", attrs=AttributeSet(color="blue"), bbox=scooter.bbox)
        after = self.before.replacing("scooter_0", swapped)
        self.assertTrue(self.verifier.verify_edit(self.before, after, edit("make the scooter blue")).passed)

    def test_move(self):
        bird = self.before.get("bird_0")
        moved = self.before.replacing("bird_0", bird.model_copy(update={"bbox": BBox(x=0.0, y=0.1, w=0.05, h=0.2)}))
        verdict = self.verifier.verify_edit(self.before, moved, edit("move the bird to the left of the scooter"))
        self.assertEqual(verdict.failed_aspects(), ["positions"])

        placed = self.before.replacing("bird_0", bird.model_copy(update={"bbox": BBox(x=0.0, y=0.1, w=0.2, h=0.2)}))
        self.assertTrue(self.verifier.verify_edit(self.before, placed, edit("move the bird to the left of the scooter")).passed)
        self.assertFalse(self.verifier.verify_edit(self.before, self.before, edit("move the bird to the left of the scooter")).passed)
        right = placed
        self.assertTrue(self.verifier.verify_edit(self.before, right, edit("move the bird to (0, 0.1, 0.2, 0.2)")).passed)

    def test_style(self):
        styled = self.before.with_background(["style:watercolor"])
        self.assertTrue(self.verifier.verify_edit(self.before, styled, edit("apply the watercolor style")).passed)
        self.assertFalse(self.verifier.verify_edit(self.before, self.before, edit("apply the watercolor style")).passed)

    def test_passthrough_is_not_checked(self):
        verdict = self.verifier.verify_edit(self.before, self.before, edit("make it look like autumn"))
        self.assertTrue(verdict.passed)
        self.assertEqual(verdict.score, 1.0)


class TestVerifierProperties(unittest.TestCase):

    @settings(max_examples=1000, deadline=None)
    @given(scene_graphs(), scene_specs())
    def test_spec_verdict_agrees_with_the_diff(self, graph, spec):
        verdict = Verifier().verify_spec(graph, spec)
        report = diff(graph, spec)
        self.assertEqual(verdict.passed, report.is_empty)
        self.assertEqual(verdict.score, report.score)

    @settings(max_examples=1000, deadline=None)
    @given(scene_graphs(max_objects=4), st.data())
    def test_removal_passes_only_while_bystanders_stay_put(self, graph, data):
        assume(len(graph.objects) >= 2)
        target, bystander = data.draw(st.permutations(graph.objects))[:2]
        removal = AtomicEdit(action="remove", target=ObjectSelector(category=target.category, object_id=target.id))
        after = graph.removing(target.id)
        self.assertTrue(Verifier().verify_edit(graph, after, removal).passed)

        recolored = bystander.attrs.with_value("color", "purple")
        disturbed = after.replacing(bystander.id, bystander.model_copy(update={"attrs": recolored}))
        verdict = Verifier().verify_edit(graph, disturbed, removal)
        self.assertFalse(verdict.passed)
        self.assertIn("objects", verdict.failed_aspects())

    @settings(max_examples=1000, deadline=None)
    @given(
        scene_graphs(max_objects=3),
        st.floats(min_value=0.0, max_value=0.1, allow_nan=False),
        st.floats(min_value=0.0, max_value=0.05, allow_nan=False),
        st.floats(min_value=0.0, max_value=0.05, allow_nan=False),
    )
    def test_looser_tolerance_never_rejects_more(self, graph, miss, tight, extra):
        assume(graph.objects)
        obj = graph.objects[0]
        wanted = BBox.clamped(0.8 - obj.bbox.x, obj.bbox.y, obj.bbox.w, obj.bbox.h)
        landed = BBox.clamped(wanted.x + miss, wanted.y, wanted.w, wanted.h)
        move = AtomicEdit(action="move", target=ObjectSelector(category=obj.category, object_id=obj.id), bbox=wanted)
        after = graph.replacing(obj.id, obj.model_copy(update={"bbox": landed}))
        strict = Verifier(VerifierConfig(drift_tolerance=tight)).verify_edit(graph, after, move)
        loose = Verifier(VerifierConfig(drift_tolerance=tight + extra)).verify_edit(graph, after, move)
        if strict.passed:
            self.assertTrue(loose.passed)
        self.assertGreaterEqual(loose.score, strict.score)


class TestEndpointVerifier(unittest.TestCase):

    def test_judge_answer_is_the_verdict(self):
        client = Mock()
        client.call_skill.return_value = {"pass": False, "score": 0.4}
        verdict = EndpointVerifier(client).verify_spec(scene(), decompose_generation("a bird"))
        self.assertFalse(verdict.passed)
        self.assertEqual(verdict.score, 0.4)
        skill, inputs, state = client.call_skill.call_args.args
        self.assertEqual((skill, inputs["mode"]), ("aux.verify", "spec"))
        self.assertEqual(state, scene())

    def test_judge_failures(self):
        client = Mock()
        client.call_skill.return_value = {"score": 2.0}
        with self.assertRaises(EndpointError):
            EndpointVerifier(client).verify_edit(scene(), scene(), edit("remove the bird"))
        client.call_skill.side_effect = AdapterError("transport", "connection refused")
        with self.assertRaises(EndpointError):
            EndpointVerifier(client).verify_spec(scene(), decompose_generation("a bird"))


if __name__ == "__main__":
    unittest.main()
