import json
import unittest
from unittest.mock import Mock, patch

from canvas_manager.config import AppConfig
from canvas_manager.errors import EndpointError
from canvas_manager.sub_agents.runner import ask_agent
from canvas_manager.sub_agents.scene_planner_agent import LlmDecomposer
from canvas_manager.sub_agents.tool_selector_agent import LlmToolSelector
from canvas_manager.tools.decomposer import (
    GenerationRequest,
    TaskInstruction,
    decompose_generation,
    decomposition_payload,
)
from canvas_manager.tools.position_pipeline import PositionPipeline, SelectionContext
from canvas_manager.tools.scene_model import SceneGraph

REGISTRY = AppConfig().build_registry()
PROMPT = "a black bicycle, a blue scooter and a bird"


class TestLlmToolSelector(unittest.TestCase):

    def setUp(self):
        self.spec = decompose_generation(PROMPT)
        self.request = GenerationRequest(prompt=PROMPT, spec=self.spec)
        self.ranked = [REGISTRY.get(name) for name in ("LMD", "BoxDiff", "SDXL")]
        self.ctx = SelectionContext(instruction=PROMPT, spec=self.spec)

    def selector(self, answer=None, error=None):
        ask = Mock(return_value=answer, side_effect=error)
        return LlmToolSelector(REGISTRY, PositionPipeline(), agent=Mock(), ask=ask), ask

    def test_choice_moves_to_the_front(self):
        selector, ask = self.selector('{"tool_name": "SDXL", "input": {}}')
        ordered = selector.order(self.request, self.ranked, self.ctx, SceneGraph())
        self.assertEqual([t.name for t in ordered], ["SDXL", "LMD", "BoxDiff"])
        prompt = ask.call_args[0][1]
        self.assertIn("BoxDiff", prompt)

    def test_guardrail_failures_keep_the_ranking(self):
        for answer, error in (('{"tool_name": "LaMa"}', None), ("no idea", None), (None, EndpointError("down"))):
            with self.subTest(answer=answer, error=error):
                selector, _ = self.selector(answer, error)
                self.assertEqual(selector.order(self.request, self.ranked, self.ctx, SceneGraph()), self.ranked)

    def test_single_candidate_skips_the_agent(self):
        selector, ask = self.selector("unused")
        self.assertEqual(selector.order(self.request, self.ranked[:1], self.ctx, SceneGraph()), self.ranked[:1])
        ask.assert_not_called()


class TestLlmDecomposer(unittest.TestCase):

    def test_valid_plan_is_accepted(self):
        payload = decomposition_payload(decompose_generation(PROMPT))
        ask = Mock(return_value="Here is the plan: " + json.dumps(payload))
        spec = LlmDecomposer(agent=Mock(), ask=ask).decompose(TaskInstruction(text=PROMPT), "generation")
        self.assertEqual(spec, decompose_generation(PROMPT))
        self.assertIn("Task kind: generation", ask.call_args[0][1])

    def test_bad_plans_raise(self):
        editing = json.dumps({"kind": "editing", "edits": []})
        for answer in ("no plan", "{broken", editing):
            with self.subTest(answer=answer):
                decomposer = LlmDecomposer(agent=Mock(), ask=Mock(return_value=answer))
                with self.assertRaises(EndpointError):
                    decomposer.decompose(TaskInstruction(text=PROMPT), "generation")


class TestRunner(unittest.TestCase):

    @patch("canvas_manager.sub_agents.runner.ask_agent_async")
    def test_failures_surface_as_endpoint_errors(self, mock_ask):
        agent = Mock()
        agent.name = "tool_selector"
        mock_ask.side_effect = RuntimeError("quota")
        with self.assertRaises(EndpointError):
            ask_agent(agent, "hello")

    @patch("canvas_manager.sub_agents.runner.asyncio.run")
    def test_blank_answers_are_errors(self, mock_run):
        agent = Mock()
        agent.name = "scene_planner"
        mock_run.return_value = "   "
        with self.assertRaises(EndpointError):
            ask_agent(agent, "hello")
        mock_run.return_value = "ok"
        self.assertEqual(ask_agent(agent, "hello"), "ok")


if __name__ == "__main__":
    unittest.main()
