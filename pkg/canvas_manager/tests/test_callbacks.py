import json
import unittest
from unittest.mock import Mock

from google.adk.models import LlmResponse
from google.genai import types

from canvas_manager.callbacks import after_model_callback, after_tool_callback, guard_selection, log_trace_event
from canvas_manager.config import AppConfig

REGISTRY = AppConfig().build_registry()


def reply(text):
    return LlmResponse(content=types.Content(role="model", parts=[types.Part(text=text)]))


def tool_named(name):
    tool = Mock()
    tool.name = name
    return tool


class TestGuardSelection(unittest.TestCase):

    def setUp(self):
        self.candidates = [REGISTRY.get("LMD"), REGISTRY.get("BoxDiff")]

    def test_accepts_an_offered_tool(self):
        selection = guard_selection('{"tool_name": "BoxDiff", "input": {"prompt": "a cat"}}', REGISTRY, self.candidates)
        self.assertEqual(selection.tool_name, "BoxDiff")
        self.assertEqual(selection.inputs["layout"], "<MISSING>")

    def test_rejects_what_was_not_offered(self):
        with self.assertLogs("canvas_manager.callbacks", level="CRITICAL"):
            self.assertIsNone(guard_selection('{"tool_name": "SDXL"}', REGISTRY, self.candidates))

    def test_rejects_unparseable_answers(self):
        for answer in ("I would pick LMD", '{"tool_name": "Teleporter"}'):
            with self.subTest(answer=answer):
                self.assertIsNone(guard_selection(answer, REGISTRY, self.candidates))


class TestAfterToolCallback(unittest.TestCase):

    def setUp(self):
        self.context = Mock()
        self.context.state = {}

    def test_stores_the_job_outcome(self):
        payload = json.dumps({"success": False, "best_score": 0.6, "best_node": "root.0.1", "objects": []})
        self.assertIsNone(after_tool_callback(tool_named("run_generation_job"), {}, self.context, {"result": payload}))
        self.assertEqual(self.context.state["last_outcome"], {"success": False, "best_score": 0.6, "best_node": "root.0.1"})

    def test_stores_job_errors(self):
        after_tool_callback(tool_named("run_editing_job"), {}, self.context, json.dumps({"error": "bad scene"}))
        self.assertEqual(self.context.state["last_job_error"], "bad scene")
        self.assertNotIn("last_outcome", self.context.state)

    def test_ignores_other_tools_and_garbage(self):
        after_tool_callback(tool_named("list_tools"), {}, self.context, "[]")
        with self.assertLogs("canvas_manager.callbacks", level="ERROR"):
            after_tool_callback(tool_named("run_generation_job"), {}, self.context, "not json")
        self.assertEqual(self.context.state, {})


class TestAfterModelCallback(unittest.TestCase):

    def context(self, outcome):
        context = Mock()
        context.state = {"last_outcome": outcome} if outcome is not None else {}
        return context

    def test_false_success_claim_is_replaced(self):
        outcome = {"success": False, "best_score": 0.6, "best_node": "root.0.1"}
        replaced = after_model_callback(self.context(outcome), reply("Great news, the job succeeded!"))
        text = replaced.content.parts[0].text
        self.assertTrue(text.startswith("The job did not succeed."))
        self.assertIn("root.0.1", text)

    def test_honest_replies_pass_through(self):
        outcome = {"success": False, "best_score": 0.6, "best_node": "root.0.1"}
        self.assertIsNone(after_model_callback(self.context(outcome), reply("The job failed; the goat is missing.")))
        self.assertIsNone(after_model_callback(self.context(None), reply("The job succeeded.")))

    def test_understated_success_only_warns(self):
        outcome = {"success": True, "best_score": 1.0, "best_node": "root.0"}
        with self.assertLogs("canvas_manager.callbacks", level="WARNING"):
            self.assertIsNone(after_model_callback(self.context(outcome), reply("It failed, sorry.")))


class TestTraceLogging(unittest.TestCase):

    def test_events_become_tagged_log_lines(self):
        events = [
            {"event": "execute", "node": "root.0", "tool": "LMD", "verdict": "fail", "score": 0.2},
            {"event": "switch", "from": "root.0", "to": "root.1"},
            {"event": "budget", "nodes_executed": 32},
        ]
        with self.assertLogs("canvas_manager.callbacks", level="INFO") as logs:
            for event in events:
                log_trace_event(event)
        self.assertIn("TRAVERSAL [Node Executed]: root.0 LMD -> fail score=0.2000", logs.output[0])
        self.assertIn("TRAVERSAL [Tool Switch]: root.0 -> root.1", logs.output[1])
        self.assertTrue(logs.output[2].startswith("WARNING"))


if __name__ == "__main__":
    unittest.main()
