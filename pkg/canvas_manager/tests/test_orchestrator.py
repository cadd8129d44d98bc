import json
import tempfile
import unittest
from pathlib import Path

from canvas_manager.config import AppConfig, config_hash
from canvas_manager.errors import ConfigError
from canvas_manager.services.orchestrator import (
    JobRequest,
    OutputPaths,
    build_engine,
    job_from_header,
    job_header,
    plan_job,
    replay_trace,
    run_job,
    run_jobs,
)
from canvas_manager.services.trace import read_trace
from canvas_manager.tools.decomposer import Attachments, TaskInstruction
from canvas_manager.tools.scene_model import AttributeSet, BBox, SceneGraph, SceneObject

FIXTURES = Path(__file__).parent / "fixtures"

PARTIAL_PROMPT = "a black bicycle, a blue scooter and a bird"
SHEEP_PROMPT = "two white sheep and a goat; the goat is right of the sheep; in a grassland"


def thing(object_id, category, x, color=None):
    return SceneObject(
        id=object_id, category=category, attrs=AttributeSet(color=color), bbox=BBox(x=x, y=0.4, w=0.2, h=0.2)
    )


def graph_json(*objects, background=()):
    return SceneGraph(objects=objects, background=background).model_dump(mode="json")


def scripted(script, branching):
    return AppConfig().with_overrides(
        world={"mode": "scripted", "script": script}, budget={"max_branching": branching}
    )


def partial_generation_job(**outputs):
    config = scripted({"root.0": {"state": graph_json(thing("scooter_0", "scooter", 0.4, "red"))}}, 2)
    return JobRequest(instruction=TaskInstruction(text=PARTIAL_PROMPT), config=config, outputs=OutputPaths(**outputs))


def relation_correction_job():
    config = scripted({
        "root.0": {"state": graph_json(
            thing("sheep_0", "sheep", 0.1, "white"), thing("sheep_1", "sheep", 0.4, "black"), background=("grassland",)
        )},
        "root.0.0": {"outcome": "noop"},
        "root.0.1": {"outcome": "shrink"},
    }, 3)
    return JobRequest(instruction=TaskInstruction(text=SHEEP_PROMPT), config=config)


def golden(name):
    lines = (FIXTURES / name).read_text(encoding="utf-8").splitlines()
    return [json.loads(line) for line in lines if line.strip()]


def stochastic_job(seed, text=SHEEP_PROMPT, job_id="job"):
    config = AppConfig().with_overrides(world={"seed": seed, "default": {"p_success": 0.6}, "p_attr": 0.7})
    return JobRequest(instruction=TaskInstruction(text=text), config=config, job_id=job_id)


class TestGoldenTraversals(unittest.TestCase):

    def test_partial_generation_is_corrected_in_place(self):
        outcome = run_job(partial_generation_job())
        self.assertEqual(outcome.trace, golden("partial_generation.jsonl"))
        self.assertTrue(outcome.success)
        self.assertEqual(
            sorted(o.describe() for o in outcome.state.objects), ["bird", "black bicycle", "blue scooter"]
        )

    def test_failed_attribute_edits_fall_back_to_remove_and_add(self):
        outcome = run_job(relation_correction_job())
        self.assertEqual(outcome.trace, golden("relation_correction.jsonl"))
        self.assertEqual(outcome.best_node, "root.0.2.0.0")
        goat = next(o for o in outcome.state.objects if o.category == "goat")
        sheep = [o for o in outcome.state.objects if o.category == "sheep"]
        self.assertTrue(all(o.attrs.color == "white" for o in sheep))
        self.assertTrue(all(goat.bbox.cx > s.bbox.cx for s in sheep))

    def test_listeners_see_every_event(self):
        seen = []
        outcome = run_job(partial_generation_job(), listeners=[seen.append])
        self.assertEqual(seen, outcome.trace)


class TestJobs(unittest.TestCase):

    def test_plan_job_classifies_by_attachment(self):
        engine = build_engine(AppConfig())
        scene = SceneGraph(objects=(thing("cat_0", "cat", 0.1),))
        editing = JobRequest(instruction=TaskInstruction(
            text="remove the cat", attachments=Attachments(source_scene=scene)
        ))
        tree = plan_job(editing, engine)
        self.assertEqual(tree.kind, "editing")
        self.assertEqual(tree.root.state, scene)
        generation = plan_job(JobRequest(instruction=TaskInstruction(text="a cat")), engine)
        self.assertEqual(generation.kind, "generation")
        self.assertEqual(generation.spec.required[0].category, "cat")

    def test_same_seed_gives_identical_traces(self):
        first = run_job(stochastic_job(seed=7))
        second = run_job(stochastic_job(seed=7))
        self.assertEqual(first.trace, second.trace)
        self.assertEqual(first.state, second.state)

    def test_parallel_jobs_keep_request_order(self):
        requests = [stochastic_job(seed, job_id=f"job-{seed}") for seed in range(4)]
        sequential = [run_job(req) for req in requests]
        parallel = run_jobs(requests, workers=3)
        self.assertEqual([o.trace for o in parallel], [o.trace for o in sequential])

    def test_outputs_are_written(self):
        with tempfile.TemporaryDirectory() as tmp:
            trace_path = Path(tmp) / "out" / "trace.jsonl"
            outcome_path = Path(tmp) / "out" / "outcome.json"
            outcome = run_job(partial_generation_job(trace=str(trace_path), outcome=str(outcome_path)))
            header, events = read_trace(trace_path)
            self.assertEqual(header.schema_version, 1)
            self.assertEqual(header.seed, 0)
            self.assertEqual(events, outcome.trace)
            written = json.loads(outcome_path.read_text(encoding="utf-8"))
            self.assertNotIn("trace", written)
            self.assertEqual(written["best_node"], "root.0.0.0.0")


class TestReplay(unittest.TestCase):

    def test_header_round_trips_the_job(self):
        req = partial_generation_job()
        header = job_header(req)
        self.assertEqual(header.config_hash, config_hash(req.config))
        again = job_from_header(header)
        self.assertEqual(again.instruction, req.instruction)
        self.assertEqual(config_hash(again.config), header.config_hash)

    def test_replay_reproduces_the_trace(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "trace.jsonl"
            job = stochastic_job(seed=3)
            run_job(job.model_copy(update={"outputs": OutputPaths(trace=str(path))}))
            outcome, identical = replay_trace(path)
            self.assertTrue(identical)
            self.assertEqual(outcome.trace[-1]["event"], "outcome")

    def test_tampered_trace_is_not_identical(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "trace.jsonl"
            run_job(partial_generation_job(trace=str(path)))
            lines = path.read_text(encoding="utf-8").splitlines()
            path.write_text("\n".join(lines[:-1]) + "\n", encoding="utf-8")
            _, identical = replay_trace(path)
            self.assertFalse(identical)

    def test_unreadable_traces(self):
        with tempfile.TemporaryDirectory() as tmp:
            empty = Path(tmp) / "empty.jsonl"
            empty.write_text("", encoding="utf-8")
            broken = Path(tmp) / "broken.jsonl"
            broken.write_text('{"seed": "x"}\n', encoding="utf-8")
            for path in (empty, broken, Path(tmp) / "missing.jsonl"):
                with self.subTest(path=path.name):
                    with self.assertRaises(ConfigError):
                        read_trace(path)


if __name__ == "__main__":
    unittest.main()
