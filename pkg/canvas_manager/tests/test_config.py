import os
import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch

from canvas_manager.config import (
    DEFAULT_CONFIG_PATH,
    AppConfig,
    config_hash,
    endpoint_token,
    load_config,
    validate_config,
)
from canvas_manager.errors import ConfigError


def write(tmp, name, text):
    path = Path(tmp) / name
    path.write_text(text, encoding="utf-8")
    return path


class TestLoadConfig(unittest.TestCase):

    def test_packaged_default_matches_the_model_defaults(self):
        config = load_config(DEFAULT_CONFIG_PATH)
        self.assertEqual(config_hash(config), config_hash(AppConfig()))
        self.assertEqual(Path(config.base_dir), DEFAULT_CONFIG_PATH.parent.resolve())
        self.assertEqual(len(config.build_registry()), 19)

    def test_environment_names_the_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write(tmp, "job.yaml", "world: {seed: 42}\nbudget: {max_branching: 3}\n")
            with patch.dict(os.environ, {"CANVASX_CONFIG": str(path)}):
                config = load_config()
        self.assertEqual(config.world.seed, 42)
        self.assertEqual(config.budget.max_branching, 3)
        self.assertEqual(config.budget.max_nodes, 32)

    def test_invalid_files(self):
        cases = {
            "broken.yaml": "world: [unclosed",
            "list.yaml": "- 1\n- 2\n",
            "values.yaml": "budget: {max_nodes: 0}\n",
            "endpoints.yaml": "endpoints: {mode: endpoints}\n",
            "weights.yaml": "world: {default: {weights: {noop: 0.5}}}\n",
        }
        with tempfile.TemporaryDirectory() as tmp:
            for name, text in cases.items():
                with self.subTest(file=name):
                    with self.assertRaises(ConfigError):
                        load_config(write(tmp, name, text))
            with self.assertRaises(ConfigError):
                load_config(Path(tmp) / "absent.yaml")

    def test_registry_resolves_next_to_the_config(self):
        with tempfile.TemporaryDirectory() as tmp:
            write(tmp, "tools.yaml", (
                "tools:\n"
                "  - {skill: remove, name: Eraser, required_inputs: [{name: object_bbox, kind: bbox}],"
                " characteristics: Erases a box., cost: 0.1}\n"
            ))
            config = load_config(write(tmp, "config.yaml", "registry: tools.yaml\n"))
            self.assertEqual([t.name for t in config.build_registry()], ["Eraser"])
        with self.assertRaises(ConfigError):
            AppConfig(registry="nowhere.yaml").build_registry()


class TestConfigModel(unittest.TestCase):

    def test_overrides_merge_nested_sections(self):
        config = AppConfig().with_overrides(world={"seed": 9}, planning={"mode": "chain"})
        self.assertEqual(config.world.seed, 9)
        self.assertEqual(config.world.p_attr, 1.0)
        self.assertEqual(config.planning.mode, "chain")
        with self.assertRaises(ConfigError):
            AppConfig().with_overrides(planning={"mode": "forest"})

    def test_hash_tracks_behaviour_only(self):
        base = AppConfig()
        self.assertEqual(config_hash(base), config_hash(base.model_copy(update={"base_dir": "/elsewhere"})))
        self.assertNotEqual(config_hash(base), config_hash(base.with_overrides(world={"seed": 1})))
        self.assertEqual(len(config_hash(base)), 64)

    def test_validate_config_accepts_empty_documents(self):
        self.assertEqual(validate_config({}), AppConfig())

    def test_endpoint_token_comes_from_the_environment(self):
        with patch.dict(os.environ, {"CANVASX_ENDPOINT_TOKEN": "t0ken"}):
            self.assertEqual(endpoint_token(), "t0ken")


if __name__ == "__main__":
    unittest.main()
