####################################################################################################
####################  CanvasX | Application Configuration       ####################################
####################  Developed by: DatSciX                     ####################################
####################################################################################################

"""
Configuration settings for the CanvasX application.
All behaviour lives in one YAML config file (registry, world, budget, thresholds, models).
Environment variables, typically defined in a .env file, carry only the config path and the
endpoint credential.
"""

import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

import yaml
from dotenv import load_dotenv
from google.adk.models.lite_llm import LiteLlm
from pydantic import BaseModel, ConfigDict, Field, SecretStr, ValidationError, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from .errors import ConfigError
from .services.planning_tree import Budget, PlanningConfig
from .tools.position_pipeline import DetectionConfig, LayoutConfig
from .tools.scene_model import SceneRules
from .tools.sim_world import WorldConfig
from .tools.tool_registry import ToolRegistry, load_registry
from .tools.verifier import VerifierConfig

logger = logging.getLogger(__name__)

DATA_DIR = Path(__file__).parent / "data"
DEFAULT_CONFIG_PATH = DATA_DIR / "default_config.yaml"
DEFAULT_TOOL_LIBRARY = "tool_library.yaml"
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

# LLM Model Configuration:
CANVAS_MANAGER_GEMINI_FLASH = "gemini-2.5-flash-preview-05-20"
CANVAS_MANAGER_LOCAL = "ollama_chat/llama3.2:3b"


class EnvSettings(BaseSettings):
    """Environment: the config path and the endpoint credential, nothing else."""

    model_config = SettingsConfigDict(env_prefix="CANVASX_", env_file=".env", extra="ignore")

    config: Optional[str] = None
    endpoint_token: Optional[SecretStr] = None


class EndpointsConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    mode: Literal["sim", "endpoints"] = "sim"
    tools_url: Optional[str] = None
    aux_url: Optional[str] = None
    judge_url: Optional[str] = None
    decomposer_url: Optional[str] = None
    timeout: float = Field(default=30.0, gt=0)

    @model_validator(mode="after")
    def _tools_reachable(self) -> "EndpointsConfig":
        if self.mode == "endpoints" and not self.tools_url:
            raise ValueError("endpoint mode needs endpoints.tools_url")
        return self


class ModelsConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    selector: str = CANVAS_MANAGER_GEMINI_FLASH
    planner: str = CANVAS_MANAGER_GEMINI_FLASH
    chat: str = CANVAS_MANAGER_GEMINI_FLASH
    temperature: float = Field(default=0.25, ge=0.0, le=2.0)
    use_llm_selector: bool = False
    use_llm_decomposer: bool = False


class AppConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    registry: Union[str, List[Dict[str, Any]]] = DEFAULT_TOOL_LIBRARY
    world: WorldConfig = WorldConfig()
    budget: Budget = Budget()
    scene: SceneRules = SceneRules()
    verifier: VerifierConfig = VerifierConfig()
    layout: LayoutConfig = LayoutConfig()
    detection: DetectionConfig = DetectionConfig()
    planning: PlanningConfig = PlanningConfig()
    endpoints: EndpointsConfig = EndpointsConfig()
    models: ModelsConfig = ModelsConfig()
    workers: int = Field(default=1, ge=1)
    # directory relative registry paths resolve against
    base_dir: Optional[str] = None

    def with_overrides(self, **sections: Any) -> "AppConfig":
        """Copy with whole sections or nested fields replaced, re-validated."""
        merged = self.model_dump(mode="json")
        for key, value in sections.items():
            if isinstance(value, BaseModel):
                value = value.model_dump(mode="json")
            if isinstance(value, dict) and isinstance(merged.get(key), dict):
                merged[key] = {**merged[key], **value}
            else:
                merged[key] = value
        return validate_config(merged)

    def build_registry(self) -> ToolRegistry:
        if not isinstance(self.registry, str):
            return load_registry(self.registry)
        candidates = [Path(self.registry)]
        if self.base_dir:
            candidates.insert(0, Path(self.base_dir) / self.registry)
        candidates.append(DATA_DIR / self.registry)
        path = next((p for p in candidates if p.is_file()), None)
        if path is None:
            raise ConfigError(f"tool library '{self.registry}' not found")
        return load_registry(path)


def validate_config(document: Dict[str, Any]) -> AppConfig:
    try:
        return AppConfig.model_validate(document or {})
    except ValidationError as e:
        raise ConfigError(f"invalid configuration: {e}") from e


def load_config(path: Union[str, Path, None] = None) -> AppConfig:
    """Reads the config file: explicit path, then CANVASX_CONFIG, then the packaged default."""
    load_dotenv()
    chosen = Path(path or EnvSettings().config or DEFAULT_CONFIG_PATH)
    try:
        with open(chosen, "r", encoding="utf-8") as handle:
            document = yaml.safe_load(handle) or {}
    except (OSError, yaml.YAMLError) as e:
        raise ConfigError(f"cannot read config '{chosen}': {e}") from e
    if not isinstance(document, dict):
        raise ConfigError(f"config '{chosen}' must be a mapping")
    document.setdefault("base_dir", str(chosen.parent.resolve()))
    config = validate_config(document)
    logger.info(f"CONFIG [Loaded]: {chosen}")
    return config


def config_hash(config: AppConfig) -> str:
    """SHA-256 of the canonical JSON of the effective configuration."""
    payload = config.model_dump(mode="json", exclude={"base_dir"})
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def endpoint_token() -> Optional[str]:
    load_dotenv()
    token = EnvSettings().endpoint_token
    return token.get_secret_value() if token is not None else None


def setup_logging(level: Union[int, str] = logging.INFO) -> None:
    logging.basicConfig(level=level, format=LOG_FORMAT)


def llm(model: str, temperature: float = 0.25) -> LiteLlm:
    return LiteLlm(model=model, temperature=temperature)
