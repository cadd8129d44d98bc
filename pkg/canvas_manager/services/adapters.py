####################################################################################################
####################  CanvasX | Tool Adapters                    ###################################
####################  Developed by: DatSciX                      ###################################
####################################################################################################

"""
Tool Adapters
The wire protocol between the planner and external tools: JSON request/response bodies over
HTTP (POST /v1/invoke), a requests-based client, and a FastAPI server that hosts the simulated
tools plus the auxiliary skills behind the same protocol.
"""

import logging
from typing import Any, Callable, Dict, List, Literal, Optional, Union

import httpx
import requests
import uvicorn
from fastapi import FastAPI
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from ..errors import AdapterError, CanvasError
from ..tools.decomposer import AtomicEdit, GenerationRequest, decompose_editing, decompose_generation, decomposition_payload
from ..tools.position_pipeline import PositionPipeline
from ..tools.scene_model import SceneGraph, SceneSpec
from ..tools.sim_world import WorldConfig, apply_tool
from ..tools.tool_registry import Selection, ToolDescriptor
from ..tools.verifier import Verifier

logger = logging.getLogger(__name__)

WIRE_SCHEMA_VERSION = 1
INVOKE_PATH = "/v1/invoke"


class AdapterRequest(BaseModel):
    model_config = ConfigDict(frozen=True)

    schema_version: int = WIRE_SCHEMA_VERSION
    skill: str = Field(min_length=1)
    tool_name: Optional[str] = None
    node_id: str = "aux"
    inputs: Dict[str, Any] = Field(default_factory=dict)
    state: Optional[SceneGraph] = None
    state_ref: Optional[str] = None
    edit: Optional[AtomicEdit] = None
    request: Optional[GenerationRequest] = None


class AdapterResponse(BaseModel):
    model_config = ConfigDict(frozen=True)

    schema_version: int = WIRE_SCHEMA_VERSION
    status: Literal["ok", "error"]
    state: Optional[SceneGraph] = None
    artifact: Any = None
    diagnostics: List[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def _errors_explain_themselves(self) -> "AdapterResponse":
        if self.status == "error" and not self.diagnostics:
            raise ValueError("an error response needs diagnostics")
        return self


# --- Client ---

class AdapterClient:
    """Calls one adapter endpoint. `session` is any object with a requests-style post()."""

    def __init__(
        self,
        base_url: str,
        timeout: float = 30.0,
        token: Optional[str] = None,
        session: Optional[Any] = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.token = token
        self.session = session or requests.Session()

    def _headers(self) -> Dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        return headers

    def invoke(self, message: AdapterRequest) -> AdapterResponse:
        url = f"{self.base_url}{INVOKE_PATH}"
        try:
            response = self.session.post(
                url, json=message.model_dump(mode="json"), headers=self._headers(), timeout=self.timeout
            )
        except (requests.Timeout, httpx.TimeoutException) as e:
            logger.warning(f"ADAPTER [Timeout]: {message.skill} at {url}")
            raise AdapterError("timeout", f"{message.skill} timed out after {self.timeout}s") from e
        except (requests.RequestException, httpx.HTTPError) as e:
            logger.warning(f"ADAPTER [Transport]: {message.skill} at {url}: {e}")
            raise AdapterError("transport", f"cannot reach {url}: {e}") from e

        if response.status_code >= 400:
            raise AdapterError("transport", f"{url} answered HTTP {response.status_code}", [response.text[:500]])
        try:
            answer = AdapterResponse.model_validate(response.json())
        except (ValueError, ValidationError) as e:
            raise AdapterError("schema", f"{message.skill} answered off-schema", [str(e)]) from e
        if answer.schema_version != WIRE_SCHEMA_VERSION:
            raise AdapterError("schema", f"unsupported schema_version {answer.schema_version}", [response.text[:500]])
        if answer.status == "error":
            raise AdapterError("remote", f"{message.skill} failed remotely", answer.diagnostics)
        return answer

    def call_skill(self, skill: str, inputs: Dict[str, Any], state: Optional[SceneGraph] = None) -> Any:
        """Auxiliary skills answer with an artifact."""
        return self.invoke(AdapterRequest(skill=skill, inputs=inputs, state=state)).artifact


class AdapterBackend:
    """Tool backend that runs every selected tool through an adapter endpoint."""

    def __init__(self, client: AdapterClient):
        self.client = client

    def invoke(
        self,
        tool: ToolDescriptor,
        selection: Selection,
        state: SceneGraph,
        node_id: str,
        action: Union[AtomicEdit, GenerationRequest],
    ) -> SceneGraph:
        message = AdapterRequest(
            skill=tool.skill,
            tool_name=tool.name,
            node_id=node_id,
            inputs=selection.inputs,
            state=state,
            edit=action if isinstance(action, AtomicEdit) else None,
            request=action if isinstance(action, GenerationRequest) else None,
        )
        answer = self.client.invoke(message)
        if answer.state is None:
            raise AdapterError("schema", f"{tool.name} returned no state", ["ok response without a state"])
        return answer.state


# --- Server ---

def _auxiliary(
    message: AdapterRequest, pipeline: PositionPipeline, verifier: Verifier
) -> Any:
    skill, inputs = message.skill, message.inputs
    state = message.state or SceneGraph()
    if skill == "aux.echo":
        return inputs
    if skill == "aux.detect":
        return [d.model_dump(mode="json") for d in pipeline.detect_objects(state)]
    if skill == "aux.layout":
        spec = SceneSpec.model_validate(inputs["spec"])
        return {key: box.model_dump() for key, box in pipeline.generate_layout(spec).items()}
    if skill.startswith("aux.condition."):
        return pipeline.extract_condition(skill.removeprefix("aux.condition."), inputs.get("source"))
    if skill == "aux.verify":
        if inputs.get("mode") == "edit":
            before = SceneGraph.model_validate(inputs["before"])
            verdict = verifier.verify_edit(before, state, AtomicEdit.model_validate(inputs["edit"]))
        else:
            verdict = verifier.verify_spec(state, SceneSpec.model_validate(inputs["spec"]))
        return verdict.model_dump(mode="json")
    if skill == "aux.decompose":
        text = inputs["text"]
        if inputs.get("kind") == "editing":
            return decomposition_payload(decompose_editing(text))
        return decomposition_payload(decompose_generation(text))
    raise AdapterError("remote", f"unknown auxiliary skill '{skill}'")


def create_app(
    world: WorldConfig,
    pipeline: Optional[PositionPipeline] = None,
    verifier: Optional[Verifier] = None,
    on_request: Optional[Callable[[AdapterRequest], None]] = None,
) -> FastAPI:
    """Simulated tools and auxiliary skills behind the wire protocol."""
    pipeline = pipeline or PositionPipeline(seed=world.seed)
    verifier = verifier or Verifier()
    app = FastAPI(title="CanvasX tool adapters", version=str(WIRE_SCHEMA_VERSION))

    @app.get("/v1/health")
    def health() -> Dict[str, Any]:
        return {"status": "ok", "schema_version": WIRE_SCHEMA_VERSION}

    @app.post(INVOKE_PATH, response_model=AdapterResponse, response_model_exclude_none=False)
    def invoke(message: AdapterRequest) -> AdapterResponse:
        if on_request is not None:
            on_request(message)
        if message.schema_version != WIRE_SCHEMA_VERSION:
            return AdapterResponse(status="error", diagnostics=[f"unsupported schema_version {message.schema_version}"])
        try:
            if message.skill.startswith("aux."):
                return AdapterResponse(status="ok", artifact=_auxiliary(message, pipeline, verifier))
            state = apply_tool(
                message.skill, message.inputs, message.state or SceneGraph(), message.node_id, world,
                message.edit or message.request, message.tool_name, pipeline,
            )
            return AdapterResponse(status="ok", state=state)
        except (CanvasError, KeyError, ValidationError) as e:
            logger.warning(f"ADAPTER [Remote Failure]: {message.skill}: {e}")
            return AdapterResponse(status="error", diagnostics=[f"{type(e).__name__}: {e}"])
        except Exception as e:
            logger.error(f"ADAPTER [Unexpected]: {message.skill}", exc_info=True)
            return AdapterResponse(status="error", diagnostics=[f"{type(e).__name__}: {e}"])

    return app


def serve_adapters(app: FastAPI, host: str = "127.0.0.1", port: int = 8765) -> None:
    logger.info(f"ADAPTER [Serving]: http://{host}:{port}{INVOKE_PATH}")
    uvicorn.run(app, host=host, port=port, log_level="info")
