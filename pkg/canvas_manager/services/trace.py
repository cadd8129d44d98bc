####################################################################################################
####################  CanvasX | Traversal Trace                  ###################################
####################  Developed by: DatSciX                      ###################################
####################################################################################################

"""
Traversal Trace
Append-only event log of one traversal, its JSON Lines persistence, reconstruction of the
realized tree from the events, and DOT export of that tree.

File layout: the first line is the job header (schema version, seed, config hash, job); every
following line is one event. Lines are canonical JSON (sorted keys, no spaces) so that two runs
of the same job compare byte for byte.
"""

import json
import logging
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Tuple, Union

import graphviz
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from ..errors import ConfigError

logger = logging.getLogger(__name__)

TRACE_SCHEMA_VERSION = 1

EVENT_KINDS = (
    "start", "expand", "execute", "attach", "backtrack", "prune", "switch", "stall", "budget", "outcome",
)

TraceListener = Callable[[Dict[str, Any]], None]


def canonical_line(payload: Dict[str, Any]) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


class TraceHeader(BaseModel):
    model_config = ConfigDict(frozen=True)

    schema_version: int = TRACE_SCHEMA_VERSION
    seed: int
    config_hash: str
    job: Dict[str, Any] = Field(default_factory=dict)


class TraversalTrace:
    """Events in execution order. Listeners see each event as it is appended."""

    def __init__(self, listeners: Iterable[TraceListener] = ()):
        self.events: List[Dict[str, Any]] = []
        self._listeners = list(listeners)

    def subscribe(self, listener: TraceListener) -> None:
        self._listeners.append(listener)

    def emit(self, event: str, **fields: Any) -> Dict[str, Any]:
        if event not in EVENT_KINDS:
            raise ValueError(f"unknown trace event '{event}'")
        record = {"event": event, **fields}
        self.events.append(record)
        for listener in self._listeners:
            try:
                listener(record)
            except Exception:
                logger.error(f"TRACE [Listener Failed]: {event}", exc_info=True)
        return record

    def event_lines(self) -> List[str]:
        return [canonical_line(event) for event in self.events]

    def of_kind(self, event: str) -> List[Dict[str, Any]]:
        return [e for e in self.events if e["event"] == event]

    def executed_ids(self) -> List[str]:
        return [e["node"] for e in self.events if e["event"] == "execute"]


# --- Persistence ---

def write_trace(path: Union[str, Path], header: TraceHeader, events: Iterable[Dict[str, Any]]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [canonical_line(header.model_dump(mode="json"))] + [canonical_line(e) for e in events]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info(f"TRACE [Written]: {len(lines) - 1} event(s) to {path}")
    return path


def read_trace(path: Union[str, Path]) -> Tuple[TraceHeader, List[Dict[str, Any]]]:
    try:
        lines = [line for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()]
    except OSError as e:
        raise ConfigError(f"cannot read trace '{path}': {e}") from e
    if not lines:
        raise ConfigError(f"trace '{path}' is empty")
    try:
        header = TraceHeader.model_validate_json(lines[0])
        events = [json.loads(line) for line in lines[1:]]
    except (ValidationError, json.JSONDecodeError) as e:
        raise ConfigError(f"trace '{path}' is malformed: {e}") from e
    return header, events


# --- Realized Tree ---

class TreeRow(BaseModel):
    """One node of the realized tree as the events describe it."""

    id: str
    parent: Optional[str] = None
    tool: Optional[str] = None
    action: Optional[str] = None
    status: str = "pending"
    score: Optional[float] = None


def realized_tree(events: Iterable[Dict[str, Any]]) -> List[TreeRow]:
    """Rebuilds every realized node, in realization order, with its final status."""
    rows: Dict[str, TreeRow] = {"root": TreeRow(id="root", status="succeeded")}
    for event in events:
        kind = event["event"]
        if kind == "expand":
            for child in event["children"]:
                rows[child["id"]] = TreeRow(
                    id=child["id"], parent=event["parent"], tool=child["tool"], action=event["action"]
                )
        elif kind == "execute" and event["node"] in rows:
            row = rows[event["node"]]
            row.action = event["action"]
            row.score = event["score"]
            row.status = {"pass": "succeeded", "fail": "failed", "error": "failed"}[event["verdict"]]
        elif kind == "prune":
            for node_id in event["pruned"]:
                if node_id in rows:
                    rows[node_id].status = "pruned"
    return list(rows.values())


_STATUS_COLORS = {"succeeded": "darkgreen", "failed": "firebrick", "pruned": "gray60", "pending": "black"}


def render_dot(events: Iterable[Dict[str, Any]], name: str = "planning_tree") -> str:
    """DOT source of the realized tree; executed nodes are colored by verdict."""
    dot = graphviz.Digraph(name=name, graph_attr={"rankdir": "TB"}, node_attr={"shape": "box", "fontsize": "10"})
    for row in realized_tree(events):
        if row.id == "root":
            dot.node(row.id, label="initial", shape="ellipse")
            continue
        label = f"{row.tool}\\n{row.action}"
        if row.score is not None:
            label += f"\\nscore {row.score:.4f}"
        style = "dashed" if row.status in ("pruned", "pending") else "solid"
        dot.node(row.id, label=label, color=_STATUS_COLORS[row.status], style=style)
        dot.edge(row.parent, row.id)
    return dot.source
