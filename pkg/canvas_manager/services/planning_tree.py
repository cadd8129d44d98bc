####################################################################################################
####################  CanvasX | Planning Tree                    ###################################
####################  Developed by: DatSciX                      ###################################
####################################################################################################

"""
Planning Tree
Builds the tree of generation and editing nodes (sibling alternates = different tools for the
same action) and runs it as a pre-order traversal gated by verification:

- a node that verifies prunes its remaining siblings and descends to its leftmost child;
- a node that fails is dropped with its subtree and the next sibling runs on the parent's state;
- a generation node that misses the spec gets a correction chain attached below it, and when
  that chain fails or stalls the next generation tool takes over.

Subtrees below alternates are realized lazily from the pending edit chain each node carries,
so no executed state is shared between alternates.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Literal, Optional, Protocol, Sequence, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field

from ..errors import CanvasError, InvalidSpec, NoCapableTool
from ..tools.decomposer import AtomicEdit, Attachments, GenerationRequest, discrepancies_to_edits
from ..tools.position_pipeline import PositionPipeline, SelectionContext
from ..tools.scene_model import DiscrepancyReport, ObjectSelector, SceneGraph, SceneSpec
from ..tools.tool_registry import Selection, ToolDescriptor, ToolRegistry, draft_selection
from ..tools.verifier import Verifier
from .trace import TraversalTrace

logger = logging.getLogger(__name__)

NodeKind = Literal["initial", "generation", "editing"]
NodeStatus = Literal["pending", "succeeded", "failed", "pruned"]
PlanningMode = Literal["selection", "chain", "tree"]
JobKind = Literal["generation", "editing"]


class Budget(BaseModel):
    model_config = ConfigDict(frozen=True)

    max_nodes: int = Field(default=32, ge=1)
    max_branching: int = Field(default=2, ge=1)


class PlanningConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    mode: PlanningMode = "tree"
    reseed_alternates: int = Field(default=0, ge=0)
    max_correction_rounds: int = Field(default=1, ge=0)


@dataclass
class PlanNode:
    id: str
    kind: NodeKind
    action: Union[GenerationRequest, AtomicEdit, None] = None
    tool: Optional[ToolDescriptor] = None
    children: List["PlanNode"] = field(default_factory=list)
    status: NodeStatus = "pending"
    # edits still to run below this node, in order
    pending: Tuple[AtomicEdit, ...] = ()
    # False only for the remove half of a remove-then-add rewrite
    completes: bool = True
    done: int = 0
    state: Optional[SceneGraph] = None
    group_action: Optional[str] = None
    attached: Optional[DiscrepancyReport] = None

    def walk(self) -> Iterator["PlanNode"]:
        yield self
        for child in self.children:
            yield from child.walk()


@dataclass
class PlanTree:
    kind: JobKind
    root: PlanNode
    prompt: str = ""
    spec: Optional[SceneSpec] = None
    edits: Tuple[AtomicEdit, ...] = ()
    attachments: Attachments = Attachments()

    def find(self, node_id: str) -> Optional[PlanNode]:
        return next((node for node in self.root.walk() if node.id == node_id), None)


class Outcome(BaseModel):
    """Result of one traversal: the most accurate state seen plus how it was reached."""

    state: SceneGraph
    success: bool
    best_score: float = Field(ge=0.0, le=1.0)
    best_node: str
    nodes_executed: int = Field(ge=0)
    trace: List[Dict[str, Any]] = Field(default_factory=list)


class ToolBackend(Protocol):
    """Runs a selected tool on a state: the simulated world or an adapter endpoint."""

    def invoke(
        self, tool: ToolDescriptor, selection: Selection, state: SceneGraph, node_id: str,
        action: Union[GenerationRequest, AtomicEdit],
    ) -> SceneGraph: ...


class ToolOrdering(Protocol):
    """Reorders the ranked alternates of an action; the LLM-backed selector implements this."""

    def order(
        self,
        action: Union[GenerationRequest, AtomicEdit],
        ranked: List[ToolDescriptor],
        ctx: SelectionContext,
        state: SceneGraph,
    ) -> List[ToolDescriptor]: ...


class RankedOrdering:
    def order(self, action, ranked, ctx, state):
        return ranked


class NodeExecutor:
    """Selection, position compensation and tool invocation for one node."""

    def __init__(self, backend: ToolBackend, pipeline: PositionPipeline):
        self.backend = backend
        self.pipeline = pipeline

    def execute_node(self, node: PlanNode, state: SceneGraph, tree: PlanTree) -> SceneGraph:
        if node.kind == "initial" or node.tool is None:
            raise InvalidSpec("the initial node has no tool to execute")
        edit = node.action if isinstance(node.action, AtomicEdit) else None
        request = node.action if isinstance(node.action, GenerationRequest) else None
        detections = tuple(self.pipeline.detect_objects(state)) if edit is not None else ()
        ctx = SelectionContext(
            instruction=node.action.describe(),
            candidates=(node.tool,),
            detections=detections,
            spec=tree.spec,
            edit=edit,
            request=request,
            source_ref=tree.attachments.source_ref,
            subject_refs=tree.attachments.subject_refs,
            condition_refs=tree.attachments.condition_refs,
        )
        selection = self.pipeline.compensate_inputs(draft_selection(node.tool, node.action), ctx)
        return self.backend.invoke(node.tool, selection, state, node.id, node.action)


# --- Traversal ---

SUCCESS, FAILED, STALLED, ERROR = "success", "failed", "stalled", "error"


class _OutOfBudget(Exception):
    pass


class _StallWatch:
    """Two consecutive passed corrections that do not raise the spec score mean the chain is stuck."""

    def __init__(self, reference: float):
        self.reference = reference
        self.flat = 0

    def observe(self, score: float) -> bool:
        self.flat = self.flat + 1 if score <= self.reference + 1e-12 else 0
        self.reference = score
        return self.flat >= 2


class Planner:
    """Tree construction plus the traversal policy."""

    def __init__(
        self,
        registry: ToolRegistry,
        executor: NodeExecutor,
        verifier: Verifier,
        budget: Budget = Budget(),
        planning: PlanningConfig = PlanningConfig(),
        ordering: Optional[ToolOrdering] = None,
    ):
        self.registry = registry
        self.executor = executor
        self.verifier = verifier
        self.budget = budget
        self.planning = planning
        self.ordering = ordering or RankedOrdering()

    @property
    def branching(self) -> int:
        return self.budget.max_branching if self.planning.mode == "tree" else 1

    # --- Construction ---

    def _context(self, tree: PlanTree, action: Union[GenerationRequest, AtomicEdit]) -> SelectionContext:
        return SelectionContext(
            instruction=action.describe(),
            spec=tree.spec,
            edit=action if isinstance(action, AtomicEdit) else None,
            request=action if isinstance(action, GenerationRequest) else None,
            source_ref=tree.attachments.source_ref,
            subject_refs=tree.attachments.subject_refs,
            condition_refs=tree.attachments.condition_refs,
        )

    def _rewrite(
        self, tree: PlanTree, edit: AtomicEdit, rest: Tuple[AtomicEdit, ...], state: SceneGraph
    ) -> Optional[Tuple[ToolDescriptor, AtomicEdit, Tuple[AtomicEdit, ...], bool]]:
        """Remove the object, then add it back with the wanted attribute at the same box."""
        obj = state.get(edit.target.object_id) if edit.target.object_id else next(iter(state.find(edit.target)), None)
        if obj is None:
            return None
        remove = AtomicEdit(action="remove", target=ObjectSelector(category=obj.category, object_id=obj.id))
        try:
            removers = [t for t in self.registry.rank_tools(remove, self._context(tree, remove)) if t.skill == "remove"]
        except NoCapableTool:
            return None
        if not removers:
            return None
        add = AtomicEdit(
            action="add", category=obj.category, attrs=obj.attrs.with_value(edit.attribute, edit.value), bbox=obj.bbox
        )
        return removers[0], remove, (add,) + rest, False

    def realize(
        self,
        tree: PlanTree,
        parent: PlanNode,
        action: Union[GenerationRequest, AtomicEdit],
        rest: Tuple[AtomicEdit, ...],
        state: SceneGraph,
    ) -> List[PlanNode]:
        """Creates the sibling group for `action` under `parent`, preferred tool leftmost."""
        ctx = self._context(tree, action)
        ranked = self.ordering.order(action, self.registry.rank_tools(action, ctx), ctx, state)
        alternates: List[Tuple[ToolDescriptor, Any, Tuple[AtomicEdit, ...], bool]] = [
            (tool, action, rest, True) for tool in ranked
        ]
        if isinstance(action, AtomicEdit) and action.action == "edit_attribute" and self.planning.mode == "tree":
            rewrite = self._rewrite(tree, action, rest, state)
            if rewrite is not None:
                at = next((i for i, alt in enumerate(alternates) if alt[0].skill == "instruction_edit"), len(alternates))
                alternates.insert(at, rewrite)
        for variant in range(1, self.planning.reseed_alternates + 1):
            alternates.append((ranked[0].reseeded(variant), action, rest, True))

        kind: NodeKind = "generation" if isinstance(action, GenerationRequest) else "editing"
        parent.children = [
            PlanNode(
                id=f"{parent.id}.{i}", kind=kind, action=node_action, tool=tool,
                pending=pending, completes=completes, done=parent.done + (1 if completes and kind == "editing" else 0),
            )
            for i, (tool, node_action, pending, completes) in enumerate(alternates[: self.branching])
        ]
        parent.group_action = action.describe()
        return parent.children

    def build_tree(
        self,
        kind: JobKind,
        payload: Union[SceneSpec, Sequence[AtomicEdit]],
        initial_state: SceneGraph = SceneGraph(),
        prompt: str = "",
        attachments: Attachments = Attachments(),
    ) -> PlanTree:
        root = PlanNode(id="root", kind="initial", status="succeeded", state=initial_state)
        if kind == "generation":
            if not isinstance(payload, SceneSpec):
                raise InvalidSpec("a generation tree needs a scene spec")
            tree = PlanTree(kind=kind, root=root, prompt=prompt, spec=payload, attachments=attachments)
            request = GenerationRequest(
                prompt=prompt or payload.describe(), spec=payload,
                subject_refs=attachments.subject_refs, condition_refs=attachments.condition_refs,
            )
            self.realize(tree, root, request, (), initial_state)
        else:
            edits = tuple(payload)
            if not edits:
                raise InvalidSpec("an editing tree needs at least one edit")
            tree = PlanTree(kind=kind, root=root, prompt=prompt, edits=edits, attachments=attachments)
            root.pending = edits
            self.realize(tree, root, edits[0], edits[1:], initial_state)
        return tree

    def attach_correction_subtree(
        self, tree: PlanTree, node: PlanNode, report: DiscrepancyReport
    ) -> List[AtomicEdit]:
        """Hangs the correction chain for `report` below `node`. Attaching the same report twice is a no-op."""
        if node.attached is not None and node.attached == report:
            return list(node.pending)
        edits = discrepancies_to_edits(report, self.verifier.rules)
        node.attached = report
        node.pending = tuple(edits)
        if not edits:
            node.children = []
            return []
        self.realize(tree, node, edits[0], tuple(edits[1:]), node.state)
        return edits

    def switch_generation_tool(self, tree: PlanTree, current: PlanNode) -> Optional[PlanNode]:
        """Next untried generation alternate after `current`; None when the group is exhausted."""
        siblings = tree.root.children
        index = next(i for i, node in enumerate(siblings) if node.id == current.id)
        return next((node for node in siblings[index + 1:] if node.status == "pending"), None)

    def traverse(self, tree: PlanTree, trace: Optional[TraversalTrace] = None) -> Outcome:
        return _Traversal(self, tree, trace or TraversalTrace()).run()


class _Traversal:
    """Mutable bookkeeping of one traversal."""

    def __init__(self, planner: Planner, tree: PlanTree, trace: TraversalTrace):
        self.planner = planner
        self.tree = tree
        self.trace = trace
        self.executed = 0
        self.best: Optional[Tuple[float, str, SceneGraph]] = None

    # --- Bookkeeping ---

    def _score(self, node: PlanNode, state: SceneGraph) -> float:
        if self.tree.spec is not None:
            return self.planner.verifier.verify_spec(state, self.tree.spec).score
        return node.done / len(self.tree.edits)

    def _record(self, score: float, node_id: str, state: SceneGraph) -> None:
        if self.best is None or score > self.best[0]:
            self.best = (score, node_id, state)

    def _expand(self, parent: PlanNode) -> None:
        self.trace.emit(
            "expand",
            parent=parent.id,
            action=parent.group_action,
            children=[{"id": child.id, "tool": child.tool.name} for child in parent.children],
        )

    def _executed(self, node: PlanNode, verdict: str, score: Optional[float]) -> None:
        self.trace.emit(
            "execute",
            node=node.id,
            kind=node.kind,
            action=node.action.describe(),
            tool=node.tool.name,
            verdict=verdict,
            score=None if score is None else round(score, 4),
        )

    def _prune(self, node: PlanNode, siblings: Sequence[PlanNode]) -> None:
        pruned = [s.id for s in siblings if s.status == "pending"]
        for s in siblings:
            if s.status == "pending":
                s.status = "pruned"
        if pruned:
            self.trace.emit("prune", node=node.id, pruned=pruned)

    def _execute(self, node: PlanNode, state: SceneGraph) -> Optional[SceneGraph]:
        if self.executed >= self.planner.budget.max_nodes:
            self.trace.emit("budget", nodes_executed=self.executed)
            raise _OutOfBudget()
        self.executed += 1
        try:
            return self.planner.executor.execute_node(node, state, self.tree)
        except CanvasError as e:
            logger.warning(f"TRAVERSAL [Node Error]: {node.id} {node.tool.name}: {e}")
            node.status = "failed"
            self._executed(node, "error", None)
            return None

    # --- Policy ---

    def run(self) -> Outcome:
        root = self.tree.root
        self._record(self._score(root, root.state), root.id, root.state)
        budget = self.planner.budget
        self.trace.emit(
            "start",
            kind=self.tree.kind,
            budget={"max_nodes": budget.max_nodes, "max_branching": budget.max_branching},
            mode=self.planner.planning.mode,
        )
        try:
            if self.tree.kind == "generation":
                result = self._generation_group(root)
            else:
                result = self._edit_group(root, None, 0)
        except _OutOfBudget:
            result = FAILED
        success = result == SUCCESS
        score, best_node, state = self.best
        self.trace.emit(
            "outcome", success=success, best_score=round(score, 4), nodes_executed=self.executed, best_node=best_node
        )
        logger.info(
            f"TRAVERSAL [Done]: success={success} best={best_node} ({score:.4f}) after {self.executed} node(s)"
        )
        return Outcome(
            state=state, success=success, best_score=score, best_node=best_node,
            nodes_executed=self.executed, trace=list(self.trace.events),
        )

    def _generation_group(self, root: PlanNode) -> str:
        self._expand(root)
        gen = root.children[0] if root.children else None
        while gen is not None:
            result = self._visit_generation(gen, root.state)
            if result == SUCCESS:
                gen.status = "succeeded"
                self._prune(gen, root.children)
                return SUCCESS
            gen.status = "failed"
            following = self.planner.switch_generation_tool(self.tree, gen)
            if following is not None:
                if result == ERROR:
                    self.trace.emit("backtrack", failed=gen.id, next=following.id)
                else:
                    self.trace.emit("switch", **{"from": gen.id, "to": following.id})
                    logger.info(f"TRAVERSAL [Switch]: {gen.id} -> {following.id}")
            gen = following
        return FAILED

    def _visit_generation(self, gen: PlanNode, state_in: SceneGraph) -> str:
        out = self._execute(gen, state_in)
        if out is None:
            return ERROR
        gen.state = out
        verdict = self.planner.verifier.verify_spec(out, self.tree.spec)
        self._executed(gen, "pass" if verdict.passed else "fail", verdict.score)
        self._record(verdict.score, gen.id, out)
        if verdict.passed:
            return SUCCESS
        if self.planner.planning.mode == "selection":
            return FAILED
        if not self._attach(gen, verdict.report):
            return FAILED
        return self._edit_group(gen, _StallWatch(verdict.score), 0)

    def _attach(self, node: PlanNode, report: DiscrepancyReport) -> bool:
        try:
            edits = self.planner.attach_correction_subtree(self.tree, node, report)
        except NoCapableTool as e:
            logger.warning(f"TRAVERSAL [No Correction]: {node.id}: {e}")
            return False
        if not edits:
            return False
        self.trace.emit("attach", node=node.id, edits=[edit.describe() for edit in edits])
        return True

    def _edit_group(self, parent: PlanNode, watch: Optional[_StallWatch], rounds: int) -> str:
        children = parent.children
        if not children:
            return FAILED
        self._expand(parent)
        for i, node in enumerate(children):
            result = self._visit_edit(node, parent, i, watch, rounds)
            if result != FAILED or node.status == "succeeded":
                return result
            if i + 1 < len(children):
                self.trace.emit("backtrack", failed=node.id, next=children[i + 1].id)
                logger.info(f"TRAVERSAL [Backtrack]: {node.id} -> {children[i + 1].id}")
        return FAILED

    def _visit_edit(
        self, node: PlanNode, parent: PlanNode, index: int, watch: Optional[_StallWatch], rounds: int
    ) -> str:
        out = self._execute(node, parent.state)
        if out is None:
            return FAILED
        verdict = self.planner.verifier.verify_edit(parent.state, out, node.action)
        if not verdict.passed:
            node.status = "failed"
            self._executed(node, "fail", None)
            return FAILED

        node.status = "succeeded"
        node.state = out
        score = self._score(node, out)
        self._executed(node, "pass", score)
        self._record(score, node.id, out)
        logger.info(f"TRAVERSAL [Node Executed]: {node.id} {node.tool.name} passed ({score:.4f})")
        self._prune(node, parent.children[index + 1:])

        if watch is not None and watch.observe(score):
            self.trace.emit("stall", node=node.id)
            logger.warning(f"TRAVERSAL [Stall]: corrections stopped improving at {node.id}")
            return STALLED

        if node.pending:
            try:
                self.planner.realize(self.tree, node, node.pending[0], node.pending[1:], out)
            except NoCapableTool as e:
                logger.warning(f"TRAVERSAL [No Capable Tool]: {node.id}: {e}")
                return FAILED
            return self._edit_group(node, watch, rounds)

        if self.tree.spec is None:
            return SUCCESS
        final = self.planner.verifier.verify_spec(out, self.tree.spec)
        if final.passed:
            return SUCCESS
        if rounds < self.planner.planning.max_correction_rounds and self._attach(node, final.report):
            return self._edit_group(node, watch, rounds + 1)
        return FAILED
