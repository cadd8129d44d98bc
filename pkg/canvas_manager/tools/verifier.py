####################################################################################################
####################  CanvasX | Verifier                         ###################################
####################  Developed by: DatSciX                      ###################################
####################################################################################################

"""
Verifier
Gates every executed node. Generation nodes are checked against the whole scene spec; editing
nodes against the single edit they performed: its postcondition, collateral changes to other
objects, and a size plausibility guard.
"""

import logging
from typing import Dict, List, Optional, Protocol, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from ..errors import AdapterError, EndpointError
from .decomposer import AtomicEdit
from .scene_model import (
    DEFAULT_RULES,
    BBox,
    DiscrepancyReport,
    SceneGraph,
    SceneObject,
    SceneRules,
    SceneSpec,
    diff,
    holds_against,
)

logger = logging.getLogger(__name__)

ASPECTS = ("objects", "attributes", "positions", "relations", "background", "aesthetics")


class VerifierConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    drift_tolerance: float = Field(default=0.02, ge=0)
    min_area: float = Field(default=0.005, ge=0)


class Verdict(BaseModel):
    """Pass/fail plus per-aspect results. Serialized with the key "pass"."""

    model_config = ConfigDict(frozen=True, populate_by_name=True, serialize_by_alias=True)

    passed: bool = Field(alias="pass")
    score: float = Field(ge=0.0, le=1.0)
    report: DiscrepancyReport = DiscrepancyReport()
    aspects: Dict[str, bool] = Field(default_factory=lambda: {aspect: True for aspect in ASPECTS})

    def failed_aspects(self) -> List[str]:
        return [aspect for aspect in ASPECTS if not self.aspects.get(aspect, True)]


class JudgeClient(Protocol):
    def call_skill(self, skill: str, inputs: Dict, state: Optional[SceneGraph] = None): ...


class _Checks:
    """Accumulates named checks and the aspect each one belongs to."""

    def __init__(self):
        self.results: List[Tuple[str, bool]] = []

    def add(self, aspect: str, ok: bool) -> None:
        self.results.append((aspect, bool(ok)))

    def verdict(self) -> Verdict:
        aspects = {aspect: True for aspect in ASPECTS}
        for aspect, ok in self.results:
            aspects[aspect] = aspects[aspect] and ok
        passed = sum(1 for _, ok in self.results if ok)
        score = passed / len(self.results) if self.results else 1.0
        return Verdict(passed=all(ok for _, ok in self.results), score=score, aspects=aspects)


class Verifier:
    """Oracle verifier over scene graphs."""

    def __init__(self, config: VerifierConfig = VerifierConfig(), rules: SceneRules = DEFAULT_RULES):
        self.config = config
        self.rules = rules

    def verify_spec(self, state: SceneGraph, spec: SceneSpec) -> Verdict:
        report = diff(state, spec, self.rules)
        aspects = {
            "objects": not (report.missing or report.extraneous),
            "attributes": not report.wrong_attribute,
            "positions": not report.relation_violations,
            "relations": not report.relation_violations,
            "background": not report.background_mismatch,
            "aesthetics": True,
        }
        return Verdict(passed=report.is_empty, score=report.score, report=report, aspects=aspects)

    # --- Edit Verification ---

    def _target(self, before: SceneGraph, edit: AtomicEdit) -> Optional[SceneObject]:
        if edit.target is None:
            return None
        if edit.target.object_id is not None:
            return before.get(edit.target.object_id)
        found = before.find(edit.target)
        return found[0] if found else None

    def _tracked(self, obj: SceneObject, before: SceneGraph, after: SceneGraph) -> Optional[SceneObject]:
        """The object `obj` became: same id, else a new object of its category centred where it was."""
        same = after.get(obj.id)
        if same is not None:
            return same
        tol = self.config.drift_tolerance
        for candidate in after.objects:
            if before.get(candidate.id) is not None or candidate.category != obj.category:
                continue
            if abs(candidate.bbox.cx - obj.bbox.cx) <= tol and abs(candidate.bbox.cy - obj.bbox.cy) <= tol:
                return candidate
        return None

    def _placed(self, obj: SceneObject, edit: AtomicEdit, after: SceneGraph) -> bool:
        placement = edit.placement
        anchors = [a.bbox for a in after.find(placement.anchor) if a.id != obj.id]
        return holds_against(placement.kind, obj.bbox, anchors, self.rules)

    def _close(self, a: BBox, b: BBox) -> bool:
        return a.drift(b) <= self.config.drift_tolerance

    def verify_edit(self, before: SceneGraph, after: SceneGraph, edit: AtomicEdit) -> Verdict:
        """Postcondition, no collateral change, plausible sizes."""
        checks = _Checks()
        if edit.action == "instruction_passthrough":
            return checks.verdict()

        target = self._target(before, edit)
        touched = {target.id} if target is not None else set()
        produced: Optional[SceneObject] = None

        if edit.action == "add":
            new = [o for o in after.objects if before.get(o.id) is None]
            produced = next(
                (o for o in new if o.category == edit.category and o.attrs.satisfies(edit.attrs)),
                next((o for o in new if o.category == edit.category), None),
            )
            checks.add("objects", produced is not None)
            if produced is not None:
                checks.add("attributes", produced.attrs.satisfies(edit.attrs))
                if edit.bbox is not None:
                    checks.add("positions", self._close(produced.bbox, edit.bbox))
                if edit.placement is not None:
                    checks.add("relations", self._placed(produced, edit, after))
            checks.add("objects", len(new) <= 1)

        elif edit.action == "remove":
            checks.add("objects", target is None or after.get(target.id) is None)

        elif edit.action == "replace":
            checks.add("objects", target is not None and after.get(target.id) is None)
            new = [o for o in after.objects if before.get(o.id) is None and o.category == edit.category]
            produced = new[0] if new else None
            checks.add("objects", produced is not None)
            if produced is not None:
                checks.add("attributes", produced.attrs.satisfies(edit.attrs))
                checks.add("positions", target is not None and self._close(produced.bbox, target.bbox))

        elif edit.action == "edit_attribute":
            produced = self._tracked(target, before, after) if target is not None else None
            checks.add("objects", produced is not None)
            if produced is not None:
                checks.add("attributes", produced.attrs.get(edit.attribute) == edit.value)
                others = {k: v for k, v in target.attrs.constrained().items() if k != edit.attribute}
                checks.add("attributes", all(produced.attrs.get(k) == v for k, v in others.items()))
                checks.add("positions", self._close(produced.bbox, target.bbox))

        elif edit.action == "move":
            produced = after.get(target.id) if target is not None else None
            checks.add("objects", produced is not None)
            if produced is not None:
                if edit.bbox is not None:
                    checks.add("positions", self._close(produced.bbox, edit.bbox))
                else:
                    checks.add("relations", self._placed(produced, edit, after))
                tol = self.config.drift_tolerance
                checks.add("positions", abs(produced.bbox.w - target.bbox.w) <= tol and abs(produced.bbox.h - target.bbox.h) <= tol)

        elif edit.action == "style":
            checks.add("background", edit.style in after.background)

        if produced is not None:
            touched.add(produced.id)
            checks.add("positions", produced.bbox.area >= self.config.min_area)

        for obj in before.objects:
            if obj.id in touched:
                continue
            now = after.get(obj.id)
            checks.add("objects", now is not None and now.attrs == obj.attrs and self._close(now.bbox, obj.bbox))
        if edit.action not in ("add", "replace", "edit_attribute"):
            checks.add("objects", all(before.get(o.id) is not None for o in after.objects))

        verdict = checks.verdict()
        if not verdict.passed:
            logger.info(f"VERIFIER [Edit Failed]: '{edit.describe()}' fails {verdict.failed_aspects()}")
        return verdict


class EndpointVerifier(Verifier):
    """Delegates both checks to an external judge behind the `aux.verify` skill."""

    def __init__(self, client: JudgeClient, config: VerifierConfig = VerifierConfig(), rules: SceneRules = DEFAULT_RULES):
        super().__init__(config, rules)
        self.client = client

    def _judge(self, inputs: Dict, state: SceneGraph) -> Verdict:
        try:
            answer = self.client.call_skill("aux.verify", inputs, state)
            return Verdict.model_validate(answer)
        except AdapterError as e:
            raise EndpointError(f"judge endpoint failed: {e}") from e
        except ValidationError as e:
            raise EndpointError(f"judge answered off-schema: {e}") from e

    def verify_spec(self, state: SceneGraph, spec: SceneSpec) -> Verdict:
        return self._judge({"mode": "spec", "spec": spec.model_dump(mode="json")}, state)

    def verify_edit(self, before: SceneGraph, after: SceneGraph, edit: AtomicEdit) -> Verdict:
        return self._judge(
            {"mode": "edit", "before": before.model_dump(mode="json"), "edit": edit.model_dump(mode="json")}, after
        )
