####################################################################################################
####################  CanvasX | Ablation Bench                   ###################################
####################  Developed by: DatSciX                      ###################################
####################################################################################################

"""
Ablation Bench
Runs a seeded synthetic corpus of generation jobs under the three planning arms (top tool only,
correction chain, full tree) and reports mean spec score and success rate per arm.
"""

import logging
from typing import Dict, List, Optional, Sequence

from pydantic import BaseModel, ConfigDict, Field
from tqdm import tqdm

from ..config import AppConfig
from ..tools.random_streams import derive_seed, stream_for
from ..tools.scene_model import AttributeSet, ObjectSelector, Relation, RequiredObject, SceneSpec
from .orchestrator import build_engine
from .planning_tree import PlanningMode

logger = logging.getLogger(__name__)

ARMS: Sequence[PlanningMode] = ("selection", "chain", "tree")
CATEGORIES = (
    "cat", "dog", "bird", "car", "chair", "table", "lamp", "cup",
    "ball", "book", "vase", "bicycle", "horse", "boat", "clock",
)
COLORS = ("red", "blue", "green", "yellow", "black", "white")
BENCH_RELATIONS = ("left_of", "right_of", "above", "below", "next_to")
BACKGROUNDS = ("grassland", "beach", "kitchen", "street")


class CorpusConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    jobs: int = Field(default=500, ge=1)
    min_units: int = Field(default=3, ge=1)
    max_units: int = Field(default=5, ge=1)
    min_relations: int = Field(default=1, ge=0)
    max_relations: int = Field(default=2, ge=0)
    p_color: float = Field(default=0.6, ge=0, le=1)
    p_background: float = Field(default=0.5, ge=0, le=1)


class ArmResult(BaseModel):
    arm: str
    jobs: int
    mean_score: float
    success_rate: float
    mean_nodes: float
    scores: List[float] = Field(default_factory=list, repr=False)


class BenchReport(BaseModel):
    seed: int
    arms: Dict[str, ArmResult]
    min_gap: float = 0.05

    def ordered(self) -> bool:
        """selection < chain < tree, each step by at least `min_gap`."""
        s, c, t = (self.arms[arm].mean_score for arm in ARMS)
        return c - s >= self.min_gap and t - c >= self.min_gap

    def summary(self) -> str:
        rows = [f"{'arm':<10} {'mean score':>10} {'success':>8} {'nodes':>6}"]
        for arm in ARMS:
            r = self.arms[arm]
            rows.append(f"{arm:<10} {r.mean_score:>10.4f} {r.success_rate:>8.3f} {r.mean_nodes:>6.2f}")
        return "\n".join(rows)


def synthetic_spec(seed: int, index: int, corpus: CorpusConfig = CorpusConfig()) -> SceneSpec:
    """One random spec: distinct categories, relations only between single-object entries, each entry in at most one relation."""
    rng = stream_for(seed, "corpus", index)
    units = int(rng.integers(corpus.min_units, corpus.max_units + 1))
    wanted_relations = int(rng.integers(corpus.min_relations, corpus.max_relations + 1))
    categories = list(rng.choice(len(CATEGORIES), size=units, replace=False))

    # single entries first so there are always enough relation endpoints
    singles = min(units, max(2 * wanted_relations, 2))
    counts = [1] * singles
    remaining = units - singles
    while remaining > 0:
        counts.append(2 if remaining >= 2 and rng.random() < 0.5 else 1)
        remaining -= counts[-1]

    entries: List[RequiredObject] = []
    for k, count in enumerate(counts):
        attrs = AttributeSet()
        if rng.random() < corpus.p_color:
            attrs = AttributeSet(color=COLORS[int(rng.integers(len(COLORS)))])
        entries.append(RequiredObject(category=CATEGORIES[int(categories[k])], attrs=attrs, count=count))

    free = [i for i, entry in enumerate(entries) if entry.count == 1]
    relations: List[Relation] = []
    for _ in range(wanted_relations):
        if len(free) < 2:
            break
        a, b = (int(v) for v in rng.choice(len(free), size=2, replace=False))
        subject, anchor = entries[free[a]], entries[free[b]]
        relations.append(Relation(
            kind=BENCH_RELATIONS[int(rng.integers(len(BENCH_RELATIONS)))],
            subject=ObjectSelector(category=subject.category),
            object=ObjectSelector(category=anchor.category),
        ))
        free = [f for i, f in enumerate(free) if i not in (a, b)]

    background = ()
    if rng.random() < corpus.p_background:
        background = (BACKGROUNDS[int(rng.integers(len(BACKGROUNDS)))],)
    return SceneSpec(required=tuple(entries), relations=tuple(relations), background=background)


def run_bench(
    config: AppConfig,
    corpus: CorpusConfig = CorpusConfig(),
    arms: Sequence[str] = ARMS,
    min_gap: float = 0.05,
    progress: bool = True,
) -> BenchReport:
    """Every arm sees the same specs under the same per-job world seeds."""
    base_seed = config.world.seed
    registry = config.build_registry()
    specs = [synthetic_spec(base_seed, i, corpus) for i in range(corpus.jobs)]
    results: Dict[str, ArmResult] = {}

    for arm in arms:
        scores: List[float] = []
        successes = 0
        nodes = 0
        for i, spec in enumerate(tqdm(specs, desc=f"bench {arm}", disable=not progress)):
            job_config = config.with_overrides(
                planning={"mode": arm}, world={"seed": derive_seed(base_seed, "job", i)}
            )
            engine = build_engine(job_config, registry=registry)
            tree = engine.planner.build_tree("generation", spec, prompt=spec.describe())
            outcome = engine.planner.traverse(tree)
            scores.append(outcome.best_score)
            successes += int(outcome.success)
            nodes += outcome.nodes_executed
        results[arm] = ArmResult(
            arm=arm,
            jobs=len(specs),
            mean_score=sum(scores) / len(scores),
            success_rate=successes / len(specs),
            mean_nodes=nodes / len(specs),
            scores=scores,
        )
        logger.info(f"BENCH [Arm Done]: {arm} mean={results[arm].mean_score:.4f} success={results[arm].success_rate:.3f}")

    return BenchReport(seed=base_seed, arms=results, min_gap=min_gap)


def load_corpus_config(document: Optional[dict]) -> CorpusConfig:
    return CorpusConfig.model_validate(document or {})
