####################################################################################################
####################  CanvasX | Arrangement                      ###################################
####################  Developed by: DatSciX                      ###################################
####################################################################################################

"""
Arrangement
Joint placement of boxes under several relations at once. Layout generation uses it for whole
specs; correction uses it when objects are tied together by more than one relation.

A problem is a list of pieces (boxes keyed by name and grouped by required entry) plus clauses
(one subject against the anchors its relation binds). Solving tries, in order:
  1. repair: one piece at a time moves to the nearest grid cell that breaks fewer of its clauses;
  2. the same repair from a banded start (longest-path levels per axis, 'on' subjects stacked);
  3. growth: entries laid out in rows outward from the first one along the relation links, then
     shifted onto the canvas.
Contradictory orderings (a cycle along either axis) fail before any of that.
"""

import graphlib
import logging
from collections import defaultdict
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

import numpy as np

from ..errors import PlacementInfeasible
from .scene_model import (
    DEFAULT_RULES,
    EXISTENTIAL_RELATIONS,
    INVERSE_RELATION,
    BBox,
    SceneRules,
    SceneSpec,
    holds_against,
)

logger = logging.getLogger(__name__)

Size = Tuple[float, float]
Rect = Tuple[float, float, float, float]
Link = Tuple[str, int, int]

# side an entry takes relative to the entry it was reached from
_FLIPPED = {**INVERSE_RELATION, "next_to": "next_to", "on": "under"}
_COMPASS = ((1.0, 0.0), (-1.0, 0.0), (0.0, -1.0), (0.0, 1.0))
_ROW_GAP = 0.4


@dataclass(frozen=True)
class Clause:
    """One subject against the anchors its relation binds."""

    kind: str
    subject: str
    anchors: Tuple[str, ...]
    label: str = ""

    def involves(self, key: str) -> bool:
        return key == self.subject or key in self.anchors


@dataclass
class Piece:
    """A box to arrange. `sizes` lists the sizes a resizable piece may take, largest first; a
    piece without sizes keeps the size of its box."""

    key: str
    box: BBox
    group: int = 0
    sizes: Tuple[Size, ...] = ()

    def size(self, scale: int = 0) -> Size:
        if not self.sizes:
            return (self.box.w, self.box.h)
        return self.sizes[min(scale, len(self.sizes) - 1)]


def relation_clauses(kind: str, subjects: Sequence[str], anchors: Sequence[str], label: str = "") -> List[Clause]:
    """Clauses of one relation. 'next_to' and 'on' give one clause per subject over all its
    anchors; the directional kinds one clause per subject-anchor pair. A piece never anchors itself."""
    if kind in EXISTENTIAL_RELATIONS:
        clauses = []
        for s in subjects:
            others = tuple(a for a in anchors if a != s)
            if others:
                clauses.append(Clause(kind, s, others, label))
        return clauses
    return [Clause(kind, s, (a,), label) for s in subjects for a in anchors if a != s]


def spec_clauses(spec: SceneSpec, keys: Sequence[Sequence[str]]) -> List[Clause]:
    """Clauses of every spec relation; `keys[i]` names the pieces standing for required entry i."""
    clauses: List[Clause] = []
    for relation in spec.relations:
        s, o = spec.entry_index(relation.subject), spec.entry_index(relation.object)
        clauses += relation_clauses(relation.kind, keys[s], keys[o], relation.describe())
    return clauses


def spec_links(spec: SceneSpec) -> List[Link]:
    """(kind, subject entry, anchor entry) per relation."""
    return [(r.kind, spec.entry_index(r.subject), spec.entry_index(r.object)) for r in spec.relations]


def _pair_holds(kind: str, a, b, rules: SceneRules) -> np.ndarray:
    """Relation semantics over columns of boxes given as (x, y, w, h); scalars broadcast."""
    ax, ay, aw, ah = a
    bx, by, bw, bh = b
    if kind == "left_of":
        return np.asarray(ax + aw / 2 < bx + bw / 2)
    if kind == "right_of":
        return np.asarray(ax + aw / 2 > bx + bw / 2)
    if kind == "above":
        return np.asarray(ay + ah / 2 < by + bh / 2)
    if kind == "below":
        return np.asarray(ay + ah / 2 > by + bh / 2)
    if kind == "next_to":
        return np.hypot(ax + aw / 2 - (bx + bw / 2), ay + ah / 2 - (by + bh / 2)) < rules.next_to_distance
    if kind == "on":
        overlap = np.minimum(ax + aw, bx + bw) - np.maximum(ax, bx)
        return (np.abs(ay + ah - by) <= rules.on_epsilon) & (overlap > 0)
    raise ValueError(f"unknown relation kind '{kind}'")


def _quad(box: BBox) -> Rect:
    return (box.x, box.y, box.w, box.h)


def _levels(edges: Dict[str, Set[str]], axis: str) -> Dict[str, int]:
    """Longest-path level of every piece taking part in an axis' ordering."""
    sorter = graphlib.TopologicalSorter({node: preds for node, preds in edges.items()})
    try:
        order = list(sorter.static_order())
    except graphlib.CycleError as e:
        raise PlacementInfeasible(f"contradictory {axis} relations: {e.args[1]}") from e
    levels: Dict[str, int] = {}
    for node in order:
        levels[node] = max((levels[p] + 1 for p in edges.get(node, ())), default=0)
    return levels


def _fit(rects: Mapping[str, Rect]) -> Optional[Dict[str, Rect]]:
    """Shifts rects onto the canvas as one block; None when they span more than it."""
    left = min(r[0] for r in rects.values())
    right = max(r[0] + r[2] for r in rects.values())
    top = min(r[1] for r in rects.values())
    bottom = max(r[1] + r[3] for r in rects.values())
    if right - left > 1.0 or bottom - top > 1.0:
        return None
    dx = -left if left < 0 else min(0.0, 1.0 - right)
    dy = -top if top < 0 else min(0.0, 1.0 - bottom)
    return {key: (x + dx, y + dy, w, h) for key, (x, y, w, h) in rects.items()}


class Arranger:
    """Solves arrangement problems. Inputs are never modified."""

    def __init__(
        self,
        rules: SceneRules = DEFAULT_RULES,
        step: float = 0.025,
        fill: float = 0.8,
        margin: float = 0.05,
        max_sweeps: int = 16,
        candidates: int = 24,
    ):
        self.rules = rules
        self.step = step
        self.fill = fill
        self.margin = margin
        self.max_sweeps = max_sweeps
        self.candidates = candidates

    def holds(self, clause: Clause, boxes: Mapping[str, BBox]) -> bool:
        return holds_against(clause.kind, boxes[clause.subject], [boxes[k] for k in clause.anchors], self.rules)

    def broken(self, clauses: Iterable[Clause], boxes: Mapping[str, BBox]) -> List[Clause]:
        return [clause for clause in clauses if not self.holds(clause, boxes)]

    def axis_levels(self, clauses: Sequence[Clause]) -> Tuple[Dict[str, int], Dict[str, int]]:
        """Longest-path levels along x and along y. An 'on' subject counts as above its first anchor."""
        x_edges: Dict[str, Set[str]] = defaultdict(set)
        y_edges: Dict[str, Set[str]] = defaultdict(set)
        for clause in clauses:
            s, a = clause.subject, clause.anchors[0]
            if clause.kind == "left_of":
                x_edges[a].add(s)
            elif clause.kind == "right_of":
                x_edges[s].add(a)
            elif clause.kind in ("above", "on"):
                y_edges[a].add(s)
            elif clause.kind == "below":
                y_edges[s].add(a)
        return _levels(x_edges, "horizontal"), _levels(y_edges, "vertical")

    # --- Banded Start ---

    def banded(self, pieces: Sequence[Piece], clauses: Sequence[Clause], boxes: Mapping[str, BBox]) -> Dict[str, BBox]:
        """Pieces spread into equal bands by level along each axis, then 'on' subjects stacked on
        the top edge of their first anchor, sharing its width."""
        x_level, y_level = self.axis_levels(clauses)
        keys = [piece.key for piece in pieces]
        resizable = {piece.key for piece in pieces if piece.sizes}
        cx = {k: boxes[k].cx for k in keys}
        cy = {k: boxes[k].cy for k in keys}
        w = {k: boxes[k].w for k in keys}
        h = {k: boxes[k].h for k in keys}
        self._band(x_level, keys, cx, w, resizable)
        self._band(y_level, keys, cy, h, resizable)
        out = dict(boxes)
        out.update({k: BBox.centered(cx[k], cy[k], w[k], h[k]) for k in keys})

        stacked: Dict[str, List[str]] = defaultdict(list)
        seated: Set[str] = set()
        for clause in clauses:
            if clause.kind == "on" and clause.subject not in seated:
                seated.add(clause.subject)
                stacked[clause.anchors[0]].append(clause.subject)

        # anchors settle before the pieces stacked on them
        for anchor in sorted(stacked, key=lambda k: -y_level.get(k, 0)):
            base = out[anchor]
            slot = base.w / len(stacked[anchor])
            for u, key in enumerate(stacked[anchor]):
                height = out[key].h
                if key in resizable:
                    width, x = slot, base.x + u * slot
                else:
                    width = out[key].w
                    x = base.x + (u + 0.5) * slot - width / 2
                if base.y >= height:
                    y = base.y - height
                else:
                    if key in resizable:
                        height = base.y if base.y > 0 else self.rules.on_epsilon / 2
                    y = 0.0
                out[key] = BBox.clamped(x, y, width, height)
        return out

    def _band(
        self,
        levels: Dict[str, int],
        keys: Sequence[str],
        centre: Dict[str, float],
        extent: Dict[str, float],
        resizable: Set[str],
    ) -> None:
        if not levels:
            return
        band = 1.0 / (max(levels.values()) + 1)
        by_level: Dict[int, List[str]] = defaultdict(list)
        for key in keys:
            if key in levels:
                by_level[levels[key]].append(key)
        for level, members in by_level.items():
            slot = band / len(members)
            for k, key in enumerate(members):
                centre[key] = level * band + (k + 0.5) * slot
                if key in resizable:
                    extent[key] = min(extent[key], slot * self.fill)

    # --- Nearest-Cell Repair ---

    @staticmethod
    def _taken(box: BBox, key: str, boxes: Mapping[str, BBox], avoid: Mapping[str, BBox]) -> bool:
        """Whether another piece or an avoided object already has exactly this box."""
        return any(k != key and other == box for k, other in boxes.items()) or any(
            k != key and other == box for k, other in avoid.items()
        )

    def _offsets(
        self, key: str, mine: Sequence[Clause], boxes: Mapping[str, BBox], current: BBox, w: float, h: float
    ) -> Tuple[np.ndarray, np.ndarray]:
        """Candidate origins: the grid, the current origin, and the exact resting spots of 'on'."""
        xs = [current.x, *np.arange(0.0, 1.0 - w + 1e-9, self.step)]
        ys = [current.y, *np.arange(0.0, 1.0 - h + 1e-9, self.step)]
        for clause in mine:
            if clause.kind != "on":
                continue
            if clause.subject == key:
                for anchor in (boxes[k] for k in clause.anchors):
                    xs.append(anchor.cx - w / 2)
                    ys.append(anchor.y - h)
            else:
                subject = boxes[clause.subject]
                xs.append(subject.cx - w / 2)
                ys.append(subject.bottom)
        xs = np.unique(np.round(np.clip(xs, 0.0, 1.0 - w), 6))
        ys = np.unique(np.round(np.clip(ys, 0.0, 1.0 - h), 6))
        return xs, ys

    def _holds_at(self, clause: Clause, key: str, quad, boxes: Mapping[str, BBox]) -> np.ndarray:
        """Whether `clause` holds with `key` moved to each candidate box in `quad`."""
        shape = quad[0].shape
        if clause.subject == key:
            tests = [_pair_holds(clause.kind, quad, _quad(boxes[k]), self.rules) for k in clause.anchors]
        else:
            subject = _quad(boxes[clause.subject])
            tests = [_pair_holds(clause.kind, subject, quad, self.rules)]
            tests += [
                np.full(shape, bool(_pair_holds(clause.kind, subject, _quad(boxes[k]), self.rules)))
                for k in clause.anchors if k != key
            ]
        tests = [np.broadcast_to(t, shape) for t in tests]
        if clause.kind in EXISTENTIAL_RELATIONS:
            return np.logical_or.reduce(tests)
        return np.logical_and.reduce(tests)

    def _project(
        self, piece: Piece, clauses: Sequence[Clause], boxes: Mapping[str, BBox], avoid: Mapping[str, BBox]
    ) -> BBox:
        """Nearest box for `piece` breaking fewer of its clauses, keeping its size if it can; its
        current box when no candidate does better."""
        mine = [clause for clause in clauses if clause.involves(piece.key)]
        current = boxes[piece.key]
        best, best_broken = current, len(self.broken(mine, boxes))
        sizes = [(current.w, current.h)] + [s for s in piece.sizes if s != (current.w, current.h)]

        columns = []
        for rank, (w, h) in enumerate(sizes):
            xs, ys = self._offsets(piece.key, mine, boxes, current, w, h)
            gx, gy = np.meshgrid(xs, ys)
            gx, gy = gx.ravel(), gy.ravel()
            quad = (gx, gy, np.full_like(gx, w), np.full_like(gx, h))
            broken = np.zeros(gx.shape, dtype=int)
            for clause in mine:
                broken += ~self._holds_at(clause, piece.key, quad, boxes)
            distance = np.hypot(gx + w / 2 - current.cx, gy + h / 2 - current.cy)
            columns.append((broken, np.full(gx.shape, rank), distance, quad))

        broken = np.concatenate([c[0] for c in columns])
        rank = np.concatenate([c[1] for c in columns])
        distance = np.concatenate([c[2] for c in columns])
        x, y, w, h = (np.concatenate([c[3][i] for c in columns]) for i in range(4))
        order = np.lexsort((distance, rank, broken))

        for idx in order[: self.candidates]:
            if broken[idx] >= best_broken:
                break
            box = BBox.clamped(float(x[idx]), float(y[idx]), float(w[idx]), float(h[idx]))
            if self._taken(box, piece.key, boxes, avoid):
                continue
            exact = len(self.broken(mine, {**boxes, piece.key: box}))
            if exact < best_broken:
                best, best_broken = box, exact
                if exact == broken[idx]:
                    break
        return best

    def repair(
        self,
        pieces: Sequence[Piece],
        clauses: Sequence[Clause],
        boxes: Mapping[str, BBox],
        avoid: Optional[Mapping[str, BBox]] = None,
    ) -> Dict[str, BBox]:
        """Projects pieces of broken clauses, in piece order, until every clause holds. A move is
        only taken when it lowers the number of broken clauses."""
        boxes = dict(boxes)
        avoid = avoid or {}
        for _ in range(self.max_sweeps):
            if not self.broken(clauses, boxes):
                return boxes
            moved = False
            for piece in pieces:
                if not any(clause.involves(piece.key) for clause in self.broken(clauses, boxes)):
                    continue
                box = self._project(piece, clauses, boxes, avoid)
                if box != boxes[piece.key]:
                    boxes[piece.key] = box
                    moved = True
            if not moved:
                break
        broken = self.broken(clauses, boxes)
        if broken:
            raise PlacementInfeasible(f"no arrangement satisfies '{broken[0].label}'")
        return boxes

    def _separate(
        self, pieces: Sequence[Piece], boxes: Mapping[str, BBox], avoid: Mapping[str, BBox]
    ) -> Dict[str, BBox]:
        """Nudges pieces off boxes that another piece or an avoided object already has."""
        boxes = dict(boxes)
        nudge = self.step / 10
        for piece in pieces:
            origin = boxes[piece.key]
            box, j = origin, 0
            while self._taken(box, piece.key, boxes, avoid) and j < 8:
                j += 1
                shift = nudge * ((j + 1) // 2) * (1 if j % 2 else -1)
                box = BBox.clamped(origin.x + shift, origin.y, origin.w, origin.h)
            boxes[piece.key] = box
        return boxes

    # --- Growth ---

    def _row(self, members: Sequence[Piece], start: float, bottom: float, gap: float, scale: int) -> Dict[str, Rect]:
        """Members side by side from centre x `start`, `gap` apart, on a common bottom edge."""
        rects: Dict[str, Rect] = {}
        for u, piece in enumerate(members):
            w, h = piece.size(scale)
            cx = start + u * gap
            rects[piece.key] = (cx - w / 2, bottom - h, w, h)
        return rects

    def _beside(self, side: str, members: Sequence[Piece], around: Sequence[Rect], n: int, scale: int) -> Dict[str, Rect]:
        """A row for `members` on `side` of the rects of an already placed entry; `n` counts the
        entries placed earlier on that same side."""
        sizes = [piece.size(scale) for piece in members]
        first = around[0]
        px = [r[0] + r[2] / 2 for r in around]
        widths = [w for w, _ in sizes]
        if side == "on":
            widths.append(first[2])
        elif side == "under":
            widths += [r[2] for r in around]
        narrowest = min(widths)
        gap = _ROW_GAP * narrowest
        span = gap * (len(members) - 1)

        if side == "left_of":
            start, bottom = min(px) - self.margin * (1 + n) - span, first[1] + first[3]
        elif side == "right_of":
            start, bottom = max(px) + self.margin * (1 + n), first[1] + first[3]
        elif side == "above":
            start, bottom = px[0] - span / 2, min(r[1] for r in around) - self.margin * n
        elif side == "below":
            start = px[0] - span / 2
            bottom = max(r[1] + r[3] for r in around) + max(h for _, h in sizes) + self.margin * n
        elif side == "next_to":
            dx, dy = _COMPASS[n % len(_COMPASS)]
            reach = self.margin * (1 + n // len(_COMPASS))
            start = px[0] + dx * reach
            bottom = first[1] + first[3] / 2 + dy * reach + sizes[0][1] / 2
        elif side == "on":
            start, bottom = px[0] - span / 2 + n * narrowest / 4, first[1]
        else:
            start = sum(px) / len(px) + n * narrowest / 4
            bottom = first[1] + first[3] + sizes[0][1]
        return self._row(members, start, bottom, gap, scale)

    def _grow(
        self,
        root: int,
        groups: Mapping[int, Sequence[Piece]],
        links: Sequence[Link],
        boxes: Mapping[str, BBox],
        scale: int,
        seen: Set[int],
    ) -> Dict[str, Rect]:
        """Breadth-first rows from `root`; every entry is placed against the one it was reached from."""
        members = groups[root]
        first = boxes[members[0].key]
        gap = _ROW_GAP * min(piece.size(scale)[0] for piece in members)
        rects = self._row(members, first.cx, first.bottom, gap, scale)
        queue = [root]
        seen.add(root)
        sides: Dict[Tuple[int, str], int] = defaultdict(int)
        while queue:
            parent = queue.pop(0)
            for kind, s, a in links:
                if s == a or parent not in (s, a):
                    continue
                child = a if s == parent else s
                if child in seen or child not in groups:
                    continue
                seen.add(child)
                queue.append(child)
                side = kind if child == s else _FLIPPED[kind]
                n = sides[(parent, side)]
                sides[(parent, side)] += 1
                around = [rects[piece.key] for piece in groups[parent]]
                rects.update(self._beside(side, groups[child], around, n, scale))
        return rects

    def grow(
        self,
        pieces: Sequence[Piece],
        clauses: Sequence[Clause],
        links: Sequence[Link],
        boxes: Mapping[str, BBox],
        avoid: Optional[Mapping[str, BBox]] = None,
    ) -> Dict[str, BBox]:
        """Entries laid out as rows grown outward from the first one along the relation links,
        each connected block shifted onto the canvas as a whole. Resizable pieces shrink a step
        at a time while a block does not fit."""
        avoid = avoid or {}
        groups: Dict[int, List[Piece]] = defaultdict(list)
        for piece in pieces:
            groups[piece.group].append(piece)
        scales = max((len(piece.sizes) for piece in pieces), default=0) or 1
        failed = "the relations together"
        for scale in range(scales):
            rects: Dict[str, Rect] = {}
            seen: Set[int] = set()
            fits = True
            for group in groups:
                if group in seen:
                    continue
                block = _fit(self._grow(group, groups, links, boxes, scale, seen))
                if block is None:
                    fits = False
                    break
                rects.update(block)
            if not fits:
                continue
            arranged = dict(boxes)
            arranged.update({key: BBox.clamped(*rect) for key, rect in rects.items()})
            arranged = self._separate(pieces, arranged, avoid)
            broken = self.broken(clauses, arranged)
            if not broken:
                logger.debug(f"ARRANGER [Grown]: {len(pieces)} piece(s) at scale {scale}")
                return arranged
            failed = f"'{broken[0].label}'"
        raise PlacementInfeasible(f"no arrangement satisfies {failed}")

    # --- Entry Point ---

    def solve(
        self,
        pieces: Sequence[Piece],
        clauses: Sequence[Clause],
        links: Sequence[Link],
        boxes: Mapping[str, BBox],
        avoid: Optional[Mapping[str, BBox]] = None,
    ) -> Dict[str, BBox]:
        """Boxes satisfying every clause, no two alike and none on an avoided object's box.

        Nearest repair from `boxes`, then from their banded projection, then the grown
        arrangement. Contradictory orderings raise PlacementInfeasible at once.
        """
        avoid = avoid or {}
        banded = self.banded(pieces, clauses, boxes)
        for start in (boxes, banded):
            try:
                arranged = self._separate(pieces, self.repair(pieces, clauses, start, avoid), avoid)
            except PlacementInfeasible as e:
                logger.debug(f"ARRANGER [Repair Stalled]: {e}")
                continue
            if not self.broken(clauses, arranged):
                return arranged
        return self.grow(pieces, clauses, links, boxes, avoid)
