"""Instruction-agnostic and rule-based navigators used as reference points."""

from __future__ import annotations

import random
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from navjudge.geo import RelativeDirection, normalize_heading, relative_direction
from navjudge.instruction import Status
from navjudge.mapgraph import Instance
from navjudge.policy.base import DecisionContext, PolicyDecision
from navjudge.visibility import tie_break_neighbor

ACTION_CLASSES = ("forward", "left", "right", "stop")
BUCKETS = ("intersection", "non_intersection")
_CLASS_ANGLE = {"forward": 0.0, "left": -90.0, "right": 90.0}


def _stop(ctx: DecisionContext) -> PolicyDecision:
    return PolicyDecision(Status.COMPLETED, ctx.current)


def _options(ctx: DecisionContext) -> list[tuple[str, float]]:
    """Outgoing edges, minus the way back unless it is the only way."""
    nbrs = ctx.graph.neighbors_with_headings(ctx.current)
    onward = [(n, h) for n, h in nbrs if n != ctx.previous]
    return onward or nbrs


def _closest(options: Sequence[tuple[str, float]], target: float) -> str:
    return tie_break_neighbor(options, normalize_heading(target))[0]


class OraclePolicy:
    """Replays the ground-truth route one hop per decision."""

    name = "oracle"

    def decide(self, ctx: DecisionContext) -> PolicyDecision:
        route = ctx.instance.route
        i = len(ctx.trajectory) - 1
        if i >= len(route) - 1:
            return _stop(ctx)
        nxt = route[i + 1]
        status = Status.COMPLETED if i + 1 == len(route) - 1 else Status.IN_PROGRESS
        return PolicyDecision(status, nxt)


@dataclass
class RandomWalker:
    """Uniform choice over outgoing edges at intersections; straight on elsewhere.

    At each intersection the walker first stops with probability
    ``stop_prob``. Dead ends also stop it.
    """

    stop_prob: float = 0.2
    name: str = "random"

    def decide(self, ctx: DecisionContext) -> PolicyDecision:
        nbrs = ctx.graph.neighbors_with_headings(ctx.current)
        onward = [(n, h) for n, h in nbrs if n != ctx.previous]
        if not nbrs or (not onward and ctx.previous is not None):
            return _stop(ctx)
        options = onward or nbrs
        if ctx.graph.is_intersection(ctx.current):
            if ctx.rng.random() < self.stop_prob:
                return _stop(ctx)
            return PolicyDecision(Status.IN_PROGRESS, ctx.rng.choice(options)[0])
        return PolicyDecision(Status.IN_PROGRESS, _closest(options, ctx.heading))


# --- heuristic ------------------------------------------------------------

DEFAULT_DIRECTIVES: Mapping[str, tuple[float, tuple[str, ...]]] = {
    "left": (-90.0, (
        r"turn(?:ing)?\s+(?:to\s+(?:the\s+|your\s+)?)?left",
        r"(?:make|take|hang)\s+(?:a\s+|another\s+|the\s+next\s+)?left",
        r"left\s+turn",
        r"go\s+left",
    )),
    "right": (90.0, (
        r"turn(?:ing)?\s+(?:to\s+(?:the\s+|your\s+)?)?right",
        r"(?:make|take|hang)\s+(?:a\s+|another\s+|the\s+next\s+)?right",
        r"right\s+turn",
        r"go\s+right",
    )),
    "bear_left": (-45.0, (r"(?:bear|veer|keep)\s+(?:to\s+the\s+)?left",)),
    "bear_right": (45.0, (r"(?:bear|veer|keep)\s+(?:to\s+the\s+)?right",)),
    "straight": (0.0, (
        r"(?:go|continue|keep|walk|head|proceed)\s+(?:going\s+|walking\s+)?straight",
        r"straight\s+(?:through|ahead|past)",
    )),
}


def extract_directives(text: str, table: Mapping[str, tuple[float, Iterable[str]]] = DEFAULT_DIRECTIVES) -> list[tuple[str, float]]:
    """Directional keywords in order of appearance, overlapping matches merged."""
    hits = []
    for label, (angle, patterns) in table.items():
        for pat in patterns:
            for m in re.finditer(rf"\b{pat}\b", text, flags=re.IGNORECASE):
                hits.append((m.start(), -(m.end() - m.start()), m.end(), label, angle))
    hits.sort()
    out = []
    last_end = -1
    for start, _, end, label, angle in hits:
        if start < last_end:
            continue
        out.append((label, angle))
        last_end = end
    return out


@dataclass
class HeuristicAgent:
    """Follows directional keywords in order, one per intersection.

    Between intersections it keeps to the best-aligned edge. Once the last
    directive has been used it walks on to the next intersection and
    stops there; an instruction without any directive is walked straight
    until a dead end or the step cap.
    """

    directives: Mapping[str, tuple[float, Iterable[str]]] = field(default_factory=lambda: dict(DEFAULT_DIRECTIVES))
    name: str = "heuristic"

    def decide(self, ctx: DecisionContext) -> PolicyDecision:
        if "directives" not in ctx.memory:
            ctx.memory["directives"] = extract_directives(ctx.instruction, self.directives)
            ctx.memory["cursor"] = 0
        directives = ctx.memory["directives"]
        nbrs = ctx.graph.neighbors_with_headings(ctx.current)
        onward = [(n, h) for n, h in nbrs if n != ctx.previous]
        if not nbrs or (not onward and ctx.previous is not None):
            return _stop(ctx)
        options = onward or nbrs

        if ctx.graph.is_intersection(ctx.current):
            cursor = ctx.memory["cursor"]
            if cursor < len(directives):
                ctx.memory["cursor"] = cursor + 1
                _, angle = directives[cursor]
                return PolicyDecision(Status.IN_PROGRESS, _closest(options, ctx.heading + angle))
            if directives:
                return _stop(ctx)
        return PolicyDecision(Status.IN_PROGRESS, _closest(options, ctx.heading))


# --- action sampling ------------------------------------------------------


def classify_step(step_heading: float, incoming_heading: float) -> str:
    """Forward/left/right class of a move; U-turns fold into the side they turn to."""
    delta, direction = relative_direction(step_heading, incoming_heading)
    if direction is RelativeDirection.FORWARD:
        return "forward"
    if direction is RelativeDirection.LEFT:
        return "left"
    if direction is RelativeDirection.RIGHT:
        return "right"
    return "left" if delta < 0 else "right"


@dataclass
class ActionDistribution:
    counts: dict[str, dict[str, int]]

    def probabilities(self, bucket: str) -> dict[str, float]:
        row = self.counts.get(bucket, {})
        total = sum(row.values())
        if total == 0:
            return {c: (1.0 if c == "forward" else 0.0) for c in ACTION_CLASSES}
        return {c: row.get(c, 0) / total for c in ACTION_CLASSES}

    def to_dict(self) -> dict:
        return {
            "counts": {b: {c: self.counts.get(b, {}).get(c, 0) for c in ACTION_CLASSES} for b in BUCKETS},
            "probabilities": {b: self.probabilities(b) for b in BUCKETS},
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "ActionDistribution":
        if "counts" in data:
            return cls({b: {c: int(v) for c, v in row.items()} for b, row in data["counts"].items()})
        # probability-only tables are scaled to pseudo-counts
        return cls({b: {c: int(round(float(p) * 1_000_000)) for c, p in row.items()}
                    for b, row in data["probabilities"].items()})


def fit_action_distribution(instances: Sequence[Instance]) -> ActionDistribution:
    """Tally ground-truth moves per (intersection?, action) bucket.

    Every route step is classified against the heading the walker arrived
    with; the route's last node contributes one ``stop``.
    """
    if not instances:
        raise ValueError("cannot fit an action distribution on an empty corpus")
    counts = {b: {c: 0 for c in ACTION_CLASSES} for b in BUCKETS}
    for inst in instances:
        g = inst.graph
        heading = inst.initial_heading
        for a, b in zip(inst.route, inst.route[1:]):
            h = g.edge_heading(a, b)
            bucket = "intersection" if g.is_intersection(a) else "non_intersection"
            counts[bucket][classify_step(h, heading)] += 1
            heading = h
        bucket = "intersection" if g.is_intersection(inst.goal) else "non_intersection"
        counts[bucket]["stop"] += 1
    return ActionDistribution(counts)


def sample_action(table: ActionDistribution, bucket: str, rng: random.Random) -> str:
    probs = table.probabilities(bucket)
    x = rng.random()
    acc = 0.0
    for c in ACTION_CLASSES:
        acc += probs[c]
        if x < acc:
            return c
    return max(ACTION_CLASSES, key=lambda c: probs[c])


@dataclass
class ActionSampler:
    """Ignores the instruction; samples moves from corpus-wide frequencies."""

    table: ActionDistribution
    name: str = "sampling"

    def decide(self, ctx: DecisionContext) -> PolicyDecision:
        nbrs = ctx.graph.neighbors_with_headings(ctx.current)
        if not nbrs:
            return _stop(ctx)
        bucket = "intersection" if ctx.graph.is_intersection(ctx.current) else "non_intersection"
        action = sample_action(self.table, bucket, ctx.rng)
        if action == "stop":
            return _stop(ctx)
        return PolicyDecision(Status.IN_PROGRESS, _closest(_options(ctx), ctx.heading + _CLASS_ANGLE[action]))

