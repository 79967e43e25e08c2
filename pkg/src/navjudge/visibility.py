"""Forward visible-area construction around the agent's position.

The visible area is what a pedestrian would see looking down the street:
starting at the current node, walk to the neighbour whose edge heading is
closest to the current heading, until enough intersections have been
passed or the street bends too sharply. Three further nodes are appended
as lookahead.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Iterable, Sequence

from navjudge.geo import (
    RelativeDirection,
    angular_diff,
    bearing,
    haversine_distance,
    relative_direction,
)
from navjudge.mapgraph import MapGraph

if TYPE_CHECKING:
    from navjudge.instruction import GroundedLandmark

MAX_TURN_DEG = 100.0
MAX_ITERATIONS = 1000
LOOKAHEAD_NODES = 3
BRANCH_DEPTH = 2
POI_MAX_DISTANCE_M = 50.0

_BRANCH_ANGLES = {
    RelativeDirection.FORWARD: 0.0,
    RelativeDirection.LEFT: -90.0,
    RelativeDirection.RIGHT: 90.0,
}


class NodeKind(str, enum.Enum):
    WAYPOINT = "waypoint"
    INTERSECTION = "intersection"


@dataclass(frozen=True)
class PoiSighting:
    poi_id: str
    landmark_letter: str | None
    direction: RelativeDirection
    distance: float
    bearing: float


@dataclass(frozen=True)
class PathNode:
    id: str
    kind: NodeKind
    heading_in: float
    to_next: tuple[float, RelativeDirection] | None = None
    branches: dict[RelativeDirection, tuple[str, ...]] = field(default_factory=dict)
    nearby_pois: tuple[PoiSighting, ...] = ()

    @property
    def onward_heading(self) -> float:
        return self.to_next[0] if self.to_next is not None else self.heading_in


@dataclass(frozen=True)
class VisibleArea:
    origin: str
    origin_heading: float
    path: tuple[PathNode, ...]
    lookahead: tuple[PathNode, ...] = ()
    intersections_counted: int = 0

    @property
    def nodes(self) -> tuple[PathNode, ...]:
        return self.path + self.lookahead

    def node_ids(self) -> set[str]:
        """Every node id presented to a policy: path, lookahead and branch chains."""
        ids = {p.id for p in self.nodes}
        for p in self.nodes:
            for chain in p.branches.values():
                ids.update(chain)
        return ids

    def route_to(self, target: str, graph: MapGraph | None = None) -> list[str]:
        """Hops from the origin to ``target`` through the visible area.

        Follows the path then lookahead; branch chains hang off the
        intersection they start from. When ``graph`` is given, a direct
        out-neighbour of the origin is also reachable in one hop.
        Raises ``KeyError`` if the target is not reachable.
        """
        line = [p.id for p in self.nodes]
        if target in line:
            return line[1 : line.index(target) + 1]
        for i, p in enumerate(self.nodes):
            for chain in p.branches.values():
                if target in chain:
                    return line[1 : i + 1] + list(chain[: chain.index(target) + 1])
        if graph is not None and graph.has_edge(self.origin, target):
            return [target]
        raise KeyError(target)


TIE_EPSILON_DEG = 1e-9


def tie_break_neighbor(candidates: Sequence[tuple[str, float]], h_curr: float) -> tuple[str, float]:
    """Candidate with the smallest heading change; ties go to the smallest id.

    Changes within ``TIE_EPSILON_DEG`` of each other count as tied, so
    mirror-symmetric streets are not separated by floating-point noise.
    """
    if not candidates:
        raise ValueError("no candidates")
    diffs = [angular_diff(h_curr, h) for _, h in candidates]
    best = min(diffs)
    return min((c for c, d in zip(candidates, diffs) if d - best <= TIE_EPSILON_DEG), key=lambda c: c[0])


def _greedy_walk(graph: MapGraph, start: str, heading: float, visited: set[str], limit: int) -> list[tuple[str, float]]:
    """Heading-greedy continuation without the intersection budget."""
    out: list[tuple[str, float]] = []
    curr, h = start, heading
    while len(out) < limit:
        nbrs = graph.neighbors_with_headings(curr)
        if not nbrs:
            break
        nxt, hn = tie_break_neighbor(nbrs, h)
        if angular_diff(h, hn) >= MAX_TURN_DEG or nxt in visited:
            break
        out.append((nxt, hn))
        visited.add(nxt)
        curr, h = nxt, hn
    return out


def _branches(graph: MapGraph, node_id: str, heading_in: float, previous: str | None) -> dict[RelativeDirection, tuple[str, ...]]:
    best: dict[RelativeDirection, tuple[float, str, float]] = {}
    for nbr, h in graph.neighbors_with_headings(node_id):
        if nbr == previous:
            continue
        delta, direction = relative_direction(h, heading_in)
        if direction is RelativeDirection.BACK:
            continue
        key = (abs(delta - _BRANCH_ANGLES[direction]), nbr, h)
        if direction not in best or key < best[direction]:
            best[direction] = key
    out = {}
    for direction in (RelativeDirection.FORWARD, RelativeDirection.LEFT, RelativeDirection.RIGHT):
        if direction not in best:
            continue
        _, first, h = best[direction]
        rest = _greedy_walk(graph, first, h, {node_id, first}, BRANCH_DEPTH - 1)
        out[direction] = (first,) + tuple(n for n, _ in rest)
    return out


def construct_visible_area(graph: MapGraph, v_t: str, h_t: float, u: int) -> VisibleArea:
    """Build the forward visible area from node ``v_t`` facing ``h_t``.

    Each iteration first counts the current node if it is an intersection
    (the origin included), then steps to the best-aligned neighbour when
    the turn is under 100 degrees and the node is new. The walk ends once
    ``u`` intersections have been counted, on a sharp turn or a revisit,
    or after 1000 iterations.
    """
    if u < 1:
        raise ValueError(f"visibility units must be >= 1, got {u}")
    graph.node(v_t)

    ids = [v_t]
    headings_in = [h_t]
    visited = {v_t}
    curr, h_curr = v_t, h_t
    n_intersections = 0
    iterations = 0
    while n_intersections < u and iterations < MAX_ITERATIONS:
        iterations += 1
        if graph.is_intersection(curr):
            n_intersections += 1
        nbrs = graph.neighbors_with_headings(curr)
        if not nbrs:
            break
        nxt, h_next = tie_break_neighbor(nbrs, h_curr)
        if angular_diff(h_curr, h_next) < MAX_TURN_DEG and nxt not in visited:
            ids.append(nxt)
            headings_in.append(h_next)
            visited.add(nxt)
            curr, h_curr = nxt, h_next
        else:
            break

    extra = _greedy_walk(graph, curr, h_curr, visited, LOOKAHEAD_NODES)
    all_ids = ids + [n for n, _ in extra]
    all_headings = headings_in + [h for _, h in extra]

    nodes = []
    for i, nid in enumerate(all_ids):
        to_next = None
        if i + 1 < len(all_ids):
            h = all_headings[i + 1]
            to_next = (h, relative_direction(h, all_headings[i])[1])
        is_int = graph.is_intersection(nid)
        nodes.append(
            PathNode(
                id=nid,
                kind=NodeKind.INTERSECTION if is_int else NodeKind.WAYPOINT,
                heading_in=all_headings[i],
                to_next=to_next,
                branches=_branches(graph, nid, all_headings[i], all_ids[i - 1] if i else None) if is_int else {},
            )
        )
    return VisibleArea(
        origin=v_t,
        origin_heading=h_t,
        path=tuple(nodes[: len(ids)]),
        lookahead=tuple(nodes[len(ids) :]),
        intersections_counted=n_intersections,
    )


def annotate_pois(graph: MapGraph, area: VisibleArea, grounded: Iterable["GroundedLandmark"]) -> VisibleArea:
    """Attach grounded-landmark POIs within 50 m to every area node.

    Directions are relative to each node's onward heading (its incoming
    heading when nothing follows it).
    """
    grounded = list(grounded)

    def sightings(node: PathNode) -> tuple[PoiSighting, ...]:
        pos = graph.position(node.id)
        found = []
        for gl in grounded:
            for pid in sorted(gl.pois):
                poi = graph.poi(pid)
                dist = haversine_distance(pos, poi.position)
                if dist > POI_MAX_DISTANCE_M:
                    continue
                if dist == 0.0:
                    b, direction = node.onward_heading, RelativeDirection.FORWARD
                else:
                    b = bearing(pos, poi.position)
                    direction = relative_direction(b, node.onward_heading)[1]
                found.append(PoiSighting(pid, gl.landmark.letter, direction, dist, b))
        found.sort(key=lambda s: (s.distance, s.poi_id))
        return tuple(found)

    def fix(nodes: tuple[PathNode, ...]) -> tuple[PathNode, ...]:
        return tuple(replace(n, nearby_pois=sightings(n)) for n in nodes)

    return replace(area, path=fix(area.path), lookahead=fix(area.lookahead))
