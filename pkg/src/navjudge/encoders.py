"""Serialize a visible area into prompt text.

Five representations are supported: a textual incident listing, a
structured JSON document, an optimized JSON variant (no coordinates, an
iteration counter on the active sub-goal), Graphviz-style arrow notation,
and an ASCII grid raster.
"""

from __future__ import annotations

import enum
import json
import logging
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Sequence

from navjudge.geo import (
    RelativeDirection,
    bearing,
    compass_word,
    heading_to_diagonal_offset,
    heading_to_grid_offset,
    relative_direction,
)
from navjudge.instruction import GroundedLandmark, PlanningState, render_planning_state
from navjudge.mapgraph import MapGraph
from navjudge.visibility import PathNode, PoiSighting, VisibleArea

logger = logging.getLogger(__name__)

PREVIOUS_PATH_LIMIT = 10
GRID_MAX_SIZE = 64
CORNER_POI_DISTANCE_M = 20.0
SHARED_CELL_DISTANCE_M = 5.0


class RepresentationKind(str, enum.Enum):
    TEXTUAL = "textual"
    STRUCTURED_JSON = "json"
    OPTIMIZED_JSON = "optimized-json"
    GRAPHVIZ = "graphviz"
    GRID = "grid"

    @classmethod
    def parse(cls, value: "str | RepresentationKind") -> "RepresentationKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(value.lower())
        except ValueError:
            raise ValueError(f"unknown representation {value!r}; choose from {[k.value for k in cls]}") from None


class GridOverflowError(ValueError):
    pass


# --- shared helpers -------------------------------------------------------


def _fmt_deg(h: float) -> str:
    return f"{h:.1f}°"


def _int_deg(h: float) -> int:
    return int(math.floor(h)) % 360


def _connections(graph: MapGraph, node: PathNode, previous: str | None) -> list[tuple[str, float, RelativeDirection]]:
    out = []
    for target, h in graph.neighbors_with_headings(node.id):
        if target == previous:
            continue
        out.append((target, h, relative_direction(h, node.heading_in)[1]))
    return out


def _previous_ids(area: VisibleArea) -> dict[str, str | None]:
    line = [p.id for p in area.nodes]
    return {nid: (line[i - 1] if i else None) for i, nid in enumerate(line)}


def _nearest_sightings(area: VisibleArea) -> list[tuple[PathNode, PoiSighting]]:
    best: dict[str, tuple[float, int, PathNode, PoiSighting]] = {}
    for order, node in enumerate(area.nodes):
        for s in node.nearby_pois:
            key = (s.distance, order)
            if s.poi_id not in best or key < best[s.poi_id][:2]:
                best[s.poi_id] = (s.distance, order, node, s)
    rows = sorted(best.values(), key=lambda r: ((r[3].landmark_letter or ""), r[0], r[3].poi_id))
    return [(r[2], r[3]) for r in rows]


def _letter_names(landmarks: Sequence[GroundedLandmark]) -> dict[str, str]:
    return {gl.landmark.letter: gl.landmark.name for gl in landmarks if gl.landmark.letter}


def _previous_path(graph: MapGraph, trajectory: Sequence[str], start_heading: float | None) -> list[dict[str, Any]]:
    entries = []
    for i in range(len(trajectory) - 1):
        a, b = trajectory[i], trajectory[i + 1]
        if a == b:
            continue
        h = graph.edge_heading(a, b)
        if i == 0:
            ref = start_heading if start_heading is not None else h
        else:
            prev = trajectory[i - 1]
            ref = graph.edge_heading(prev, a) if prev != a else h
        entries.append({
            "node_id": a,
            "to_next": {"direction": relative_direction(h, ref)[1].value, "heading": round(h, 1)},
        })
    return entries[-PREVIOUS_PATH_LIMIT:]


# --- textual --------------------------------------------------------------

_TEXT_DIR = {
    RelativeDirection.FORWARD: "ahead",
    RelativeDirection.LEFT: "to the left",
    RelativeDirection.RIGHT: "to the right",
    RelativeDirection.BACK: "behind",
}


def encode_textual(graph: MapGraph, area: VisibleArea, landmarks: Sequence[GroundedLandmark]) -> str:
    names = _letter_names(landmarks)
    lines = [
        f"Current position: Node {area.origin} (heading: {_fmt_deg(area.origin_heading)}, "
        f"{compass_word(area.origin_heading)})",
        "POI legend:",
    ]
    legend = [(node, s) for node, s in _nearest_sightings(area)]
    if legend:
        for node, s in legend:
            poi = graph.poi(s.poi_id)
            lines.append(f"  - {s.landmark_letter}: {names.get(s.landmark_letter, '?')} ({poi.name})")
    else:
        lines.append("  (none)")
    lines.append("")

    previous = _previous_ids(area)
    n_path = len(area.path)
    for i, node in enumerate(area.nodes):
        if i == n_path:
            lines.append("Lookahead (beyond the visible range):")
            lines.append("")
        label = "Intersection" if node.kind.value == "intersection" else "Node"
        marker = " (current position)" if i == 0 else ""
        lines.append(f"{label} {node.id}{marker}:")
        lines.append("  Connected to nodes:")
        conns = _connections(graph, node, previous[node.id])
        if not conns:
            lines.append("    (dead end)")
        for target, h, d in conns:
            lines.append(f"    - Node {target} is {_TEXT_DIR[d]} (heading: {_fmt_deg(h)}, {compass_word(h)})")
        if node.branches:
            lines.append("  Branches from this intersection:")
            for d, chain in node.branches.items():
                h = graph.edge_heading(node.id, chain[0])
                lines.append(f"    - {d.value} branch (heading: {_fmt_deg(h)}, {compass_word(h)}):")
                lines.append(f"      - Path: {' → '.join(chain)}")
        if node.nearby_pois:
            lines.append("  Nearby POIs:")
            for s in node.nearby_pois:
                lines.append(
                    f"    - {s.landmark_letter} ({graph.poi(s.poi_id).name}) is "
                    f"{s.distance:.1f} m {_TEXT_DIR[s.direction]}"
                )
        lines.append("")
    return "\n".join(lines).rstrip() + "\n"


# --- JSON -----------------------------------------------------------------


def _json_context(
    graph: MapGraph,
    area: VisibleArea,
    landmarks: Sequence[GroundedLandmark],
    state: PlanningState | None,
    trajectory: Sequence[str],
    start_heading: float | None,
    optimized: bool,
) -> dict[str, Any]:
    coords = not optimized
    names = _letter_names(landmarks)
    previous = _previous_ids(area)

    current: dict[str, Any] = {
        "node_id": area.origin,
        "heading": round(area.origin_heading, 1),
        "compass_direction": compass_word(area.origin_heading),
    }
    if coords:
        pos = graph.position(area.origin)
        current.update(lat=pos.lat, lng=pos.lng)

    def stub(node: PathNode) -> dict[str, Any]:
        entry: dict[str, Any] = {"node_id": node.id}
        if node.to_next is not None:
            entry["to_next"] = {"direction": node.to_next[1].value, "heading": round(node.to_next[0], 1)}
        return entry

    nodes = []
    for node in area.nodes:
        entry: dict[str, Any] = {
            "node_id": node.id,
            "type": node.kind.value,
            "heading": round(node.heading_in, 1),
        }
        if coords:
            pos = graph.position(node.id)
            entry.update(lat=pos.lat, lng=pos.lng)
        entry["connections"] = [
            {"target_node_id": t, "heading": round(h, 1), "direction": d.value}
            for t, h, d in _connections(graph, node, previous[node.id])
        ]
        if node.branches:
            entry["branches"] = {
                d.value: {"heading": round(graph.edge_heading(node.id, chain[0]), 1), "nodes": list(chain)}
                for d, chain in node.branches.items()
            }
        nodes.append(entry)

    pois = []
    for node, s in _nearest_sightings(area):
        pois.append({
            "letter": s.landmark_letter,
            "landmark": names.get(s.landmark_letter, ""),
            "name": graph.poi(s.poi_id).name,
            "poi_id": s.poi_id,
            "nearby_node_id": node.id,
            "direction": s.direction.value,
            "distance_m": round(s.distance, 1),
        })

    ctx: dict[str, Any] = {
        "current_position": current,
        "previous_path": _previous_path(graph, trajectory, start_heading),
        "current_path_nodes": [stub(n) for n in area.path],
        "lookahead_nodes": [stub(n) for n in area.lookahead],
        "nodes": nodes,
        "intersections": [n.id for n in area.nodes if n.kind.value == "intersection"],
        "pois": pois,
    }
    doc: dict[str, Any] = {"navigation_context": ctx}
    if state is not None:
        doc["planning_state"] = render_planning_state(state, with_iteration=optimized).splitlines()
    return doc


# --- Graphviz-style -------------------------------------------------------


def encode_graphviz(graph: MapGraph, area: VisibleArea, landmarks: Sequence[GroundedLandmark]) -> str:
    names = _letter_names(landmarks)
    previous = _previous_ids(area)
    lines = [
        f"// current position: {area.origin}, heading {_int_deg(area.origin_heading)}° "
        f"({compass_word(area.origin_heading)})"
    ]
    n_path = len(area.path)
    for i, node in enumerate(area.nodes):
        if i == n_path:
            lines.append("// lookahead")
        if node.kind.value == "intersection":
            lines.append("")
            for t, h, d in _connections(graph, node, previous[node.id]):
                lines.append(f"{node.id}[Intersection] -> {t} [heading: {_int_deg(h)}°, direction: {d.value}]")
            lines.append("")
        elif node.to_next is not None:
            nxt = area.nodes[i + 1].id
            h, d = node.to_next
            lines.append(f"{node.id} -> {nxt} [heading: {_int_deg(h)}°, direction: {d.value}]")

    branch_lines = []
    for node in area.nodes:
        for d, chain in node.branches.items():
            h = graph.edge_heading(node.id, chain[0])
            tail = " -> ".join(chain)
            branch_lines.append(f"{node.id} -{d.value}-> {tail} [heading: {_int_deg(h)}°, {compass_word(h)}]")
    if branch_lines:
        lines += ["Intersection Branches (extended nodes)"] + branch_lines + [""]

    poi_lines = []
    for node, s in _nearest_sightings(area):
        poi_lines.append(
            f"{node.id} -> {s.landmark_letter} [style: dashed, distance: {s.distance:.1f} m, "
            f"direction: {s.direction.value}, label: \"{names.get(s.landmark_letter, '')}: {graph.poi(s.poi_id).name}\"]"
        )
    if poi_lines:
        lines += ["POI Connections"] + poi_lines
    return "\n".join(lines).strip() + "\n"


# --- grid -----------------------------------------------------------------


@dataclass
class GridCanvas:
    cells: list[list[str]]
    legend: dict[str, str]
    origin_row_col: tuple[int, int]
    node_cells: dict[str, tuple[int, int]] = field(default_factory=dict)

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.cells), len(self.cells[0]) if self.cells else 0

    def to_text(self) -> str:
        lines = ["Grid map (north is up, row 0 is the northernmost row):"]
        lines += [" ".join(row) for row in self.cells]
        lines.append("Key: S = start, P = current position, 1 = visited, 2 = visible path, "
                     "3 = intersection, 0 = empty")
        if self.legend:
            lines.append("Landmarks: " + ", ".join(f"{k} = {v}" for k, v in sorted(self.legend.items())))
        lines.append("Node cells (row, col):")
        for nid, (r, c) in sorted(self.node_cells.items(), key=lambda kv: (kv[1], kv[0])):
            lines.append(f"  ({r}, {c}) {nid}")
        return "\n".join(lines) + "\n"


def _grid_edges(area: VisibleArea, trajectory: Sequence[str]) -> list[tuple[str, str]]:
    edges = list(zip(trajectory, trajectory[1:]))
    line = [p.id for p in area.nodes]
    edges += list(zip(line, line[1:]))
    for node in area.nodes:
        for chain in node.branches.values():
            seq = (node.id,) + chain
            edges += list(zip(seq, seq[1:]))
    return [(a, b) for a, b in edges if a != b]


def rasterize_grid(
    area: VisibleArea,
    trajectory_so_far: Sequence[str],
    landmarks: Sequence[GroundedLandmark],
    *,
    graph: MapGraph,
    max_size: int = GRID_MAX_SIZE,
    instance_id: str = "",
) -> GridCanvas:
    """Place trajectory and visible nodes on a north-up character grid.

    Coordinates come from a breadth-first walk from the start node, each
    node one cardinal step from its parent in the direction of the edge
    heading. A node landing on an occupied cell moves to a free neighbour
    of its parent; POIs take corner or side cells around their nearest
    node and never cover a node marker.
    """
    trajectory = list(trajectory_so_far) or [area.origin]
    if trajectory[-1] != area.origin:
        trajectory.append(area.origin)
    start, current = trajectory[0], area.origin

    adjacency: dict[str, list[str]] = {}
    for a, b in _grid_edges(area, trajectory):
        adjacency.setdefault(a, [])
        adjacency.setdefault(b, [])
        if b not in adjacency[a]:
            adjacency[a].append(b)
        if a not in adjacency[b]:
            adjacency[b].append(a)

    pos: dict[str, tuple[int, int]] = {start: (0, 0)}
    occupied: dict[tuple[int, int], str] = {(0, 0): start}
    queue = deque([start])
    while queue:
        parent = queue.popleft()
        pr, pc = pos[parent]
        for child in adjacency.get(parent, []):
            if child in pos:
                continue
            dr, dc = heading_to_grid_offset(bearing(graph.position(parent), graph.position(child)))
            cell = (pr + dr, pc + dc)
            if cell in occupied:
                for alt in ((dc, -dr), (-dc, dr), (-dr, -dc)):
                    cand = (pr + alt[0], pc + alt[1])
                    if cand not in occupied:
                        cell = cand
                        break
                else:
                    while cell in occupied:
                        cell = (cell[0] + dr, cell[1] + dc)
                logger.debug("grid collision for node %s; placed at %s", child, cell)
            pos[child] = cell
            occupied[cell] = child
            queue.append(child)

    ahead = {p.id for p in area.nodes[1:]} | {n for p in area.nodes for ch in p.branches.values() for n in ch}
    marks: dict[tuple[int, int], str] = {}
    for nid, cell in pos.items():
        if nid == current:
            mark = "P"
        elif nid == start:
            mark = "S"
        elif nid in ahead:
            mark = "3" if graph.is_intersection(nid) else "2"
        else:
            mark = "1"
        marks[cell] = mark

    names = _letter_names(landmarks)
    legend: dict[str, str] = {}
    for node, s in _nearest_sightings(area):
        letter = s.landmark_letter
        if not letter or node.id not in pos:
            continue
        nr, nc = pos[node.id]
        candidates: list[tuple[int, int]] = []
        if graph.is_intersection(node.id) and s.distance <= CORNER_POI_DISTANCE_M:
            candidates.append(heading_to_diagonal_offset(s.bearing))
        elif s.distance < SHARED_CELL_DISTANCE_M:
            candidates.append((0, 0))
        candidates.append(heading_to_grid_offset(s.bearing))
        ring = [(-1, 0), (-1, 1), (0, 1), (1, 1), (1, 0), (1, -1), (0, -1), (-1, -1)]
        ring.sort(key=lambda o: (abs(relative_direction(math.degrees(math.atan2(o[1], -o[0])) % 360, s.bearing)[0]), o))
        candidates += ring
        placed = False
        for dr, dc in candidates:
            cell = (nr + dr, nc + dc)
            existing = marks.get(cell)
            if existing is None:
                marks[cell] = letter
                placed = True
                break
            if existing == letter:
                placed = True
                break
        if placed:
            legend[letter] = names.get(letter, letter)
        else:
            logger.warning("no free grid cell for POI %s (%s); dropped", s.poi_id, letter)

    rows = [r for r, _ in marks]
    cols = [c for _, c in marks]
    r0, c0 = min(rows), min(cols)
    height, width = max(rows) - r0 + 1, max(cols) - c0 + 1
    if height > max_size or width > max_size:
        raise GridOverflowError(
            f"instance {instance_id or '?'}: grid {height}x{width} exceeds the {max_size}x{max_size} limit"
        )
    cells = [["0"] * width for _ in range(height)]
    for (r, c), m in marks.items():
        cells[r - r0][c - c0] = m
    node_cells = {nid: (r - r0, c - c0) for nid, (r, c) in pos.items()}
    return GridCanvas(cells, legend, (pos[start][0] - r0, pos[start][1] - c0), node_cells)


# --- dispatch -------------------------------------------------------------


def encode(
    kind: RepresentationKind | str,
    area: VisibleArea,
    landmarks: Sequence[GroundedLandmark],
    state: PlanningState | None,
    *,
    graph: MapGraph,
    trajectory: Sequence[str] = (),
    start_heading: float | None = None,
    instance_id: str = "",
) -> str:
    """Render ``area`` in the requested representation. Output is deterministic."""
    kind = RepresentationKind.parse(kind)
    if kind is RepresentationKind.TEXTUAL:
        return encode_textual(graph, area, landmarks)
    if kind is RepresentationKind.GRAPHVIZ:
        return encode_graphviz(graph, area, landmarks)
    if kind is RepresentationKind.GRID:
        return rasterize_grid(area, trajectory, landmarks, graph=graph, instance_id=instance_id).to_text()
    doc = _json_context(
        graph, area, landmarks, state, list(trajectory) or [area.origin], start_heading,
        optimized=kind is RepresentationKind.OPTIMIZED_JSON,
    )
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"
