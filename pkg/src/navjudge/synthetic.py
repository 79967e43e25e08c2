"""Synthetic street lattices and route instructions for tests and demos.

The generated city is a rectangular block grid. Optionally each block
gets a mid-block waypoint, so corridors contain non-intersection nodes
like real street graphs do. Node ids are short hex strings.
"""

from __future__ import annotations

import hashlib
import math
import random
from dataclasses import dataclass
from typing import Any, Sequence

from navjudge.geo import GeoPoint, RelativeDirection, haversine_distance, relative_direction
from navjudge.mapgraph import Instance, MapGraph, Poi, graph_to_records

METERS_PER_DEG_LAT = 111_195.0

# (name, tag key, tag value, landmark category)
POI_CATALOG: tuple[tuple[str, str, str, str], ...] = (
    ("Starbucks", "amenity", "cafe", "amenity"),
    ("Chase Bank", "amenity", "bank", "amenity"),
    ("Duane Reade", "shop", "chemist", "shop"),
    ("McDonald's", "amenity", "fast_food", "amenity"),
    ("Whole Foods Market", "shop", "supermarket", "shop"),
    ("Bryant Park", "leisure", "park", "natural"),
    ("St. Patrick's Cathedral", "amenity", "place_of_worship", "amenity"),
    ("Subway Station", "railway", "subway_entrance", "transit"),
    ("Public Library", "amenity", "library", "amenity"),
    ("Hilton Hotel", "tourism", "hotel", "amenity"),
    ("Shell", "amenity", "fuel", "amenity"),
    ("CVS Pharmacy", "amenity", "pharmacy", "shop"),
    ("Joe's Pizza", "amenity", "restaurant", "amenity"),
    ("Post Office", "amenity", "post_office", "amenity"),
    ("Apple Store", "shop", "electronics", "shop"),
    ("Fire Station", "amenity", "fire_station", "amenity"),
)


def _hex_id(seed: int, *parts: Any, taken: set[str]) -> str:
    salt = 0
    while True:
        h = hashlib.sha1(f"{seed}:{parts}:{salt}".encode()).hexdigest()[:4]
        if h not in taken:
            taken.add(h)
            return h
        salt += 1


def offset_point(p: GeoPoint, north_m: float, east_m: float) -> GeoPoint:
    """Point displaced by small metric offsets (flat-earth approximation)."""
    return GeoPoint(
        p.lat + north_m / METERS_PER_DEG_LAT,
        p.lng + east_m / (METERS_PER_DEG_LAT * math.cos(math.radians(p.lat))),
    )


@dataclass(frozen=True)
class Lattice:
    """A generated block grid with the id of the node at each corner."""

    graph: MapGraph
    corners: tuple[tuple[str, ...], ...]

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.corners), len(self.corners[0])


def make_lattice(
    rows: int,
    cols: int,
    *,
    spacing_m: float = 80.0,
    origin: GeoPoint = GeoPoint(40.7500, -73.9900),
    waypoints: bool = False,
    n_pois: int = 0,
    jitter_m: float = 0.0,
    seed: int = 0,
) -> Lattice:
    """Build a ``rows x cols`` block grid; row 0 is the northern edge.

    ``waypoints`` adds one mid-block node per street segment. ``jitter_m``
    perturbs node positions so headings are not exactly axis-aligned.
    POIs are scattered near random corners with catalog tags.
    """
    if rows < 1 or cols < 1:
        raise ValueError("lattice needs at least one row and column")
    rng = random.Random(seed)
    taken: set[str] = set()
    pos: dict[str, GeoPoint] = {}
    corners = []
    for r in range(rows):
        row = []
        for c in range(cols):
            nid = _hex_id(seed, "c", r, c, taken=taken)
            j_n = rng.uniform(-jitter_m, jitter_m) if jitter_m else 0.0
            j_e = rng.uniform(-jitter_m, jitter_m) if jitter_m else 0.0
            pos[nid] = offset_point(origin, -r * spacing_m + j_n, c * spacing_m + j_e)
            row.append(nid)
        corners.append(tuple(row))

    edges: list[tuple[str, str]] = []

    def street(a: str, b: str, tag: tuple) -> None:
        if waypoints:
            mid = _hex_id(seed, "w", *tag, taken=taken)
            pa, pb = pos[a], pos[b]
            pos[mid] = GeoPoint((pa.lat + pb.lat) / 2, (pa.lng + pb.lng) / 2)
            edges.extend([(a, mid), (mid, b)])
        else:
            edges.append((a, b))

    for r in range(rows):
        for c in range(cols):
            if c + 1 < cols:
                street(corners[r][c], corners[r][c + 1], ("h", r, c))
            if r + 1 < rows:
                street(corners[r][c], corners[r + 1][c], ("v", r, c))

    node_recs = [{"id": k, "lat": p.lat, "lng": p.lng} for k, p in pos.items()]
    edge_recs = []
    for a, b in edges:
        edge_recs += [{"from": a, "to": b}, {"from": b, "to": a}]

    poi_recs = []
    all_corners = [n for row in corners for n in row]
    for i in range(n_pois):
        name, key, value, _ = POI_CATALOG[i % len(POI_CATALOG)]
        anchor = pos[rng.choice(all_corners)]
        dist = rng.uniform(6.0, 30.0)
        ang = rng.uniform(0, 2 * math.pi)
        p = offset_point(anchor, dist * math.cos(ang), dist * math.sin(ang))
        poi_recs.append({"id": f"poi{i:03d}", "lat": p.lat, "lng": p.lng, "tags": {"name": name, key: value}})

    graph = MapGraph.from_records(node_recs, edge_recs, poi_recs, context="synthetic lattice")
    return Lattice(graph, tuple(corners))


# --- instances ------------------------------------------------------------


def _category(poi: Poi) -> str:
    for name, key, value, cat in POI_CATALOG:
        if poi.tags.get(key) == value:
            return cat
    return "unknown"


def _nearest_poi(graph: MapGraph, node: str, max_m: float, exclude: set[str]) -> Poi | None:
    best = None
    for poi in graph.pois:
        if poi.id in exclude or poi.name in {graph.poi(e).name for e in exclude}:
            continue
        d = haversine_distance(graph.position(node), poi.position)
        if d <= max_m and (best is None or d < best[0]):
            best = (d, poi)
    return best[1] if best else None


_BLOCKS = {1: "one block", 2: "two blocks", 3: "three blocks", 4: "four blocks", 5: "five blocks"}


def random_route(
    graph: MapGraph, rng: random.Random, *, n_turns: int, max_run: int = 3
) -> tuple[list[str], list[tuple[str, int, str]]] | None:
    """A route of straight runs joined by turns at intersections.

    Returns the node route and its segments as ``(turn, blocks, end)``,
    where ``turn`` is ``"start"``, ``"left"`` or ``"right"``. ``None`` when
    the walk ran into the edge of the map.
    """
    nodes = sorted(n for n in graph.nodes if graph.is_intersection(n))
    start = rng.choice(nodes)
    _, heading = rng.choice(graph.neighbors_with_headings(start))
    route = [start]
    segments: list[tuple[str, int, str]] = []
    turn = "start"
    cur, h = start, heading
    for seg in range(n_turns + 1):
        want = rng.randint(1, max_run)
        blocks = 0
        while blocks < want:
            # follow the street to the next intersection
            options = [(n, hh) for n, hh in graph.neighbors_with_headings(cur) if n not in route[-2:-1]]
            aligned = [(n, hh) for n, hh in options if relative_direction(hh, h)[1] is RelativeDirection.FORWARD]
            if not aligned:
                break
            cur, h = min(aligned, key=lambda x: (abs(relative_direction(x[1], h)[0]), x[0]))
            if cur in route:
                return None
            route.append(cur)
            if graph.is_intersection(cur):
                blocks += 1
        if blocks == 0:
            return None
        segments.append((turn, blocks, cur))
        if seg == n_turns:
            break
        turn = rng.choice(("left", "right"))
        want_dir = RelativeDirection.LEFT if turn == "left" else RelativeDirection.RIGHT
        opts = [(n, hh) for n, hh in graph.neighbors_with_headings(cur) if relative_direction(hh, h)[1] is want_dir]
        if not opts:
            return None
        h = min(opts, key=lambda x: x[0])[1]
    return route, segments


def describe_route(
    graph: MapGraph, segments: Sequence[tuple[str, int, str]], rng: random.Random
) -> tuple[str, dict[str, Any]]:
    """Instruction text and a matching sub-goal plan for a segmented route."""
    sentences: list[str] = []
    sub_goals: list[dict[str, str]] = []
    landmarks: list[dict[str, str]] = []
    used: set[str] = set()
    for i, (turn, blocks, end) in enumerate(segments):
        span = _BLOCKS.get(blocks, f"{blocks} blocks")
        last = i == len(segments) - 1
        poi = _nearest_poi(graph, end, 30.0, used) if rng.random() < 0.8 else None
        lm_phrase = ""
        if poi is not None:
            used.add(poi.id)
            lm_phrase = poi.name
            landmarks.append({"name": poi.name, "category": _category(poi)})
        if turn == "start":
            verb = rng.choice(("Walk straight", "Go straight", "Head forward", "Continue straight"))
            s = f"{verb} for {span}"
            action = "MOVE_FORWARD"
        else:
            s = f"Turn {turn} and walk {span}"
            action = "TURN_LEFT" if turn == "left" else "TURN_RIGHT"
        if last:
            s += f" and stop at {lm_phrase}" if lm_phrase else " and stop at the corner"
        elif lm_phrase:
            s += f" until you reach {lm_phrase}"
        sentences.append(s + ".")
        sub_goals.append({"description": s, "action": action, "status": "TODO"})
    return " ".join(sentences), {"landmarks": landmarks, "sub_goals": sub_goals}


def generate_instances(
    lattice: Lattice,
    n: int,
    *,
    seed: int = 0,
    graph_name: str = "city",
    turns: tuple[int, int] = (0, 3),
    id_prefix: str = "syn",
) -> list[dict[str, Any]]:
    """Instance records (dataset-file form) over a shared lattice graph."""
    rng = random.Random(seed)
    graph = lattice.graph
    out: list[dict[str, Any]] = []
    attempts = 0
    while len(out) < n:
        attempts += 1
        if attempts > 200 * n:
            raise RuntimeError("could not generate enough routes; lattice too small")
        k = rng.randint(*turns)
        found = random_route(graph, rng, n_turns=k)
        if found is None:
            continue
        route, segments = found
        text, plan = describe_route(graph, segments, rng)
        out.append({
            "id": f"{id_prefix}-{len(out):04d}",
            "instruction": text,
            "graph": graph_name,
            "route": route,
            "plan": plan,
            "difficulty": ("easy", "medium", "hard")[min(len(segments) - 1, 2)],
        })
    return out


def dataset_document(lattice: Lattice, instances: list[dict[str, Any]], graph_name: str = "city") -> dict[str, Any]:
    return {"graphs": {graph_name: graph_to_records(lattice.graph)}, "instances": instances}


def build_instances(lattice: Lattice, records: list[dict[str, Any]], graph_name: str = "city") -> list[Instance]:
    """Turn generated records into :class:`Instance` objects without a file round-trip."""
    from navjudge.mapgraph import parse_instance

    return [parse_instance(r, {graph_name: lattice.graph}) for r in records]
