"""Immutable street graph with points of interest, and dataset loading.

A dataset document is JSON of the form::

    {
      "graphs": {"<name>": {"nodes": [...], "edges": [...], "pois": [...]}},
      "instances": [
        {"id": "...", "instruction": "...", "graph": "<name>",
         "route": ["n1", "n2", ...], "initial_heading": 208.6},
        {"id": "...", "instruction": "...",
         "nodes": [{"id": "n1", "lat": 40.7, "lng": -73.9}, ...],
         "edges": [{"from": "n1", "to": "n2", "heading": 90.0}, ...],
         "pois": [{"id": "p1", "lat": ..., "lng": ..., "tags": {"name": "..."}}],
         "route": [...]}
      ]
    }

An instance either inlines ``nodes``/``edges``/``pois`` or names a shared
entry under ``graphs``. A bare JSON list of instances is also accepted.
Optional instance keys: ``initial_heading``, ``plan`` (a sub-goal plan in
the extraction output format), ``difficulty``. See ``docs/DATASET.md``.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from types import MappingProxyType
from typing import Any, Iterable, Mapping, Sequence

from navjudge.geo import CoincidentPointsError, GeoPoint, angular_diff, bearing, normalize_heading

logger = logging.getLogger(__name__)

HEADING_TOLERANCE_DEG = 0.5


class DatasetError(ValueError):
    """Base class for dataset loading failures."""


class DatasetSchemaError(DatasetError):
    pass


class DatasetIntegrityError(DatasetError):
    pass


class UnknownNodeError(KeyError):
    pass


@dataclass(frozen=True)
class GraphNode:
    id: str
    position: GeoPoint
    out_edges: tuple[tuple[str, float], ...] = ()


@dataclass(frozen=True)
class Poi:
    id: str
    position: GeoPoint
    tags: Mapping[str, str]

    @property
    def name(self) -> str:
        """Display name: the ``name`` tag, else the first descriptive tag value."""
        if self.tags.get("name"):
            return self.tags["name"]
        for key in ("amenity", "shop", "leisure", "tourism", "highway", "railway", "natural"):
            if self.tags.get(key):
                return self.tags[key]
        return next(iter(self.tags.values()))

    def match_texts(self) -> list[str]:
        """Strings a landmark name is matched against: every tag value plus the name."""
        values = [v for v in self.tags.values() if v]
        if self.name not in values:
            values.append(self.name)
        return values


class MapGraph:
    """Street graph ``(nodes, directed headed edges, POIs)``.

    Edge headings are always recomputed from node coordinates. The undirected
    neighbour set (out- and in-edges) defines node degree.
    """

    def __init__(self, nodes: Mapping[str, GraphNode], pois: Iterable[Poi] = ()):
        if not nodes:
            raise DatasetIntegrityError("graph has no nodes")
        self._nodes = MappingProxyType(dict(nodes))
        self._pois = tuple(pois)
        self._poi_index = MappingProxyType({p.id: p for p in self._pois})
        undirected: dict[str, set[str]] = {nid: set() for nid in self._nodes}
        for node in self._nodes.values():
            for target, _ in node.out_edges:
                if target not in self._nodes:
                    raise DatasetIntegrityError(f"edge {node.id}->{target}: unknown target node {target!r}")
                undirected[node.id].add(target)
                undirected[target].add(node.id)
        self._degree = MappingProxyType({nid: len(nbrs) for nid, nbrs in undirected.items()})

    @classmethod
    def from_records(
        cls,
        nodes: Sequence[Mapping[str, Any]],
        edges: Sequence[Mapping[str, Any]],
        pois: Sequence[Mapping[str, Any]] = (),
        *,
        context: str = "graph",
    ) -> "MapGraph":
        positions: dict[str, GeoPoint] = {}
        for i, rec in enumerate(nodes):
            nid = _require(rec, "id", str, f"{context}: nodes[{i}]")
            if not nid:
                raise DatasetSchemaError(f"{context}: nodes[{i}].id is empty")
            if nid in positions:
                raise DatasetIntegrityError(f"{context}: duplicate node id {nid!r}")
            positions[nid] = _point(rec, f"{context}: node {nid!r}")

        out: dict[str, dict[str, float]] = {nid: {} for nid in positions}
        for i, rec in enumerate(edges):
            where = f"{context}: edges[{i}]"
            src = _require(rec, "from", str, where)
            dst = _require(rec, "to", str, where)
            for end in (src, dst):
                if end not in positions:
                    raise DatasetIntegrityError(f"{where}: dangling edge, unknown node {end!r}")
            try:
                heading = bearing(positions[src], positions[dst])
            except CoincidentPointsError:
                raise DatasetIntegrityError(f"{where}: nodes {src!r} and {dst!r} share coordinates") from None
            given = rec.get("heading")
            if given is not None and angular_diff(float(given), heading) > HEADING_TOLERANCE_DEG:
                logger.warning(
                    "%s: file heading %.2f for %s->%s differs from computed %.2f; using computed",
                    where, float(given), src, dst, heading,
                )
            out[src][dst] = heading

        graph_nodes = {
            nid: GraphNode(nid, pos, tuple(sorted(out[nid].items())))
            for nid, pos in positions.items()
        }
        poi_objs = []
        for i, rec in enumerate(pois):
            where = f"{context}: pois[{i}]"
            pid = str(_require(rec, "id", (str, int), where))
            tags = rec.get("tags")
            if not isinstance(tags, Mapping) or not tags:
                raise DatasetSchemaError(f"{where}: field 'tags' must be a non-empty object")
            poi_objs.append(Poi(pid, _point(rec, where), MappingProxyType({str(k): str(v) for k, v in tags.items()})))
        return cls(graph_nodes, poi_objs)

    @property
    def nodes(self) -> Mapping[str, GraphNode]:
        return self._nodes

    @property
    def pois(self) -> tuple[Poi, ...]:
        return self._pois

    def poi(self, poi_id: str) -> Poi:
        return self._poi_index[poi_id]

    def __contains__(self, node_id: object) -> bool:
        return node_id in self._nodes

    def __len__(self) -> int:
        return len(self._nodes)

    def node(self, node_id: str) -> GraphNode:
        try:
            return self._nodes[node_id]
        except KeyError:
            raise UnknownNodeError(node_id) from None

    def position(self, node_id: str) -> GeoPoint:
        return self.node(node_id).position

    def degree(self, node_id: str) -> int:
        self.node(node_id)
        return self._degree[node_id]

    def is_intersection(self, node_id: str) -> bool:
        """True when the node branches: more than two distinct neighbours."""
        return self.degree(node_id) > 2

    def neighbors_with_headings(self, node_id: str) -> list[tuple[str, float]]:
        """Out-neighbours sorted by id, each with the edge bearing."""
        return list(self.node(node_id).out_edges)

    def has_edge(self, src: str, dst: str) -> bool:
        return any(t == dst for t, _ in self.node(src).out_edges)

    def edge_heading(self, src: str, dst: str) -> float:
        for target, heading in self.node(src).out_edges:
            if target == dst:
                return heading
        raise DatasetIntegrityError(f"no edge {src}->{dst}")


@dataclass(frozen=True)
class Instance:
    instance_id: str
    graph: MapGraph = field(repr=False)
    instruction: str
    route: tuple[str, ...]
    initial_heading: float
    plan: Mapping[str, Any] | None = field(default=None, repr=False)
    difficulty: str | None = None

    @property
    def start(self) -> str:
        return self.route[0]

    @property
    def goal(self) -> str:
        return self.route[-1]


def _require(rec: Mapping[str, Any], key: str, typ, where: str):
    if not isinstance(rec, Mapping):
        raise DatasetSchemaError(f"{where}: expected an object")
    if key not in rec:
        raise DatasetSchemaError(f"{where}: missing field {key!r}")
    value = rec[key]
    if not isinstance(value, typ) or isinstance(value, bool):
        raise DatasetSchemaError(f"{where}: field {key!r} has wrong type {type(value).__name__}")
    return value


def _point(rec: Mapping[str, Any], where: str) -> GeoPoint:
    lat = _require(rec, "lat", (int, float), where)
    lng = _require(rec, "lng", (int, float), where)
    try:
        return GeoPoint(float(lat), float(lng))
    except ValueError as exc:
        raise DatasetSchemaError(f"{where}: {exc}") from None


def parse_instance(rec: Mapping[str, Any], shared: Mapping[str, MapGraph]) -> Instance:
    raw_id = _require(rec, "id", (str, int), "instance")
    iid = str(raw_id)
    where = f"instance {iid!r}"
    instruction = _require(rec, "instruction", str, where)

    if "graph" in rec:
        name = _require(rec, "graph", str, where)
        if name not in shared:
            raise DatasetIntegrityError(f"{where}: unknown graph {name!r}")
        graph = shared[name]
    else:
        graph = MapGraph.from_records(
            _require(rec, "nodes", list, where),
            _require(rec, "edges", list, where),
            rec.get("pois", []),
            context=where,
        )

    route = _require(rec, "route", list, where)
    if len(route) < 2:
        raise DatasetIntegrityError(f"{where}: field 'route' needs at least 2 nodes")
    route = [str(v) for v in route]
    for v in route:
        if v not in graph:
            raise DatasetIntegrityError(f"{where}: route references unknown node {v!r}")
    for a, b in zip(route, route[1:]):
        if not graph.has_edge(a, b):
            raise DatasetIntegrityError(f"{where}: route step {a!r}->{b!r} is not an edge")

    heading = rec.get("initial_heading")
    if heading is None:
        heading = graph.edge_heading(route[0], route[1])
    elif not isinstance(heading, (int, float)) or isinstance(heading, bool):
        raise DatasetSchemaError(f"{where}: field 'initial_heading' has wrong type")

    plan = rec.get("plan")
    if plan is not None and not isinstance(plan, Mapping):
        raise DatasetSchemaError(f"{where}: field 'plan' must be an object")
    difficulty = rec.get("difficulty")
    return Instance(iid, graph, instruction, tuple(route), normalize_heading(float(heading)), plan,
                    None if difficulty is None else str(difficulty))


def load_instances(path: str | Path) -> list[Instance]:
    """Load and validate every instance in a dataset file, preserving order."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DatasetSchemaError(f"{path}: not valid JSON ({exc})") from None
    if isinstance(doc, list):
        doc = {"instances": doc}
    if not isinstance(doc, Mapping) or not isinstance(doc.get("instances"), list):
        raise DatasetSchemaError(f"{path}: missing field 'instances'")

    shared: dict[str, MapGraph] = {}
    graphs = doc.get("graphs", {})
    if not isinstance(graphs, Mapping):
        raise DatasetSchemaError(f"{path}: field 'graphs' must be an object")
    for name, g in graphs.items():
        where = f"graph {name!r}"
        shared[name] = MapGraph.from_records(
            _require(g, "nodes", list, where), _require(g, "edges", list, where), g.get("pois", []), context=where
        )

    instances = [parse_instance(rec, shared) for rec in doc["instances"]]
    seen: set[str] = set()
    for inst in instances:
        if inst.instance_id in seen:
            raise DatasetIntegrityError(f"duplicate instance id {inst.instance_id!r}")
        seen.add(inst.instance_id)
    return instances


def graph_to_records(graph: MapGraph) -> dict[str, list[dict[str, Any]]]:
    """Inverse of :meth:`MapGraph.from_records` (headings included for reference)."""
    return {
        "nodes": [{"id": n.id, "lat": n.position.lat, "lng": n.position.lng} for n in graph.nodes.values()],
        "edges": [
            {"from": n.id, "to": t, "heading": round(h, 3)}
            for n in graph.nodes.values()
            for t, h in n.out_edges
        ],
        "pois": [
            {"id": p.id, "lat": p.position.lat, "lng": p.position.lng, "tags": dict(p.tags)} for p in graph.pois
        ],
    }
