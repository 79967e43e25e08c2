"""Convert a Touchdown-style graph plus route/instruction records to our dataset format.

Expected inputs (all plain text, as in the Touchdown/Map2Seq releases):

* ``nodes.txt``: ``node_id,heading,lat,lng`` per line (the heading column is ignored)
* ``links.txt``: ``from_id,heading,to_id`` per line (headings are recomputed from coordinates)
* instances: JSON lines, one route per line, with an id, the instruction
  text, the list of route node ids and optionally a start heading
* POIs (optional): JSON lines ``{"id", "lat", "lng", "tags": {...}}``

Field names of the instance records are configurable because the
upstream releases are not consistent about them.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterator

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class InstanceFields:
    id: str = "id"
    instruction: str = "navigation_text"
    route: str = "route_panoids"
    start_heading: str = "start_heading"


def _rows(path: Path) -> Iterator[list[str]]:
    with path.open(newline="", encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if row and not row[0].startswith("#"):
                yield [c.strip() for c in row]


def _jsonl(path: Path) -> Iterator[dict[str, Any]]:
    with path.open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                yield json.loads(line)


def convert(
    nodes_path: str | Path,
    links_path: str | Path,
    instances_path: str | Path,
    pois_path: str | Path | None = None,
    *,
    fields: InstanceFields = InstanceFields(),
    graph_name: str = "map",
    keep_start_heading: bool = True,
) -> dict[str, Any]:
    """Build a dataset document with one shared graph.

    Duplicate links and links between coincident positions are dropped.
    Links touching unknown nodes are skipped with a warning rather than
    failing, since the public graph files contain a few. Route validity is left to the loader.
    """
    nodes = []
    coords: dict[str, tuple[float, float]] = {}
    for row in _rows(Path(nodes_path)):
        nid, _heading, lat, lng = row[:4]
        if nid in coords:
            continue
        coords[nid] = (float(lat), float(lng))
        nodes.append({"id": nid, "lat": float(lat), "lng": float(lng)})

    edges = []
    seen: set[tuple[str, str]] = set()
    skipped = 0
    for row in _rows(Path(links_path)):
        src, _heading, dst = row[:3]
        if src not in coords or dst not in coords:
            skipped += 1
            continue
        if (src, dst) in seen or coords[src] == coords[dst]:
            continue
        seen.add((src, dst))
        edges.append({"from": src, "to": dst})
    if skipped:
        logger.warning("skipped %d links with unknown endpoints", skipped)

    pois = list(_jsonl(Path(pois_path))) if pois_path else []

    instances = []
    for rec in _jsonl(Path(instances_path)):
        out: dict[str, Any] = {
            "id": str(rec[fields.id]),
            "instruction": str(rec[fields.instruction]),
            "graph": graph_name,
            "route": [str(v) for v in rec[fields.route]],
        }
        if keep_start_heading and rec.get(fields.start_heading) is not None:
            out["initial_heading"] = float(rec[fields.start_heading])
        instances.append(out)

    return {"graphs": {graph_name: {"nodes": nodes, "edges": edges, "pois": pois}}, "instances": instances}
