"""Trajectory scores, their aggregation, and correlation against ratings.

Distances are haversine metres throughout. nDTW follows the usual
definition ``exp(-DTW(agent, reference) / (len(reference) * threshold))``
with the symmetric unit-weight step pattern, so identical trajectories
score exactly 1.
"""

from __future__ import annotations

import math
import random
from dataclasses import asdict, dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats

from navjudge.geo import EARTH_RADIUS_M, GeoPoint, haversine_distance
from navjudge.mapgraph import MapGraph

DEFAULT_THRESHOLD_M = 25.0


@dataclass(frozen=True)
class TrajectoryScore:
    ne: float
    sr: int
    osr: int
    ndtw: float
    sdtw: float

    def to_dict(self) -> dict[str, float]:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping[str, float]) -> "TrajectoryScore":
        return cls(float(d["ne"]), int(d["sr"]), int(d["osr"]), float(d["ndtw"]), float(d["sdtw"]))


def _coords(points: Sequence[GeoPoint]) -> np.ndarray:
    return np.radians(np.array([[p.lat, p.lng] for p in points], dtype=float))


def pairwise_haversine(a: Sequence[GeoPoint], b: Sequence[GeoPoint]) -> np.ndarray:
    """``len(a) x len(b)`` matrix of haversine distances in metres."""
    pa, pb = _coords(a), _coords(b)
    lat1, lng1 = pa[:, 0:1], pa[:, 1:2]
    lat2, lng2 = pb[None, :, 0], pb[None, :, 1]
    h = np.sin((lat2 - lat1) / 2) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin((lng2 - lng1) / 2) ** 2
    return 2 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def dtw(a: Sequence[GeoPoint], b: Sequence[GeoPoint]) -> float:
    """Dynamic time warping cost with match/insert/delete steps of unit weight."""
    if not a or not b:
        raise ValueError("DTW needs two non-empty sequences")
    cost = pairwise_haversine(a, b)
    n, m = cost.shape
    acc = np.full((n + 1, m + 1), np.inf)
    acc[0, 0] = 0.0
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            acc[i, j] = cost[i - 1, j - 1] + min(acc[i - 1, j], acc[i, j - 1], acc[i - 1, j - 1])
    return float(acc[n, m])


def ndtw(agent: Sequence[GeoPoint], reference: Sequence[GeoPoint], threshold: float = DEFAULT_THRESHOLD_M) -> float:
    return math.exp(-dtw(agent, reference) / (len(reference) * threshold))


def score(
    agent_traj: Sequence[str],
    gt_traj: Sequence[str],
    graph: MapGraph,
    threshold: float = DEFAULT_THRESHOLD_M,
) -> TrajectoryScore:
    """Score one trajectory against the reference route.

    Success is inclusive: a final position exactly ``threshold`` metres
    from the goal counts.
    """
    if not agent_traj or not gt_traj:
        raise ValueError("trajectories must be non-empty")
    agent = [graph.position(n) for n in agent_traj]
    ref = [graph.position(n) for n in gt_traj]
    goal = ref[-1]
    ne = haversine_distance(agent[-1], goal)
    sr = int(ne <= threshold)
    osr = int(min(haversine_distance(p, goal) for p in agent) <= threshold)
    nd = ndtw(agent, ref, threshold)
    return TrajectoryScore(ne, sr, osr, nd, sr * nd)


# --- aggregation ----------------------------------------------------------

METRIC_COLUMNS = ("ne", "sr", "osr", "ndtw", "sdtw")


@dataclass(frozen=True)
class AggregateReport:
    n: int
    ne: float
    sr: float
    osr: float
    ndtw: float
    sdtw: float
    by_tag: dict[str, "AggregateReport"] = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in ("n",) + METRIC_COLUMNS}
        if self.by_tag:
            out["by_tag"] = {t: r.to_dict() for t, r in self.by_tag.items()}
        return out


def aggregate(scores: Sequence[TrajectoryScore], tags: Sequence[str | None] | None = None) -> AggregateReport:
    """Means over episodes; SR and OSR as percentages. Tagged subsets get their own report."""
    if not scores:
        raise ValueError("cannot aggregate an empty score list")
    if tags is not None and len(tags) != len(scores):
        raise ValueError("tags and scores differ in length")
    n = len(scores)
    by_tag: dict[str, AggregateReport] = {}
    if tags is not None:
        groups: dict[str, list[TrajectoryScore]] = {}
        for s, t in zip(scores, tags):
            if t is not None:
                groups.setdefault(t, []).append(s)
        by_tag = {t: aggregate(g) for t, g in sorted(groups.items())}
    return AggregateReport(
        n=n,
        ne=math.fsum(s.ne for s in scores) / n,
        sr=100.0 * sum(s.sr for s in scores) / n,
        osr=100.0 * sum(s.osr for s in scores) / n,
        ndtw=math.fsum(s.ndtw for s in scores) / n,
        sdtw=math.fsum(s.sdtw for s in scores) / n,
        by_tag=by_tag,
    )


def format_report(report: AggregateReport, columns: Iterable[str] = METRIC_COLUMNS, title: str = "") -> str:
    """Aligned text table: one row overall plus one per tag."""
    columns = tuple(columns)
    headers = ["subset", "n"] + [c.upper() if c in ("ne", "sr", "osr") else {"ndtw": "nDTW", "sdtw": "SDTW"}[c] for c in columns]

    def row(name: str, r: AggregateReport) -> list[str]:
        cells = [name, str(r.n)]
        for c in columns:
            v = getattr(r, c)
            cells.append(f"{v:.1f}" if c in ("ne", "sr", "osr") else f"{v:.3f}")
        return cells

    rows = [row("all", report)] + [row(t, r) for t, r in report.by_tag.items()]
    widths = [max(len(x) for x in col) for col in zip(headers, *rows)]
    fmt = lambda cells: "  ".join(c.rjust(w) if i else c.ljust(w) for i, (c, w) in enumerate(zip(cells, widths)))  # noqa: E731
    lines = [title] if title else []
    lines += [fmt(headers), "  ".join("-" * w for w in widths)] + [fmt(r) for r in rows]
    return "\n".join(lines)


# --- correlation ----------------------------------------------------------


class ConstantInputError(ValueError):
    """Correlation is undefined when one input has zero variance."""


def rankdata_mid(x: Sequence[float]) -> np.ndarray:
    """1-based ranks; tied values share the mean of the ranks they span."""
    arr = np.asarray(x, dtype=float)
    order = np.argsort(arr, kind="mergesort")
    ranks = np.empty(len(arr), dtype=float)
    sorted_vals = arr[order]
    i = 0
    while i < len(arr):
        j = i
        while j + 1 < len(arr) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    a = np.asarray(x, dtype=float)
    b = np.asarray(y, dtype=float)
    if a.shape != b.shape:
        raise ValueError("inputs differ in length")
    da, db = a - a.mean(), b - b.mean()
    sa, sb = math.sqrt(float(da @ da)), math.sqrt(float(db @ db))
    if sa == 0.0 or sb == 0.0:
        raise ConstantInputError("correlation undefined for a constant input")
    return max(-1.0, min(1.0, float(da @ db) / (sa * sb)))


def t_test_p(r: float, n: int) -> float:
    """Two-sided p-value of ``r`` from the t distribution with ``n - 2`` degrees of freedom."""
    if abs(r) >= 1.0:
        return 0.0
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return float(2.0 * stats.t.sf(abs(t), n - 2))


def permutation_p(x: Sequence[float], y: Sequence[float], r: float, permutations: int, seed: int) -> float:
    rng = random.Random(seed)
    ys = list(y)
    hits = 0
    for _ in range(permutations):
        rng.shuffle(ys)
        if abs(pearson(x, ys)) >= abs(r) - 1e-12:
            hits += 1
    return (hits + 1) / (permutations + 1)


@dataclass(frozen=True)
class CorrelationResult:
    n: int
    pearson_r: float
    pearson_p: float
    spearman_rho: float
    spearman_p: float

    def to_dict(self) -> dict[str, float]:
        return asdict(self)


def correlate(
    metric_values: Sequence[float],
    ratings: Sequence[float],
    *,
    method: str = "t",
    permutations: int = 10_000,
    seed: int = 0,
) -> CorrelationResult:
    """Pearson and Spearman correlation with two-sided p-values.

    ``method="t"`` uses the t approximation; ``"permutation"`` shuffles
    the ratings ``permutations`` times with a fixed seed instead.
    """
    if len(metric_values) != len(ratings):
        raise ValueError("inputs differ in length")
    n = len(metric_values)
    if n < 3:
        raise ValueError("need at least 3 paired values")
    r = pearson(metric_values, ratings)
    rx, ry = rankdata_mid(metric_values), rankdata_mid(ratings)
    rho = pearson(rx, ry)
    if method == "t":
        return CorrelationResult(n, r, t_test_p(r, n), rho, t_test_p(rho, n))
    if method == "permutation":
        return CorrelationResult(
            n, r, permutation_p(metric_values, ratings, r, permutations, seed),
            rho, permutation_p(rx, ry, rho, permutations, seed),
        )
    raise ValueError(f"unknown p-value method {method!r}")
