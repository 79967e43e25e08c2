"""The navigation loop: perceive, decide, move, and stop.

One *step* is one accepted policy decision. A decision that names a node
the agent cannot reach, or that cannot be parsed, is a *retry*: the agent
stays put and the retry counter for the active sub-goal goes up. The
counter resets whenever a sub-goal is completed.
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import random
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

from navjudge.encoders import RepresentationKind, encode
from navjudge.geo import bearing
from navjudge.instruction import (
    DEFAULT_TAU,
    PlanningState,
    Status,
    SubGoalPlan,
    advance,
    ground_landmarks,
    plan_from_mapping,
    single_goal_plan,
)
from navjudge.mapgraph import Instance
from navjudge.metrics import DEFAULT_THRESHOLD_M, TrajectoryScore, score
from navjudge.policy.base import (
    DecisionContext,
    InvalidNodeError,
    MalformedOutputError,
    Policy,
    PolicyDecision,
    TokenUsage,
)
from navjudge.visibility import VisibleArea, annotate_pois, construct_visible_area

logger = logging.getLogger(__name__)

Extractor = Callable[[Instance], "tuple[SubGoalPlan, TokenUsage]"]


class Termination(str, enum.Enum):
    PLAN_FINISHED = "PlanFinished"
    STEP_CAP = "StepCapExceeded"
    RETRY_CAP = "RetryCapExceeded"
    POLICY_FAILURE = "PolicyFailure"


@dataclass(frozen=True)
class EpisodeConfig:
    visibility_units: int = 2
    kind: RepresentationKind = RepresentationKind.OPTIMIZED_JSON
    max_steps: int = 100
    max_retries: int = 15
    seed: int = 0
    tau: float = DEFAULT_TAU
    threshold: float = DEFAULT_THRESHOLD_M

    def __post_init__(self) -> None:
        if self.visibility_units < 1 or self.max_steps < 1 or self.max_retries < 0:
            raise ValueError("visibility_units and max_steps must be positive, max_retries non-negative")
        object.__setattr__(self, "kind", RepresentationKind.parse(self.kind))

    def to_dict(self) -> dict[str, Any]:
        return {
            "visibility_units": self.visibility_units, "kind": self.kind.value, "max_steps": self.max_steps,
            "max_retries": self.max_retries, "seed": self.seed, "tau": self.tau, "threshold": self.threshold,
        }


@dataclass
class EpisodeResult:
    instance_id: str
    trajectory: list[str]
    termination: Termination
    steps: int
    retries: int
    score: TrajectoryScore
    log: list[dict[str, Any]] = field(default_factory=list)
    usage: TokenUsage = field(default_factory=TokenUsage)
    duration_s: float = 0.0
    error: str | None = None

    @property
    def final_node(self) -> str:
        return self.trajectory[-1]

    def to_record(self) -> dict[str, Any]:
        """The per-episode result line.

        The step log and the wall-clock duration are left out so that
        seeded reruns produce identical records.
        """
        return {
            "instance_id": self.instance_id,
            "trajectory": self.trajectory,
            "final_node": self.final_node,
            "termination": self.termination.value,
            "steps": self.steps,
            "retries": self.retries,
            "score": self.score.to_dict(),
            "usage": self.usage.to_dict(),
            "error": self.error,
        }


def derive_seed(base_seed: int, instance_id: str) -> int:
    """Per-episode seed that depends only on the base seed and the instance id."""
    digest = hashlib.sha256(f"{base_seed}\x1f{instance_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def area_digest(area: VisibleArea) -> str:
    blob = json.dumps(
        [[p.id, sorted((d.value, list(c)) for d, c in p.branches.items())] for p in area.nodes],
        separators=(",", ":"),
    )
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def resolve_plan(instance: Instance, plan: SubGoalPlan | None, extractor: Extractor | None) -> tuple[SubGoalPlan, TokenUsage]:
    """Explicit plan, then the instance's stored plan, then the extractor, then the whole instruction."""
    if plan is not None:
        return plan, TokenUsage()
    if instance.plan is not None:
        return plan_from_mapping(instance.plan), TokenUsage()
    if extractor is not None:
        return extractor(instance)
    return single_goal_plan(instance.instruction), TokenUsage()


class _Rejected(Exception):
    pass


def run_episode(
    instance: Instance,
    policy: Policy,
    cfg: EpisodeConfig = EpisodeConfig(),
    *,
    plan: SubGoalPlan | None = None,
    extractor: Extractor | None = None,
) -> EpisodeResult:
    """Run one instance to termination. Never raises for policy failures."""
    t0 = time.perf_counter()
    graph = instance.graph
    current = instance.start
    heading = instance.initial_heading
    trajectory = [current]
    log: list[dict[str, Any]] = []
    steps = retries = retries_total = 0
    memory: dict[str, Any] = {}
    rng = random.Random(derive_seed(cfg.seed, instance.instance_id))
    extraction_usage = TokenUsage()

    def finish(term: Termination, error: str | None = None) -> EpisodeResult:
        return EpisodeResult(
            instance_id=instance.instance_id,
            trajectory=trajectory,
            termination=term,
            steps=steps,
            retries=retries_total,
            score=score(trajectory, instance.route, graph, cfg.threshold),
            log=log,
            usage=extraction_usage + memory.get("usage", TokenUsage()),
            duration_s=time.perf_counter() - t0,
            error=error,
        )

    try:
        sub_plan, extraction_usage = resolve_plan(instance, plan, extractor)
        grounded = ground_landmarks(sub_plan.landmarks, graph, cfg.tau)
    except Exception as exc:  # extraction is a policy call; its failure ends the episode
        extraction_usage = getattr(exc, "usage", None) or TokenUsage()
        return finish(Termination.POLICY_FAILURE, f"plan extraction: {type(exc).__name__}: {exc}")
    state = PlanningState.start(sub_plan, grounded)

    while True:
        if state.finished:
            return finish(Termination.PLAN_FINISHED)
        if steps >= cfg.max_steps:
            return finish(Termination.STEP_CAP)

        area = annotate_pois(graph, construct_visible_area(graph, current, heading, cfg.visibility_units), grounded)
        snapshot = (area, tuple(trajectory), state)
        ctx = DecisionContext(
            instance=instance, state=state, area=area, kind=cfg.kind, current=current, heading=heading,
            trajectory=tuple(trajectory), step=steps, rng=rng, memory=memory,
            encoder=lambda s=snapshot: encode(
                cfg.kind, s[0], s[2].landmarks, s[2], graph=graph, trajectory=s[1],
                start_heading=instance.initial_heading, instance_id=instance.instance_id,
            ),
        )
        entry: dict[str, Any] = {
            "instance_id": instance.instance_id, "step": steps, "node": current, "heading": heading,
            "sub_goal": state.current_index, "area": area_digest(area),
        }
        try:
            decision = policy.decide(ctx)
            hops = _hops_for(decision, ctx)
        except (InvalidNodeError, MalformedOutputError, _Rejected) as exc:
            entry.update(outcome="retry", error=f"{type(exc).__name__}: {exc}", retry=retries)
            if retries >= cfg.max_retries:
                entry["outcome"] = "retry_cap"
                log.append(entry)
                return finish(Termination.RETRY_CAP, str(exc))
            retries += 1
            retries_total += 1
            entry["retry"] = retries
            log.append(entry)
            continue
        except Exception as exc:  # transport failures and policy bugs alike end the episode, not the batch
            entry.update(outcome="failure", error=f"{type(exc).__name__}: {exc}")
            log.append(entry)
            logger.warning("episode %s: policy failure: %s", instance.instance_id, exc)
            return finish(Termination.POLICY_FAILURE, f"{type(exc).__name__}: {exc}")

        for hop in hops:
            heading = bearing(graph.position(current), graph.position(hop))
            current = hop
            trajectory.append(hop)
        steps += 1
        state = advance(state, decision.status)
        if decision.status is Status.COMPLETED:
            retries = 0
        entry.update(
            outcome="complete" if decision.status is Status.COMPLETED else "move",
            status=decision.status.value, next_node=decision.next_node, hops=hops,
            heading_after=heading, retry=retries,
        )
        log.append(entry)


def _hops_for(decision: PolicyDecision, ctx: DecisionContext) -> list[str]:
    """Nodes to walk through to reach the decision's target.

    Adjacent targets are one hop; farther targets follow the visible
    area. Staying put is only meaningful when completing a sub-goal.
    """
    target = decision.next_node
    if decision.status not in (Status.COMPLETED, Status.IN_PROGRESS):
        raise _Rejected(f"status {decision.status} is not a decision")
    if target == ctx.current:
        if decision.status is Status.COMPLETED:
            return []
        raise _Rejected("IN_PROGRESS decision does not move the agent")
    if ctx.graph.has_edge(ctx.current, target):
        return [target]
    try:
        return ctx.area.route_to(target)
    except KeyError:
        raise _Rejected(f"node {target!r} is not reachable through the visible area") from None


def run_batch(
    instances: Sequence[Instance],
    policy: Policy,
    cfg: EpisodeConfig = EpisodeConfig(),
    *,
    parallelism: int = 1,
    plans: dict[str, SubGoalPlan] | None = None,
    extractor: Extractor | None = None,
    on_result: Callable[[EpisodeResult], None] | None = None,
) -> list[EpisodeResult]:
    """Run many episodes; results come back in input order.

    ``on_result`` is called from the calling thread as each result is
    collected, so it can write files without extra locking.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be positive")
    plans = plans or {}

    def one(inst: Instance) -> EpisodeResult:
        return run_episode(inst, policy, cfg, plan=plans.get(inst.instance_id), extractor=extractor)

    results: list[EpisodeResult] = []
    if parallelism == 1:
        for inst in instances:
            results.append(one(inst))
            if on_result:
                on_result(results[-1])
        return results
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        for res in pool.map(one, instances):
            results.append(res)
            if on_result:
                on_result(res)
    return results
