"""Sub-goal plans, landmark grounding, and fuzzy string similarity."""

from __future__ import annotations

import enum
import functools
import json
import re
from dataclasses import dataclass, replace
from typing import Any, Iterable, Mapping, Sequence

from navjudge.mapgraph import MapGraph

DEFAULT_TAU = 80.0
MAX_LANDMARKS = 26


class Action(str, enum.Enum):
    MOVE_FORWARD = "MOVE_FORWARD"
    TURN_LEFT = "TURN_LEFT"
    TURN_RIGHT = "TURN_RIGHT"


class Status(str, enum.Enum):
    TODO = "TODO"
    IN_PROGRESS = "IN_PROGRESS"
    COMPLETED = "COMPLETED"


class MalformedResponseError(ValueError):
    """A model response that does not follow the requested output format."""

    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


@dataclass(frozen=True)
class SubGoal:
    index: int
    description: str
    action: Action
    status: Status = Status.TODO
    iteration: int = 0


@dataclass(frozen=True)
class Landmark:
    name: str
    category: str = "unknown"
    letter: str | None = None

    def __post_init__(self) -> None:
        if not self.name.strip():
            raise ValueError("landmark name is empty")


@dataclass(frozen=True)
class GroundedLandmark:
    landmark: Landmark
    pois: frozenset[str] = frozenset()
    best_score: float = 0.0


@dataclass(frozen=True)
class SubGoalPlan:
    sub_goals: tuple[SubGoal, ...]
    landmarks: tuple[Landmark, ...] = ()


@dataclass(frozen=True)
class PlanningState:
    sub_goals: tuple[SubGoal, ...]
    landmarks: tuple[GroundedLandmark, ...] = ()
    current_index: int = 1

    @classmethod
    def start(cls, plan: SubGoalPlan, landmarks: Sequence[GroundedLandmark] = ()) -> "PlanningState":
        goals = [replace(g, status=Status.TODO, iteration=0) for g in plan.sub_goals]
        goals[0] = replace(goals[0], status=Status.IN_PROGRESS, iteration=1)
        return cls(tuple(goals), tuple(landmarks), 1)

    @property
    def finished(self) -> bool:
        return self.current_index > len(self.sub_goals)

    @property
    def current(self) -> SubGoal | None:
        return None if self.finished else self.sub_goals[self.current_index - 1]


def advance(state: PlanningState, decision_status: Status) -> PlanningState:
    """Apply a policy's sub-goal status to the plan.

    ``COMPLETED`` closes the active sub-goal and opens the next one at
    iteration 1; ``IN_PROGRESS`` bumps the active sub-goal's iteration.
    Advancing a finished plan is a no-op.
    """
    if state.finished:
        return state
    k = state.current_index - 1
    goals = list(state.sub_goals)
    if decision_status is Status.COMPLETED:
        goals[k] = replace(goals[k], status=Status.COMPLETED)
        if k + 1 < len(goals):
            goals[k + 1] = replace(goals[k + 1], status=Status.IN_PROGRESS, iteration=1)
        return replace(state, sub_goals=tuple(goals), current_index=state.current_index + 1)
    if decision_status is Status.IN_PROGRESS:
        goals[k] = replace(goals[k], iteration=goals[k].iteration + 1)
        return replace(state, sub_goals=tuple(goals))
    raise ValueError(f"cannot advance with status {decision_status}")


def render_planning_state(state: PlanningState, *, with_iteration: bool = True) -> str:
    lines = []
    for g in state.sub_goals:
        tag = g.status.value
        if g.status is Status.IN_PROGRESS and with_iteration:
            tag = f"{tag}, Iteration {g.iteration}"
        lines.append(f"{g.index}. {g.description} ({tag})")
    return "\n".join(lines)


# --- fuzzy matching -------------------------------------------------------

_WS = re.compile(r"\s+")


def normalize_text(s: str) -> str:
    return _WS.sub(" ", s.casefold()).strip()


def _lcs_length(a: str, b: str) -> int:
    """Longest common subsequence length, bit-parallel over ``a`` (Hyyrö 2004)."""
    masks: dict[str, int] = {}
    for i, ch in enumerate(a):
        masks[ch] = masks.get(ch, 0) | (1 << i)
    full = (1 << len(a)) - 1
    v = full
    for ch in b:
        u = v & masks.get(ch, 0)
        v = ((v + u) | (v - u)) & full
    return len(a) - bin(v).count("1")


def partial_ratio(a: str, b: str) -> float:
    """Best normalized indel similarity of the shorter string against
    every equal-length window of the longer one, scaled to ``[0, 100]``.

    Inputs are casefolded and whitespace-collapsed first.
    """
    a, b = normalize_text(a), normalize_text(b)
    if not a or not b:
        raise ValueError("partial_ratio needs two non-empty strings")
    return _partial_ratio_normalized(a, b) if len(a) <= len(b) else _partial_ratio_normalized(b, a)


@functools.lru_cache(maxsize=1 << 16)
def _partial_ratio_normalized(short: str, long_: str) -> float:
    # grounding compares a handful of landmark names against many repeated tag values
    n = len(short)
    if short in long_:
        return 100.0
    best = 0
    for start in range(len(long_) - n + 1):
        best = max(best, _lcs_length(short, long_[start : start + n]))
        if best == n:
            break
    # indel distance for equal lengths is 2 * (n - lcs)
    return 100.0 * best / n


def ground_landmarks(
    landmarks: Sequence[Landmark], graph: MapGraph, tau: float = DEFAULT_TAU
) -> list[GroundedLandmark]:
    """Match each landmark to the POIs whose best tag similarity exceeds ``tau``."""
    lettered = assign_landmark_letters(landmarks)
    out = []
    for lm in lettered:
        pois = set()
        best = 0.0
        for poi in graph.pois:
            score = max(partial_ratio(lm.name, text) for text in poi.match_texts())
            best = max(best, score)
            if score > tau:
                pois.add(poi.id)
        out.append(GroundedLandmark(lm, frozenset(pois), best))
    return out


def assign_landmark_letters(landmarks: Sequence[Landmark]) -> list[Landmark]:
    if len(landmarks) > MAX_LANDMARKS:
        raise ValueError(f"{len(landmarks)} landmarks exceed the {MAX_LANDMARKS}-letter alphabet")
    return [replace(lm, letter=chr(ord("A") + i)) for i, lm in enumerate(landmarks)]


# --- parsing extraction output -------------------------------------------

_FENCE = re.compile(r"```(?:json)?\s*(.*?)```", re.S)


def extract_json_object(text: str) -> Any:
    """Pull the first JSON object out of a model response (fences allowed)."""
    m = _FENCE.search(text)
    candidate = m.group(1) if m else text
    start = candidate.find("{")
    if start < 0:
        raise MalformedResponseError("no JSON object in response", text)
    try:
        obj, _ = json.JSONDecoder().raw_decode(candidate[start:])
    except json.JSONDecodeError as exc:
        raise MalformedResponseError(f"invalid JSON: {exc}", text) from None
    return obj


def _landmark_from(item: Any, raw: str) -> Landmark:
    if isinstance(item, str):
        name, category = item, "unknown"
    elif isinstance(item, Mapping):
        name = item.get("name") or item.get("landmark")
        category = item.get("category") or item.get("type") or "unknown"
    else:
        raise MalformedResponseError(f"landmark entry has unexpected type {type(item).__name__}", raw)
    if not isinstance(name, str) or not name.strip():
        raise MalformedResponseError("landmark without a name", raw)
    return Landmark(name.strip(), str(category))


def plan_from_mapping(obj: Mapping[str, Any], raw: str = "") -> SubGoalPlan:
    raw = raw or json.dumps(obj)
    if not isinstance(obj, Mapping):
        raise MalformedResponseError("response is not a JSON object", raw)
    goals_raw = obj.get("sub_goals")
    if not isinstance(goals_raw, list):
        raise MalformedResponseError("missing field 'sub_goals'", raw)
    if not goals_raw:
        raise MalformedResponseError("field 'sub_goals' is empty", raw)
    goals = []
    for i, g in enumerate(goals_raw, start=1):
        if not isinstance(g, Mapping):
            raise MalformedResponseError(f"sub_goals[{i - 1}] is not an object", raw)
        verb = str(g.get("action", "")).strip().upper()
        try:
            action = Action(verb)
        except ValueError:
            raise MalformedResponseError(f"unknown action verb {g.get('action')!r}", raw) from None
        desc = g.get("description") or g.get("instruction") or g.get("text") or verb
        goals.append(SubGoal(i, str(desc), action))
    seen: dict[str, Landmark] = {}
    for item in obj.get("landmarks", []) or []:
        lm = _landmark_from(item, raw)
        seen.setdefault(normalize_text(lm.name), lm)
    return SubGoalPlan(tuple(goals), tuple(seen.values()))


def parse_plan(extraction_response: str) -> SubGoalPlan:
    """Parse the structured sub-goal/landmark output of the extraction call."""
    return plan_from_mapping(extract_json_object(extraction_response), extraction_response)


def plan_to_mapping(plan: SubGoalPlan) -> dict[str, Any]:
    return {
        "landmarks": [{"name": lm.name, "category": lm.category} for lm in plan.landmarks],
        "sub_goals": [
            {"description": g.description, "action": g.action.value, "status": Status.TODO.value}
            for g in plan.sub_goals
        ],
    }


def single_goal_plan(instruction: str, landmarks: Iterable[Landmark] = ()) -> SubGoalPlan:
    """Whole instruction as one sub-goal; used by instruction-agnostic policies."""
    return SubGoalPlan((SubGoal(1, instruction.strip() or "Follow the route", Action.MOVE_FORWARD),), tuple(landmarks))


_SENTENCE = re.compile(r"(?<=[.!?])\s+")


def sentence_split_plan(instruction: str, landmarks: Iterable[Landmark] = ()) -> SubGoalPlan:
    """Rule-based plan: one sub-goal per sentence, action guessed from keywords."""
    goals = []
    for sentence in _SENTENCE.split(instruction.strip()):
        sentence = sentence.strip()
        if not sentence:
            continue
        low = sentence.lower()
        left, right = low.find("left"), low.find("right")
        if left >= 0 and (right < 0 or left < right):
            action = Action.TURN_LEFT
        elif right >= 0:
            action = Action.TURN_RIGHT
        else:
            action = Action.MOVE_FORWARD
        goals.append(SubGoal(len(goals) + 1, sentence, action))
    if not goals:
        return single_goal_plan(instruction, landmarks)
    return SubGoalPlan(tuple(goals), tuple(landmarks))
