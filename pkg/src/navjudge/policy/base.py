"""Types shared by every policy."""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Callable, Protocol

from navjudge.encoders import RepresentationKind
from navjudge.instruction import PlanningState, Status
from navjudge.mapgraph import Instance, MapGraph
from navjudge.visibility import VisibleArea


class PolicyError(Exception):
    """Base class for decisions that could not be produced."""

    usage: "TokenUsage | None" = None


class InvalidNodeError(PolicyError):
    """The policy named a node that was not presented to it."""


class MalformedOutputError(PolicyError):
    """The policy's raw output could not be parsed."""

    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


class TransportError(PolicyError):
    """The model endpoint could not be reached (after retries)."""


@dataclass(frozen=True)
class PolicyDecision:
    status: Status
    next_node: str


@dataclass(frozen=True)
class TokenUsage:
    prompt_tokens: int = 0
    thoughts_tokens: int = 0
    total_tokens: int = 0

    def __add__(self, other: "TokenUsage") -> "TokenUsage":
        return TokenUsage(
            self.prompt_tokens + other.prompt_tokens,
            self.thoughts_tokens + other.thoughts_tokens,
            self.total_tokens + other.total_tokens,
        )

    def to_dict(self) -> dict[str, int]:
        return {
            "prompt_tokens": self.prompt_tokens,
            "thoughts_tokens": self.thoughts_tokens,
            "total_tokens": self.total_tokens,
        }


@dataclass
class DecisionContext:
    """Everything a policy may look at for one decision.

    ``rng`` and ``memory`` belong to the episode, so policies themselves
    hold no per-episode state and can be shared across threads.
    """

    instance: Instance
    state: PlanningState
    area: VisibleArea
    kind: RepresentationKind
    current: str
    heading: float
    trajectory: tuple[str, ...]
    step: int
    rng: random.Random
    memory: dict[str, Any] = field(default_factory=dict)
    encoder: Callable[[], str] | None = field(default=None, repr=False)

    @property
    def graph(self) -> MapGraph:
        return self.instance.graph

    @property
    def instruction(self) -> str:
        return self.instance.instruction

    @property
    def previous(self) -> str | None:
        return self.trajectory[-2] if len(self.trajectory) > 1 else None

    @cached_property
    def encoded(self) -> str:
        if self.encoder is None:
            raise RuntimeError("no encoder attached to this context")
        return self.encoder()

    def presented_nodes(self) -> set[str]:
        """Ids a decision may legally name: the visible area plus the current node's neighbours."""
        ids = self.area.node_ids()
        ids.update(n for n, _ in self.graph.neighbors_with_headings(self.current))
        return ids


class Policy(Protocol):
    name: str

    def decide(self, ctx: DecisionContext) -> PolicyDecision: ...
