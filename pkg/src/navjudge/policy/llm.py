"""Language-model policy and the plan-extraction call."""

from __future__ import annotations

import logging
from importlib import resources
from pathlib import Path
from string import Template
from typing import Any, Mapping

from navjudge.instruction import (
    MalformedResponseError,
    PlanningState,
    Status,
    SubGoalPlan,
    extract_json_object,
    parse_plan,
    render_planning_state,
)
from navjudge.policy.base import (
    DecisionContext,
    InvalidNodeError,
    MalformedOutputError,
    PolicyDecision,
    TokenUsage,
)
from navjudge.policy.chat import ChatClient, ChatRequest

logger = logging.getLogger(__name__)


def load_template(name_or_path: str | Path) -> Template:
    """A bundled template by name (``"navigator"``) or a template file path."""
    path = Path(name_or_path)
    if path.suffix == ".txt" and path.exists():
        return Template(path.read_text(encoding="utf-8"))
    text = resources.files("navjudge").joinpath("prompts", f"{name_or_path}.txt").read_text(encoding="utf-8")
    return Template(text)


def _landmark_block(state: PlanningState) -> str:
    if not state.landmarks:
        return "(none)"
    lines = []
    for gl in state.landmarks:
        lm = gl.landmark
        found = "on map" if gl.pois else "not found on map"
        lines.append(f"{lm.letter}: {lm.name} ({lm.category}, {found})")
    return "\n".join(lines)


def render_navigator_prompt(template: Template, ctx: DecisionContext) -> str:
    state = ctx.state
    current = state.current
    return template.substitute(
        instruction=ctx.instruction,
        current_sub_goal=f"{current.index}. {current.description} [{current.action.value}]" if current else "(none)",
        sub_goal_state=f"{current.status.value}, Iteration {current.iteration}" if current else "finished",
        landmarks=_landmark_block(state),
        representation=ctx.kind.value,
        navigation_context=ctx.encoded,
        planning_state=render_planning_state(state),
    )


def _field(obj: Mapping[str, Any], *names: str) -> Any:
    lowered = {str(k).lower(): v for k, v in obj.items()}
    for n in names:
        if n.lower() in lowered:
            return lowered[n.lower()]
    return None


def parse_decision(text: str) -> PolicyDecision:
    """Read ``SubPlan_Status`` and ``Next_Place`` from a navigator reply."""
    try:
        obj = extract_json_object(text)
    except MalformedResponseError as exc:
        raise MalformedOutputError(str(exc), text) from None
    if not isinstance(obj, Mapping):
        raise MalformedOutputError("reply is not a JSON object", text)
    status_raw = _field(obj, "SubPlan_Status", "status")
    node = _field(obj, "Next_Place", "next_node")
    try:
        status = Status(str(status_raw).strip().upper())
    except ValueError:
        raise MalformedOutputError(f"unusable SubPlan_Status {status_raw!r}", text) from None
    if status is Status.TODO:
        raise MalformedOutputError("SubPlan_Status TODO is not a decision", text)
    if node is None or not str(node).strip():
        raise MalformedOutputError("missing Next_Place", text)
    return PolicyDecision(status, str(node).strip())


class LLMPolicy:
    """Asks a chat model for the next sub-goal status and target node.

    Bad replies are raised rather than retried here; the episode loop
    counts them against its retry budget. Token usage accumulates in
    ``ctx.memory["usage"]``, including for failed calls.
    """

    name = "llm"

    def __init__(
        self,
        client: ChatClient,
        model: str,
        template: Template | str | Path | None = None,
        *,
        temperature: float = 1.0,
        reasoning_effort: str | None = None,
    ):
        self.client = client
        self.model = model
        self.template = template if isinstance(template, Template) else load_template(template or "navigator")
        self.temperature = temperature
        self.reasoning_effort = reasoning_effort

    def llm_decide(self, ctx: DecisionContext) -> tuple[PolicyDecision, TokenUsage]:
        prompt = render_navigator_prompt(self.template, ctx)
        request = ChatRequest(self.model, (("user", prompt),), self.temperature, self.reasoning_effort)
        response = self.client.complete(request)
        try:
            decision = parse_decision(response.content)
            if decision.next_node not in ctx.presented_nodes():
                raise InvalidNodeError(f"node {decision.next_node!r} was not in the presented area")
        except (MalformedOutputError, InvalidNodeError) as exc:
            exc.usage = response.usage
            raise
        return decision, response.usage

    def decide(self, ctx: DecisionContext) -> PolicyDecision:
        try:
            decision, usage = self.llm_decide(ctx)
        except (MalformedOutputError, InvalidNodeError) as exc:
            ctx.memory["usage"] = ctx.memory.get("usage", TokenUsage()) + (exc.usage or TokenUsage())
            raise
        ctx.memory["usage"] = ctx.memory.get("usage", TokenUsage()) + usage
        return decision


def extract_plan(
    client: ChatClient,
    instruction: str,
    model: str,
    template: Template | str | Path | None = None,
    *,
    attempts: int = 3,
    temperature: float = 1.0,
    reasoning_effort: str | None = None,
) -> tuple[SubGoalPlan, TokenUsage]:
    """Run the extraction prompt, re-asking on malformed replies."""
    tpl = template if isinstance(template, Template) else load_template(template or "extraction")
    request = ChatRequest(model, (("user", tpl.substitute(instruction=instruction)),), temperature, reasoning_effort)
    usage = TokenUsage()
    last: MalformedResponseError | None = None
    for attempt in range(attempts):
        response = client.complete(request)
        usage = usage + response.usage
        try:
            return parse_plan(response.content), usage
        except MalformedResponseError as exc:
            logger.info("extraction reply %d unusable: %s", attempt + 1, exc)
            last = exc
    assert last is not None
    err = MalformedOutputError(f"extraction failed after {attempts} attempts: {last}", last.raw)
    err.usage = usage
    raise err
