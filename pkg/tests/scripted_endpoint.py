"""A scripted stand-in for a chat model, for tests and fixture recording.

It reads the rendered prompts the way a model would, looks up the
reference route of the instruction it was given, and answers along that
route. Faults can be injected per instruction to drive the retry paths.
"""

from __future__ import annotations

import json
import re
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Sequence

from navjudge.mapgraph import Instance
from navjudge.policy.base import TokenUsage
from navjudge.policy.chat import ChatRequest, ChatResponse

MODEL = "scripted-navigator"

_DIRECTIONS = re.compile(r"Directions:\n(.*?)\n\n", re.S)
_CONTEXT = re.compile(r"format\):\n(.*?)\n\nHow to answer", re.S)
_ACTIVE = re.compile(r"Active step: (\d+)\.")
_PLAN_LINE = re.compile(r"^(\d+)\. ", re.M)


@dataclass
class ScriptedEndpoint:
    """Route-following chat stub.

    ``faults`` maps an instance id to a list of fault kinds consumed one
    per navigator call: ``"malformed"``, ``"invalid"``, ``"fenced"`` (a
    valid answer wrapped in a code fence) or ``"ok"``. Instances listed
    in ``extraction_faults`` get an unparseable first extraction reply.
    """

    instances: Sequence[Instance]
    faults: dict[str, list[str]] = field(default_factory=dict)
    extraction_faults: set[str] = field(default_factory=set)
    jump: bool = True
    calls: int = 0

    def __post_init__(self) -> None:
        self._by_text = {i.instruction.strip(): i for i in self.instances}
        self._fault_cursor: dict[str, int] = defaultdict(int)
        self._extraction_seen: set[str] = set()

    def _usage(self, prompt: str, answer: str) -> TokenUsage:
        p = len(prompt) // 4
        thoughts = 40 + len(prompt) % 97
        return TokenUsage(p, thoughts, p + thoughts + len(answer) // 4)

    def __call__(self, request: ChatRequest) -> ChatResponse:
        self.calls += 1
        prompt = request.messages[-1][1]
        m = _DIRECTIONS.search(prompt)
        inst = self._by_text[m.group(1).strip()]
        if '"sub_goals"' in prompt and "Plan progress:" not in prompt:
            answer = self._extract(inst)
        else:
            answer = self._navigate(inst, prompt)
        return ChatResponse(answer, self._usage(prompt, answer))

    def _extract(self, inst: Instance) -> str:
        if inst.instance_id in self.extraction_faults and inst.instance_id not in self._extraction_seen:
            self._extraction_seen.add(inst.instance_id)
            return "Here is the plan: first walk, then turn."
        return json.dumps(inst.plan)

    def _navigate(self, inst: Instance, prompt: str) -> str:
        kinds = self.faults.get(inst.instance_id, [])
        k = self._fault_cursor[inst.instance_id]
        self._fault_cursor[inst.instance_id] += 1
        fault = kinds[k] if k < len(kinds) else "ok"
        if fault == "malformed":
            return "I think we should keep walking north for a while."
        if fault == "invalid":
            return json.dumps({"SubPlan_Status": "IN_PROGRESS", "Next_Place": "zzzz"})

        ctx = json.loads(_CONTEXT.search(prompt).group(1))["navigation_context"]
        current = ctx["current_position"]["node_id"]
        line = [n["node_id"] for n in ctx["current_path_nodes"]]
        route = list(inst.route)
        idx = route.index(current)
        active = int(_ACTIVE.search(prompt).group(1))
        last_goal = active == max(int(x) for x in _PLAN_LINE.findall(prompt))

        if idx == len(route) - 1:
            decision = {"SubPlan_Status": "COMPLETED", "Next_Place": current}
        else:
            target = route[idx + 1]
            if self.jump and idx + 2 < len(route) and line[1:3] == route[idx + 1 : idx + 3]:
                target = route[idx + 2]
            status = "COMPLETED" if last_goal and target == route[-1] else "IN_PROGRESS"
            decision = {"SubPlan_Status": status, "Next_Place": target}
        text = json.dumps(decision)
        return f"```json\n{text}\n```" if fault == "fenced" else text
