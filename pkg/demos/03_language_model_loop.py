"""
The language-model loop without a language model
================================================

The navigator policy talks to a chat-completions endpoint. For a dry run
we plug in a stand-in that reads the prompt, finds its own position in
the JSON context and answers like a cautious model that always takes one
hop forward. The exchange is recorded, then replayed with no endpoint at
all, and the two runs must agree exactly.
"""

# %%
import json
import re
import tempfile
from pathlib import Path

from navjudge.episode import EpisodeConfig, run_batch
from navjudge.policy import FunctionClient, LLMPolicy, RecordingClient, ReplayClient
from navjudge.synthetic import build_instances, generate_instances, make_lattice

city = make_lattice(5, 5, n_pois=10, seed=4)
instances = build_instances(city, generate_instances(city, 6, seed=4, turns=(0, 1)))
by_text = {i.instruction: i for i in instances}

# %%
# The stand-in "model". It walks the reference route one node at a time
# and declares the last sub-goal COMPLETED on arrival. Once in a while it
# names a node it cannot see, which the episode loop treats as a retry.
CONTEXT = re.compile(r"format\):\n(.*?)\n\nHow to answer", re.S)
DIRECTIONS = re.compile(r"Directions:\n(.*?)\n\n", re.S)
calls = {"n": 0}


def stand_in(request):
    calls["n"] += 1
    prompt = request.messages[-1][1]
    inst = by_text[DIRECTIONS.search(prompt).group(1).strip()]
    if calls["n"] % 7 == 0:
        return json.dumps({"SubPlan_Status": "IN_PROGRESS", "Next_Place": "nowhere"})
    ctx = json.loads(CONTEXT.search(prompt).group(1))["navigation_context"]
    here = ctx["current_position"]["node_id"]
    i = inst.route.index(here)
    if i == len(inst.route) - 1:
        return json.dumps({"SubPlan_Status": "COMPLETED", "Next_Place": here})
    nxt = inst.route[i + 1]
    status = "COMPLETED" if nxt == inst.route[-1] and "Active step: 1." in prompt else "IN_PROGRESS"
    return json.dumps({"SubPlan_Status": status, "Next_Place": nxt})


# %%
# Record, then replay. Single-goal plans keep the stand-in simple; the
# stored multi-step plans would work the same way.
from navjudge.instruction import single_goal_plan

plans = {i.instance_id: single_goal_plan(i.instruction) for i in instances}
cfg = EpisodeConfig(seed=1)
transcript = Path(tempfile.mkdtemp()) / "transcript.jsonl"

live = LLMPolicy(RecordingClient(FunctionClient(stand_in), transcript), "stand-in")
first = run_batch(instances, live, cfg, plans=plans)
replay = LLMPolicy(ReplayClient(transcript), "stand-in")
second = run_batch(instances, replay, cfg, plans=plans)

for a, b in zip(first, second):
    same = a.to_record() == b.to_record()
    print(f"{a.instance_id}: {a.termination.value:<14} steps={a.steps:<3} retries={a.retries:<2} "
          f"SR={a.score.sr} replay identical={same}")
print(f"{calls['n']} stand-in calls recorded, {sum(1 for _ in transcript.open())} transcript lines")
