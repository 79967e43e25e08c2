"""
Walking a synthetic city
========================

A tour of the pieces an episode is built from: a street graph, what the
agent can see from one corner, how that view is written out for a model,
and how finished walks are scored. Everything here runs offline.

Run with ``python demos/01_walk_a_city.py``.
"""

# %%
# A small Manhattan-style grid with mid-block waypoints and a handful of
# named shops. Route instructions are generated from the same graph, so
# every instance comes with a reference route and a sub-goal plan.
from navjudge.synthetic import build_instances, generate_instances, make_lattice

city = make_lattice(6, 6, waypoints=True, n_pois=18, jitter_m=2.0, seed=11)
records = generate_instances(city, 30, seed=11, turns=(1, 3))
instances = build_instances(city, records)

graph = city.graph
print(f"{len(graph.nodes)} nodes, {len(graph.pois)} POIs, {len(instances)} instances")

inst = max(instances, key=lambda i: len(i.route))
print(inst.instruction)
print("reference route:", " -> ".join(inst.route))

# %%
# What the agent sees. From the current node it looks along its heading,
# follows the straightest street until it has passed ``u`` intersections,
# and notes side branches and nearby POIs on the way.
from navjudge.instruction import PlanningState, ground_landmarks, plan_from_mapping
from navjudge.visibility import annotate_pois, construct_visible_area

plan = plan_from_mapping(inst.plan)
grounded = ground_landmarks(plan.landmarks, graph, 80)
for gl in grounded:
    print(f"{gl.landmark.letter}: {gl.landmark.name!r} matched {len(gl.pois)} POI(s), best score {gl.best_score:.0f}")

start, heading = inst.start, inst.initial_heading
area = annotate_pois(graph, construct_visible_area(graph, start, heading, 2), grounded)
print("visible line:", [p.id for p in area.path], "+ lookahead", [p.id for p in area.lookahead])

# %%
# The same view as a model would get it. The grid is the most compact;
# the optimized JSON form is what the language-model policy uses by default.
from navjudge.encoders import encode

state = PlanningState.start(plan, grounded)
print(encode("grid", area, grounded, state, graph=graph, trajectory=[start]))
print(encode("textual", area, grounded, state, graph=graph))

# %%
# Whole episodes. The oracle replays the reference route and should score
# perfectly; the random walker and the keyword heuristic are the usual
# floor. All three share one seeded configuration.
from navjudge.episode import EpisodeConfig, run_batch
from navjudge.instruction import single_goal_plan
from navjudge.metrics import aggregate, format_report
from navjudge.policy import HeuristicAgent, OraclePolicy, RandomWalker

cfg = EpisodeConfig(seed=0)
single = {i.instance_id: single_goal_plan(i.instruction) for i in instances}
tags = [i.difficulty for i in instances]

for policy, plans in ((OraclePolicy(), None), (RandomWalker(), single), (HeuristicAgent(), single)):
    results = run_batch(instances, policy, cfg, plans=plans, parallelism=4)
    print(format_report(aggregate([r.score for r in results], tags), title=policy.name))
    print()
