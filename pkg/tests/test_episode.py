import time
from dataclasses import dataclass, field, replace

import pytest

from navjudge.episode import (
    EpisodeConfig,
    Termination,
    derive_seed,
    run_batch,
    run_episode,
)
from navjudge.geo import bearing
from navjudge.instruction import Status, plan_from_mapping
from navjudge.policy import (
    InvalidNodeError,
    OraclePolicy,
    PolicyDecision,
    RandomWalker,
    TransportError,
)

FAST = EpisodeConfig(seed=7)


@dataclass
class Scripted:
    """Plays a fixed list of callables ``ctx -> PolicyDecision`` (or raises), then repeats the last."""

    script: list
    name: str = "scripted"
    seen: list = field(default_factory=list)

    def decide(self, ctx):
        self.seen.append(ctx)
        i = min(len(ctx.memory.setdefault("calls", [])), len(self.script) - 1)
        ctx.memory["calls"].append(i)
        return self.script[i](ctx)


def invalid(ctx):
    raise InvalidNodeError("zzzz")


def forward(ctx):
    return OraclePolicy().decide(ctx)


def stay_in_progress(ctx):
    return PolicyDecision(Status.IN_PROGRESS, ctx.current)


def bounce(ctx):
    """Back and forth between the start and its first route neighbour, forever IN_PROGRESS."""
    route = ctx.instance.route
    return PolicyDecision(Status.IN_PROGRESS, route[1] if ctx.current == route[0] else route[0])


def test_oracle_finishes_every_fixture_instance(city):
    results = run_batch(city, OraclePolicy(), FAST)
    for inst, res in zip(city, results):
        assert res.termination is Termination.PLAN_FINISHED, res.error
        assert res.trajectory == list(inst.route)
        assert res.score.sr == 1.0 and res.score.ne == 0.0 and res.score.ndtw == pytest.approx(1.0)


def test_step_cap_is_exactly_max_steps(city):
    res = run_episode(city[0], Scripted([bounce]), FAST)
    assert res.termination is Termination.STEP_CAP
    assert res.steps == 100
    assert len(res.trajectory) == 101
    res = run_episode(city[0], Scripted([bounce]), EpisodeConfig(max_steps=7))
    assert res.steps == 7


def test_retry_cap_after_sixteen_invalid_decisions(city):
    pol = Scripted([invalid])
    res = run_episode(city[0], pol, FAST)
    assert res.termination is Termination.RETRY_CAP
    assert len(pol.seen) == 16
    assert res.retries == 15
    assert res.steps == 0 and res.trajectory == [city[0].start]
    assert res.log[-1]["outcome"] == "retry_cap"


def test_fifteen_invalid_then_recovery(city):
    inst = city[0]
    pol = Scripted([invalid] * 15 + [forward])
    res = run_episode(inst, pol, FAST)
    assert res.termination is Termination.PLAN_FINISHED
    assert res.retries == 15


def test_in_progress_on_current_node_is_rejected(city):
    res = run_episode(city[0], Scripted([stay_in_progress]), FAST)
    assert res.termination is Termination.RETRY_CAP
    assert "does not move" in res.log[0]["error"]


def test_unreachable_target_is_a_retry(city):
    inst = max(city, key=lambda i: len(i.route))
    far = inst.route[-1]
    res = run_episode(inst, Scripted([lambda ctx: PolicyDecision(Status.IN_PROGRESS, far), forward]), FAST)
    assert res.log[0]["outcome"] == "retry"
    assert res.termination is Termination.PLAN_FINISHED


def test_completed_resets_retry_counter(city):
    inst = next(i for i in city if len(plan_from_mapping(i.plan).sub_goals) >= 3)
    plan = plan_from_mapping(inst.plan)
    n_goals = len(plan.sub_goals)

    def completed_in_place(ctx):
        return PolicyDecision(Status.COMPLETED, ctx.current)

    # 10 invalid, complete, 10 invalid, complete, ... never reaching the 16-invalid cap
    script = ([invalid] * 10 + [completed_in_place]) * n_goals
    res = run_episode(inst, Scripted(script), FAST, plan=plan)
    assert res.termination is Termination.PLAN_FINISHED
    assert res.retries == 10 * n_goals
    assert max(e["retry"] for e in res.log) == 10


def test_transport_failure_ends_only_that_episode(city):
    def boom(ctx):
        if ctx.instance.instance_id == city[1].instance_id:
            raise TransportError("endpoint down")
        return forward(ctx)

    results = run_batch(city[:4], Scripted([boom]), FAST, parallelism=3)
    assert [r.termination for r in results] == [
        Termination.PLAN_FINISHED, Termination.POLICY_FAILURE, Termination.PLAN_FINISHED, Termination.PLAN_FINISHED]
    assert "endpoint down" in results[1].error
    assert results[1].log[-1]["outcome"] == "failure"


def test_unexpected_exception_is_policy_failure(city):
    res = run_episode(city[0], Scripted([lambda ctx: 1 / 0]), FAST)
    assert res.termination is Termination.POLICY_FAILURE
    assert "ZeroDivisionError" in res.error


def test_multi_hop_jump_reconciles(city):
    inst = max(city, key=lambda i: len(i.route))

    def jump(ctx):
        i = ctx.trajectory.index(ctx.current)
        route = ctx.instance.route
        if i + 2 < len(route) and route[i + 2] in ctx.area.node_ids():
            try:
                ctx.area.route_to(route[i + 2])
            except KeyError:
                pass
            else:
                return PolicyDecision(Status.IN_PROGRESS, route[i + 2])
        return forward(ctx)

    res = run_episode(inst, Scripted([jump]), FAST)
    assert res.termination is Termination.PLAN_FINISHED
    assert res.trajectory == list(inst.route)
    assert any(len(e.get("hops", [])) > 1 for e in res.log)
    assert res.steps < len(inst.route) - 1


def check_invariants(inst, res):
    g = inst.graph
    # trajectory reconciles with the step log
    walked = [inst.start]
    heading = inst.initial_heading
    for e in res.log:
        assert e["node"] == walked[-1]
        assert e["heading"] == heading
        if e["outcome"] in ("move", "complete"):
            for hop in e["hops"]:
                assert g.has_edge(walked[-1], hop)
                heading = bearing(g.position(walked[-1]), g.position(hop))
                walked.append(hop)
            assert e["heading_after"] == heading
    assert walked == res.trajectory
    assert res.steps == sum(e["outcome"] in ("move", "complete") for e in res.log)
    assert res.retries == sum(e["outcome"] == "retry" for e in res.log)
    # retry counter resets on COMPLETED and never passes the cap
    running = 0
    for e in res.log:
        if e["outcome"] == "retry":
            running += 1
        elif e["outcome"] == "complete":
            running = 0
        assert e["retry"] == running
        assert running <= 15
    # sub-goal index only moves forward, one at a time
    indices = [e["sub_goal"] for e in res.log]
    assert all(b - a in (0, 1) for a, b in zip(indices, indices[1:]))


@pytest.mark.parametrize("policy", [OraclePolicy(), RandomWalker()], ids=["oracle", "random"])
def test_invariants_hold(city, policy):
    for inst, res in zip(city[:20], run_batch(city[:20], policy, FAST)):
        check_invariants(inst, res)


def test_batch_preserves_order_and_is_deterministic(city):
    serial = run_batch(city[:24], RandomWalker(), FAST)
    parallel = run_batch(city[:24], RandomWalker(), FAST, parallelism=6)
    assert [r.instance_id for r in parallel] == [i.instance_id for i in city[:24]]
    assert [r.to_record() for r in serial] == [r.to_record() for r in parallel]


def test_episode_independent_of_batch_company(city):
    alone = run_episode(city[9], RandomWalker(), FAST)
    batched = run_batch(city[5:12], RandomWalker(), FAST, parallelism=4)[4]
    assert alone.to_record() == batched.to_record()


def test_seed_derivation():
    assert derive_seed(0, "a") == derive_seed(0, "a")
    assert derive_seed(0, "a") != derive_seed(1, "a")
    assert derive_seed(0, "a") != derive_seed(0, "b")
    assert 0 <= derive_seed(123, "x") < 2**64


def test_on_result_callback_sees_every_episode(city):
    got = []
    run_batch(city[:6], OraclePolicy(), FAST, parallelism=3, on_result=got.append)
    assert sorted(r.instance_id for r in got) == sorted(i.instance_id for i in city[:6])


def test_plan_extraction_failure_is_policy_failure(city):
    bare = replace(city[0], plan=None)

    def extractor(instruction):
        raise TransportError("no endpoint")

    res = run_episode(bare, OraclePolicy(), FAST, extractor=extractor)
    assert res.termination is Termination.POLICY_FAILURE
    assert "plan extraction" in res.error


def test_step_capped_episode_is_fast(city):
    t0 = time.perf_counter()
    res = run_episode(city[0], Scripted([bounce]), FAST)
    assert res.steps == 100
    assert time.perf_counter() - t0 < 1.0


def test_config_validation():
    with pytest.raises(ValueError):
        EpisodeConfig(visibility_units=0)
    assert EpisodeConfig().to_dict()["kind"] == "optimized-json"
