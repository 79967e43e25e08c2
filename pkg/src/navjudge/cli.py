"""Command-line entry point: ``navjudge run | score | encode | fit-sampling | convert | synth``."""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import sys
import threading
from collections import Counter
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from navjudge.encoders import RepresentationKind
from navjudge.episode import EpisodeConfig, EpisodeResult, run_batch, run_episode
from navjudge.instruction import DEFAULT_TAU, Status, sentence_split_plan, single_goal_plan
from navjudge.mapgraph import DatasetError, Instance, load_instances
from navjudge.metrics import (
    DEFAULT_THRESHOLD_M,
    METRIC_COLUMNS,
    AggregateReport,
    ConstantInputError,
    TrajectoryScore,
    aggregate,
    correlate,
    format_report,
    score,
)
from navjudge.policy import (
    ActionDistribution,
    ActionSampler,
    HeuristicAgent,
    HttpChatClient,
    LLMPolicy,
    OraclePolicy,
    RandomWalker,
    RecordingClient,
    ReplayClient,
    extract_plan,
    fit_action_distribution,
)
from navjudge.policy.base import DecisionContext, PolicyDecision
from navjudge.policy.llm import load_template, render_navigator_prompt

logger = logging.getLogger("navjudge")

POLICIES = ("oracle", "random", "heuristic", "sampling", "llm", "replay")
PLAN_SOURCES = ("auto", "stored", "llm", "sentences", "single")
# settings that must match for a run directory to be resumed
_RESUME_KEYS = ("dataset", "policy", "episode", "plan_source", "model", "temperature", "reasoning_effort", "stop_prob")


class CliError(Exception):
    pass


# --- shared helpers -------------------------------------------------------


def _read_jsonl(path: Path) -> list[dict[str, Any]]:
    if not path.exists():
        return []
    with path.open(encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def _dump(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False)


def _load_dataset(path: str | Path) -> list[Instance]:
    try:
        return load_instances(path)
    except (OSError, DatasetError) as exc:
        raise CliError(f"cannot load dataset {path}: {exc}") from None


def _read_tags(path: str | Path | None) -> dict[str, str]:
    """Difficulty sidecar: JSON object, JSON lines ``{instance_id, tag}`` or a two-column CSV."""
    if path is None:
        return {}
    p = Path(path)
    text = p.read_text(encoding="utf-8")
    if p.suffix == ".json":
        return {str(k): str(v) for k, v in json.loads(text).items()}
    if p.suffix == ".jsonl":
        return {str(r["instance_id"]): str(r.get("tag", r.get("difficulty"))) for r in _read_jsonl(p)}
    rows = list(csv.reader(text.splitlines()))
    if rows and rows[0][0] == "instance_id":
        rows = rows[1:]
    return {r[0]: r[1] for r in rows if r}


def _read_ratings(path: str | Path) -> dict[str, float]:
    p = Path(path)
    if p.suffix == ".jsonl":
        return {str(r["instance_id"]): float(r["rating"]) for r in _read_jsonl(p)}
    with p.open(newline="", encoding="utf-8") as fh:
        return {row["instance_id"]: float(row["rating"]) for row in csv.DictReader(fh)}


def summarize(
    records: Sequence[Mapping[str, Any]],
    scores: Sequence[TrajectoryScore],
    tags: Mapping[str, str],
    *,
    title: str = "",
) -> tuple[AggregateReport, dict[str, Any], str]:
    """Aggregate report, the machine-readable summary, and its text rendering."""
    report = aggregate(scores, [tags.get(r["instance_id"]) for r in records] if tags else None)
    n = len(records)
    terminations = Counter(r["termination"] for r in records)
    avg_steps = sum(r["steps"] for r in records) / n
    avg_total = sum(r["usage"]["total_tokens"] for r in records) / n
    avg_thoughts = sum(r["usage"]["thoughts_tokens"] for r in records) / n
    summary = {
        "report": report.to_dict(),
        "terminations": dict(sorted(terminations.items())),
        "avg_steps": avg_steps,
        "avg_thoughts_tokens": avg_thoughts,
        "avg_total_tokens": avg_total,
    }
    lines = [format_report(report, title=title), ""]
    lines.append(f"avg steps {avg_steps:.2f}   avg thoughts tokens {avg_thoughts:.1f}   avg total tokens {avg_total:.1f}")
    lines.append("terminations: " + ", ".join(f"{k} {v}" for k, v in sorted(terminations.items())))
    return report, summary, "\n".join(lines) + "\n"


# --- run ------------------------------------------------------------------


def _make_policy(args: argparse.Namespace, instances: Sequence[Instance]):
    if args.policy == "oracle":
        return OraclePolicy(), None
    if args.policy == "random":
        return RandomWalker(stop_prob=args.stop_prob), None
    if args.policy == "heuristic":
        return HeuristicAgent(), None
    if args.policy == "sampling":
        if args.sampling_table:
            table = ActionDistribution.from_dict(json.loads(Path(args.sampling_table).read_text()))
        else:
            table = fit_action_distribution(instances)
        return ActionSampler(table), None
    if not args.model:
        raise CliError(f"--model is required for policy {args.policy!r}")
    if args.policy == "replay":
        if not args.transcript:
            raise CliError("--transcript is required for policy 'replay'")
        client = ReplayClient(args.transcript)
    else:
        try:
            client = HttpChatClient.from_env(
                args.endpoint, max_in_flight=args.max_in_flight, requests_per_second=args.rate_limit
            )
        except ValueError as exc:
            raise CliError(str(exc)) from None
        if args.transcript:
            client = RecordingClient(client, args.transcript)
    policy = LLMPolicy(
        client, args.model, args.navigator_template,
        temperature=args.temperature, reasoning_effort=args.reasoning_effort,
    )
    return policy, client


def _plan_setup(args: argparse.Namespace, instances: list[Instance], client):
    """Apply the plan source: returns (instances, plans, extractor)."""
    source = args.plan_source
    if source == "auto":
        # baselines ignore the instruction, so their first stop ends the episode
        source = {"llm": "llm", "replay": "llm", "oracle": "stored"}.get(args.policy, "single")
    if source == "stored":
        return instances, {}, None
    stripped = [dataclasses.replace(i, plan=None) for i in instances]
    if source == "single":
        return stripped, {i.instance_id: single_goal_plan(i.instruction) for i in instances}, None
    if source == "sentences":
        return stripped, {i.instance_id: sentence_split_plan(i.instruction) for i in instances}, None
    if client is None:
        raise CliError("--plan-source llm needs an llm or replay policy")

    def extractor(inst: Instance):
        return extract_plan(
            client, inst.instruction, args.model, args.extraction_template,
            temperature=args.temperature, reasoning_effort=args.reasoning_effort,
        )

    return stripped, {}, extractor


def _run_config(args: argparse.Namespace, cfg: EpisodeConfig) -> dict[str, Any]:
    return {
        "dataset": str(Path(args.dataset).resolve()),
        "policy": args.policy,
        "episode": cfg.to_dict(),
        "plan_source": args.plan_source,
        "model": args.model,
        "temperature": args.temperature,
        "reasoning_effort": args.reasoning_effort,
        "stop_prob": args.stop_prob,
        "sampling_table": args.sampling_table,
        "transcript": args.transcript,
        "tags": str(Path(args.tags).resolve()) if args.tags else None,
        "parallelism": args.parallelism,
    }


def cmd_run(args: argparse.Namespace) -> int:
    cfg = EpisodeConfig(
        visibility_units=args.visibility_units, kind=RepresentationKind.parse(args.kind),
        max_steps=args.max_steps, max_retries=args.max_retries, seed=args.seed, tau=args.tau,
        threshold=args.threshold,
    )
    if args.parallelism < 1:
        raise CliError("--parallelism must be positive")
    instances = _load_dataset(args.dataset)
    if args.limit is not None:
        instances = instances[: args.limit]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    config = _run_config(args, cfg)
    cfg_path = out / "config.json"
    if cfg_path.exists():
        old = json.loads(cfg_path.read_text())
        diff = [k for k in _RESUME_KEYS if old.get(k) != config.get(k)]
        if diff:
            raise CliError(f"{out} holds a run with different settings ({', '.join(diff)}); use a new --out")
    cfg_path.write_text(json.dumps(config, indent=2, sort_keys=True) + "\n")

    results_path, steps_path = out / "results.jsonl", out / "steps.jsonl"
    done = {r["instance_id"] for r in _read_jsonl(results_path)}
    todo = [i for i in instances if i.instance_id not in done]
    if done:
        logger.info("resuming: %d of %d instances already done", len(instances) - len(todo), len(instances))

    policy, client = _make_policy(args, instances)
    todo, plans, extractor = _plan_setup(args, todo, client)
    lock = threading.Lock()

    def write(res: EpisodeResult) -> None:
        with lock, results_path.open("a", encoding="utf-8") as r, steps_path.open("a", encoding="utf-8") as s, \
                (out / "timings.jsonl").open("a", encoding="utf-8") as t:
            r.write(_dump(res.to_record()) + "\n")
            for entry in res.log:
                s.write(_dump(entry) + "\n")
            t.write(_dump({"instance_id": res.instance_id, "duration_s": res.duration_s}) + "\n")

    run_batch(todo, policy, cfg, parallelism=args.parallelism, plans=plans, extractor=extractor, on_result=write)
    if isinstance(client, HttpChatClient):
        client.close()

    order = {i.instance_id: k for k, i in enumerate(instances)}
    records = sorted((r for r in _read_jsonl(results_path) if r["instance_id"] in order),
                     key=lambda r: order[r["instance_id"]])
    if not records:
        raise CliError("no episodes were run")
    tags = _tags_for(instances, args.tags)
    scores = [TrajectoryScore.from_dict(r["score"]) for r in records]
    _, summary, text = summarize(records, scores, tags, title=f"{args.policy} on {Path(args.dataset).name}")
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    (out / "summary.txt").write_text(text)
    sys.stdout.write(text)
    return 0


def _tags_for(instances: Iterable[Instance], sidecar: str | None) -> dict[str, str]:
    tags = {i.instance_id: i.difficulty for i in instances if i.difficulty}
    tags.update(_read_tags(sidecar))
    return tags


# --- score ----------------------------------------------------------------


def cmd_score(args: argparse.Namespace) -> int:
    target = Path(args.results)
    run_dir = target if target.is_dir() else target.parent
    results_path = target / "results.jsonl" if target.is_dir() else target
    records = _read_jsonl(results_path)
    if not records:
        raise CliError(f"no results in {results_path}")
    config = json.loads((run_dir / "config.json").read_text()) if (run_dir / "config.json").exists() else {}
    dataset = args.dataset or config.get("dataset")
    if not dataset:
        raise CliError("no dataset given and no config.json next to the results")
    instances = {i.instance_id: i for i in _load_dataset(dataset)}
    unknown = [r["instance_id"] for r in records if r["instance_id"] not in instances]
    if unknown:
        raise CliError(f"results reference unknown instance id {unknown[0]!r}")
    order = {k: n for n, k in enumerate(instances)}
    records.sort(key=lambda r: order[r["instance_id"]])

    threshold = args.threshold if args.threshold is not None else config.get("episode", {}).get("threshold", DEFAULT_THRESHOLD_M)
    scores = [score(r["trajectory"], instances[r["instance_id"]].route, instances[r["instance_id"]].graph, threshold)
              for r in records]
    tags = _tags_for(instances.values(), args.tags or config.get("tags"))
    title = f"{config['policy']} on {Path(dataset).name}" if "policy" in config else ""
    _, summary, text = summarize(records, scores, tags, title=title)
    sys.stdout.write(text)

    if args.ratings:
        ratings = _read_ratings(args.ratings)
        by_id = {r["instance_id"]: s for r, s in zip(records, scores)}
        missing = [k for k in ratings if k not in by_id]
        if missing:
            raise CliError(f"ratings reference unknown instance id {missing[0]!r}")
        ids = [k for k in by_id if k in ratings]
        table: dict[str, Any] = {}
        lines = ["", f"Correlation with ratings (n={len(ids)}, p-values: {args.method})",
                 f"{'metric':<6}  {'pearson r':>9}  {'p':>9}  {'spearman':>9}  {'p':>9}"]
        for col in METRIC_COLUMNS:
            values = [getattr(by_id[k], col) for k in ids]
            try:
                c = correlate(values, [ratings[k] for k in ids], method=args.method, seed=args.seed)
            except ConstantInputError:
                table[col] = None
                lines.append(f"{col:<6}  {'undefined (constant input)':>42}")
                continue
            table[col] = c.to_dict()
            lines.append(f"{col:<6}  {c.pearson_r:>9.3f}  {c.pearson_p:>9.2e}  {c.spearman_rho:>9.3f}  {c.spearman_p:>9.2e}")
        summary["correlation"] = table
        sys.stdout.write("\n".join(lines) + "\n")
    if args.json:
        Path(args.json).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return 0


# --- encode ---------------------------------------------------------------


class _CapturingOracle:
    """Follows the reference route and records the context at one step.

    After the capture it completes sub-goals in place so the episode ends
    without further moves.
    """

    name = "oracle"

    def __init__(self, step: int):
        self.step = step
        self.inner = OraclePolicy()
        self.ctx: DecisionContext | None = None

    def decide(self, ctx: DecisionContext) -> PolicyDecision:
        if ctx.step == self.step:
            self.ctx = ctx
            _ = ctx.encoded
        if self.ctx is not None:
            return PolicyDecision(Status.COMPLETED, ctx.current)
        return self.inner.decide(ctx)


def cmd_encode(args: argparse.Namespace) -> int:
    instances = {i.instance_id: i for i in _load_dataset(args.dataset)}
    if args.instance not in instances:
        raise CliError(f"unknown instance {args.instance!r}")
    inst = instances[args.instance]
    if args.plan_source == "single":
        inst = dataclasses.replace(inst, plan=None)
    cfg = EpisodeConfig(visibility_units=args.visibility_units, kind=RepresentationKind.parse(args.kind), tau=args.tau)
    policy = _CapturingOracle(args.step)
    run_episode(inst, policy, cfg)
    if policy.ctx is None:
        raise CliError(f"instance {args.instance!r} has no step {args.step} under the reference route")
    if args.context_only:
        sys.stdout.write(policy.ctx.encoded if policy.ctx.encoded.endswith("\n") else policy.ctx.encoded + "\n")
    else:
        sys.stdout.write(render_navigator_prompt(load_template(args.navigator_template or "navigator"), policy.ctx))
    return 0


# --- small utilities ------------------------------------------------------


def cmd_fit_sampling(args: argparse.Namespace) -> int:
    table = fit_action_distribution(_load_dataset(args.dataset))
    text = json.dumps(table.to_dict(), indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_convert(args: argparse.Namespace) -> int:
    from navjudge.convert import InstanceFields, convert

    fields = InstanceFields(args.id_field, args.instruction_field, args.route_field, args.heading_field)
    doc = convert(args.nodes, args.links, args.instances, args.pois, fields=fields, graph_name=args.graph_name)
    Path(args.out).write_text(json.dumps(doc) + "\n")
    load_instances(args.out)  # validate what we wrote
    print(f"wrote {len(doc['instances'])} instances to {args.out}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    from navjudge.synthetic import dataset_document, generate_instances, make_lattice

    lat = make_lattice(args.rows, args.cols, waypoints=args.waypoints, n_pois=args.pois,
                       jitter_m=args.jitter, seed=args.seed)
    recs = generate_instances(lat, args.n, seed=args.seed + 1)
    Path(args.out).write_text(json.dumps(dataset_document(lat, recs), indent=1) + "\n")
    print(f"wrote {len(recs)} instances on a {args.rows}x{args.cols} lattice to {args.out}")
    return 0


# --- argument parsing -----------------------------------------------------


def _episode_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("-u", "--visibility-units", type=int, default=2, help="intersections in the visible area (default 2)")
    p.add_argument("--kind", default=RepresentationKind.OPTIMIZED_JSON.value,
                   choices=[k.value for k in RepresentationKind], help="map representation shown to the policy")
    p.add_argument("--tau", type=float, default=DEFAULT_TAU, help="landmark grounding threshold (0-100)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="navjudge", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a policy over a dataset")
    run.add_argument("--dataset", required=True)
    run.add_argument("--policy", choices=POLICIES, required=True)
    run.add_argument("--out", required=True, help="run directory (resumed if it already holds results)")
    _episode_args(run)
    run.add_argument("--max-steps", type=int, default=100)
    run.add_argument("--max-retries", type=int, default=15)
    run.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD_M, help="success radius in metres")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--parallelism", type=int, default=1)
    run.add_argument("--limit", type=int, help="only the first N instances")
    run.add_argument("--tags", help="difficulty sidecar file (json, jsonl or csv)")
    run.add_argument("--plan-source", choices=PLAN_SOURCES, default="auto")
    run.add_argument("--stop-prob", type=float, default=0.2, help="random walker stop probability at intersections")
    run.add_argument("--sampling-table", help="action table from fit-sampling (default: fit on the dataset)")
    llm = run.add_argument_group("language model")
    llm.add_argument("--model")
    llm.add_argument("--endpoint", help="chat completions URL (default: $NAVJUDGE_LLM_URL)")
    llm.add_argument("--temperature", type=float, default=1.0)
    llm.add_argument("--reasoning-effort", help="passed through to the endpoint unchanged")
    llm.add_argument("--transcript", help="record to (llm) or replay from (replay) this JSONL file")
    llm.add_argument("--max-in-flight", type=int, default=4)
    llm.add_argument("--rate-limit", type=float, help="requests per second")
    llm.add_argument("--navigator-template", help="template file replacing the bundled navigator prompt")
    llm.add_argument("--extraction-template", help="template file replacing the bundled extraction prompt")
    run.set_defaults(func=cmd_run)

    sc = sub.add_parser("score", help="recompute metrics from stored results, optionally against ratings")
    sc.add_argument("results", help="run directory or results.jsonl")
    sc.add_argument("--dataset", help="defaults to the dataset recorded in config.json")
    sc.add_argument("--ratings", help="ratings file: jsonl {instance_id, rating} or csv")
    sc.add_argument("--tags")
    sc.add_argument("--threshold", type=float)
    sc.add_argument("--method", choices=("t", "permutation"), default="t")
    sc.add_argument("--seed", type=int, default=0, help="permutation seed")
    sc.add_argument("--json", help="also write the summary as JSON here")
    sc.set_defaults(func=cmd_score)

    enc = sub.add_parser("encode", help="print the prompt a policy sees at a step of the reference route")
    enc.add_argument("--dataset", required=True)
    enc.add_argument("--instance", required=True)
    enc.add_argument("--step", type=int, default=0)
    _episode_args(enc)
    enc.add_argument("--plan-source", choices=("stored", "single"), default="stored")
    enc.add_argument("--context-only", action="store_true", help="print only the map representation")
    enc.add_argument("--navigator-template")
    enc.set_defaults(func=cmd_encode)

    fit = sub.add_parser("fit-sampling", help="fit the action-sampling table on a dataset")
    fit.add_argument("--dataset", required=True)
    fit.add_argument("--out")
    fit.set_defaults(func=cmd_fit_sampling)

    conv = sub.add_parser("convert", help="convert Touchdown-style graph files and route records")
    conv.add_argument("--nodes", required=True)
    conv.add_argument("--links", required=True)
    conv.add_argument("--instances", required=True)
    conv.add_argument("--pois")
    conv.add_argument("--out", required=True)
    conv.add_argument("--graph-name", default="map")
    conv.add_argument("--id-field", default="id")
    conv.add_argument("--instruction-field", default="navigation_text")
    conv.add_argument("--route-field", default="route_panoids")
    conv.add_argument("--heading-field", default="start_heading")
    conv.set_defaults(func=cmd_convert)

    syn = sub.add_parser("synth", help="write a synthetic lattice dataset")
    syn.add_argument("--out", required=True)
    syn.add_argument("--rows", type=int, default=8)
    syn.add_argument("--cols", type=int, default=8)
    syn.add_argument("--n", type=int, default=60)
    syn.add_argument("--pois", type=int, default=40)
    syn.add_argument("--jitter", type=float, default=3.0)
    syn.add_argument("--no-waypoints", dest="waypoints", action="store_false")
    syn.add_argument("--seed", type=int, default=0)
    syn.set_defaults(func=cmd_synth)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as exc:
        print(f"navjudge: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
