"""Regenerate the test fixtures in this directory.

    python3 tests/fixtures/build_fixtures.py

Writes ``city.json`` (synthetic lattice dataset), ``transcript.jsonl``
(a recorded 10-episode language-model run against the scripted
endpoint) and ``transcript_results.jsonl`` (the trajectories and scores
of that run).
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

HERE = Path(__file__).resolve().parent
sys.path.insert(0, str(HERE.parent))

from scripted_endpoint import MODEL, ScriptedEndpoint  # noqa: E402

from navjudge.episode import EpisodeConfig, run_batch  # noqa: E402
from navjudge.mapgraph import load_instances  # noqa: E402
from navjudge.policy import FunctionClient, LLMPolicy, RecordingClient, extract_plan  # noqa: E402
from navjudge.synthetic import dataset_document, generate_instances, make_lattice  # noqa: E402

CITY_SEED = 11
TRANSCRIPT_FAULTS = {
    0: ["malformed", "ok", "fenced"],
    1: ["invalid", "invalid"],
    3: ["fenced"],
    5: ["ok", "malformed", "invalid"],
}
TRANSCRIPT_EXTRACTION_FAULTS = {2, 7}


def strip_plans(instances):
    import dataclasses

    return [dataclasses.replace(i, plan=None) for i in instances]


def transcript_setup(instances):
    """Endpoint, instances and extractor for the 10 recorded episodes."""
    chosen = instances[:10]
    endpoint = ScriptedEndpoint(
        chosen,
        faults={chosen[k].instance_id: v for k, v in TRANSCRIPT_FAULTS.items()},
        extraction_faults={chosen[k].instance_id for k in TRANSCRIPT_EXTRACTION_FAULTS},
    )
    return endpoint, strip_plans(chosen)


def run_llm(client, instances):
    policy = LLMPolicy(client, MODEL)

    def extractor(inst):
        return extract_plan(client, inst.instruction, MODEL)

    return run_batch(instances, policy, EpisodeConfig(), extractor=extractor)


def main() -> None:
    lattice = make_lattice(8, 8, waypoints=True, n_pois=48, jitter_m=3.0, seed=CITY_SEED)
    records = generate_instances(lattice, 64, seed=CITY_SEED + 1)
    city = HERE / "city.json"
    city.write_text(json.dumps(dataset_document(lattice, records), indent=1) + "\n")

    instances = load_instances(city)
    endpoint, chosen = transcript_setup(instances)
    transcript = HERE / "transcript.jsonl"
    transcript.unlink(missing_ok=True)
    results = run_llm(RecordingClient(FunctionClient(endpoint), transcript), chosen)
    with (HERE / "transcript_results.jsonl").open("w") as fh:
        for r in results:
            fh.write(json.dumps(r.to_record(), sort_keys=True) + "\n")
    print(f"wrote {city.name} ({len(records)} instances), {transcript.name} ({endpoint.calls} calls)")
    for r in results:
        print(r.instance_id, r.termination.value, r.steps, r.retries, r.score.sr)


if __name__ == "__main__":
    main()
