"""End-to-end runs: trace shape, call counts, determinism, protocol embedding."""
import dataclasses
import json

import pytest

from camcp.planner import MockPlanner, PlanBlueprint
from camcp.protocol import validate_sequence
from camcp.runtime import (
    EVENT_KINDS,
    MalformedTraceError,
    parse_trace,
    query_for_seed,
    read_trace,
    run,
    run_context_aware,
    run_traditional,
    seed_context,
    serialize_trace,
    write_trace,
)
from camcp.scenarios import MODE_CA, MODE_TRADITIONAL, WindowConfig
from camcp.store import ContextStore

ALL = [("travel", MODE_TRADITIONAL), ("travel", MODE_CA), ("wedding_p5", MODE_TRADITIONAL), ("wedding_p5", MODE_CA)]


def scenario_by_name(name, travel, wedding):
    return travel if name == "travel" else wedding


@pytest.fixture()
def windowed_travel(travel_scenario):
    def make(budget: int):
        return dataclasses.replace(
            travel_scenario, window=WindowConfig(True, budget, "fifo")
        )

    return make


# -- Trace shape -------------------------------------------------------------------


@pytest.mark.parametrize("name, mode", ALL)
def test_trace_boundaries_and_dense_clock(name, mode, travel_scenario, wedding_scenario):
    trace = run(scenario_by_name(name, travel_scenario, wedding_scenario), mode, 0)
    assert trace.events[0].kind == "run_start"
    assert trace.events[-1].kind == "run_end"
    assert [e.t for e in trace.events] == list(range(1, len(trace.events) + 1))
    assert all(e.kind in EVENT_KINDS for e in trace.events)
    assert trace.events[-1].payload["completed"] is True


def test_run_start_payload_carries_everything_metrics_need(travel_scenario):
    payload = run(travel_scenario, MODE_CA, 3).events[0].payload
    assert payload["mode"] == "context_aware"
    assert payload["seed"] == 3
    assert payload["scenario"] == "travel"
    assert payload["kind"] == "travel"
    assert payload["stage_ids"] == ["location", "weather", "hotel", "dining"]
    assert set(payload["constraints"]) == {"preferences", "days", "destination", "budget"}


def test_run_dispatcher_accepts_aliases_and_rejects_unknown(travel_scenario):
    assert run(travel_scenario, "ca", 0).mode == MODE_CA
    assert run(travel_scenario, MODE_TRADITIONAL, 0).mode == MODE_TRADITIONAL
    with pytest.raises(ValueError):
        run(travel_scenario, "hybrid", 0)


# -- Call counts and latency ---------------------------------------------------------


@pytest.mark.parametrize("seed", [0, 1, 17])
def test_travel_call_counts(travel_scenario, seed):
    traditional = run_traditional(travel_scenario, seed)
    aware = run_context_aware(travel_scenario, seed)
    assert traditional.llm_call_count() == 5
    assert aware.llm_call_count() == 2
    assert [e.payload["role"] for e in aware.events_of("llm_call")] == ["plan", "summarize"]
    assert [e.payload["role"] for e in traditional.events_of("llm_call")] == [
        "step_decision"
    ] * 4 + ["summarize"]


@pytest.mark.parametrize("seed", [0, 5])
def test_wedding_call_counts(wedding_scenario, seed):
    traditional = run_traditional(wedding_scenario, seed)
    aware = run_context_aware(wedding_scenario, seed)
    assert traditional.llm_call_count() == 2
    assert aware.llm_call_count() == 1
    assert [e.payload["role"] for e in aware.events_of("llm_call")] == ["combined"]
    assert len(traditional.events_of("tool_exec")) == 13  # 2 trackers + 11 dispatches
    assert len(aware.events_of("tool_exec")) == 3


def test_simulated_latency_matches_event_arithmetic(travel_scenario, wedding_scenario):
    expected = {
        ("travel", MODE_TRADITIONAL): 31.6,
        ("travel", MODE_CA): 13.6,
        ("wedding_p5", MODE_TRADITIONAL): 17.2,
        ("wedding_p5", MODE_CA): 7.2,
    }
    for (name, mode), total in expected.items():
        trace = run(scenario_by_name(name, travel_scenario, wedding_scenario), mode, 0)
        assert trace.simulated_latency_s == total
        llm = trace.events_of("llm_call")
        tools = trace.events_of("tool_exec")
        assert all(e.payload["latency_s"] == 6.0 for e in llm)
        assert all(e.payload["latency_s"] == 0.4 for e in tools)
        assert trace.simulated_latency_s == len(llm) * 6.0 + len(tools) * 0.4
        assert trace.events[-1].payload["simulated_latency_s"] == total
    assert 13.6 / 31.6 == pytest.approx(0.43038, abs=1e-5)


# -- Determinism ------------------------------------------------------------------------


@pytest.mark.parametrize("name, mode", ALL)
def test_repeat_runs_are_byte_identical(name, mode, travel_scenario, wedding_scenario):
    scenario = scenario_by_name(name, travel_scenario, wedding_scenario)
    assert serialize_trace(run(scenario, mode, 11)) == serialize_trace(run(scenario, mode, 11))


@pytest.mark.parametrize(
    "name, golden",
    [("travel", "trace_travel_ca.jsonl"), ("wedding_p5", "trace_wedding_ca.jsonl")],
)
def test_ca_trace_matches_golden_bytes(name, golden, travel_scenario, wedding_scenario, golden_dir):
    scenario = scenario_by_name(name, travel_scenario, wedding_scenario)
    assert serialize_trace(run(scenario, MODE_CA, 0)) == (golden_dir / golden).read_text()


def test_wall_clock_measured_but_never_serialized(travel_scenario):
    trace = run(travel_scenario, MODE_CA, 0)
    assert trace.wall_clock_s > 0.0
    text = serialize_trace(trace)
    assert "wall_clock" not in text
    assert parse_trace(text).wall_clock_s == 0.0


# -- Seeding ---------------------------------------------------------------------------


def test_seed_context_write_order(travel_scenario):
    blueprint = MockPlanner().plan(query_for_seed(travel_scenario, 0))
    store = ContextStore()
    seed_context(store, blueprint)
    keys = [json.loads(line)["key"] for line in store.commit_log_lines()]
    assert keys == [
        "goals",
        "constraints.preferences",
        "constraints.days",
        "constraints.destination",
        "constraints.budget",
        "stages",
        "goals_seeded",
    ]
    assert keys[-1] == "goals_seeded"


def test_seed_context_empty_blueprint():
    blueprint = PlanBlueprint(goals=(), constraints={}, stages=(), completion_key="done")
    store = ContextStore()
    seed_context(store, blueprint)
    keys = [json.loads(line)["key"] for line in store.commit_log_lines()]
    assert keys == ["goals", "stages", "goals_seeded"]


def test_seed_context_reseed_bumps_versions(travel_scenario):
    blueprint = MockPlanner().plan(query_for_seed(travel_scenario, 0))
    store = ContextStore()
    seed_context(store, blueprint)
    seed_context(store, blueprint)
    assert store.get("goals_seeded").version == 2
    assert store.get("constraints.budget").version == 2


# -- Seeded queries ------------------------------------------------------------------------


def test_query_seed_zero_is_base_query(travel_scenario):
    query = query_for_seed(travel_scenario, 0)
    assert query.params == travel_scenario.constraints
    assert "Seattle" in query.raw_text
    assert "$1500" in query.raw_text


def test_query_variations_stay_inside_tables(travel_scenario):
    destinations = set(travel_scenario.data_tables["destinations"])
    seen = set()
    for seed in range(1, 60):
        params = query_for_seed(travel_scenario, seed).params
        assert params["destination"] in destinations
        assert params["days"] in (2, 3, 4)
        assert params["budget"] in (1200, 1500, 1800)
        assert params["preferences"] == travel_scenario.constraints["preferences"]
        assert list(params) == list(travel_scenario.constraints)
        seen.add((params["destination"], params["days"], params["budget"]))
    assert len(seen) > 5  # the sweep actually varies
    assert query_for_seed(travel_scenario, 9) == query_for_seed(travel_scenario, 9)


def test_wedding_query_is_seed_invariant(wedding_scenario):
    assert query_for_seed(wedding_scenario, 0) == query_for_seed(wedding_scenario, 99)


@pytest.mark.parametrize("bad", [-1, True, 1.5, "0"])
def test_query_rejects_bad_seed(travel_scenario, bad):
    with pytest.raises(ValueError):
        query_for_seed(travel_scenario, bad)


# -- Window eviction -----------------------------------------------------------------------


def test_window_three_loses_exactly_dining(windowed_travel):
    trace = run_traditional(windowed_travel(3), 0)
    failed = trace.events_of("stage_failed")
    assert len(failed) == 1
    assert failed[0].payload["stage"] == "dining"
    assert "budget" in failed[0].payload["reason"]
    done = [e.payload["stage"] for e in trace.events_of("stage_done")]
    assert done == ["location", "weather", "hotel"]
    assert trace.events[-1].payload["completed"] is False
    assert trace.llm_call_count() == 5  # the orchestrator still pays every decision


@pytest.mark.parametrize("budget, expected_done", [(1, 0), (2, 0), (4, 4), (6, 4)])
def test_window_budget_thresholds(windowed_travel, budget, expected_done):
    trace = run_traditional(windowed_travel(budget), 0)
    assert len(trace.events_of("stage_done")) == expected_done


def test_context_aware_ignores_window(windowed_travel):
    trace = run_context_aware(windowed_travel(1), 0)
    assert len(trace.events_of("stage_done")) == 4
    assert trace.events[-1].payload["completed"] is True


# -- Protocol embedding ----------------------------------------------------------------------


@pytest.mark.parametrize("name, mode", ALL)
def test_embedded_messages_validate(name, mode, travel_scenario, wedding_scenario):
    trace = run(scenario_by_name(name, travel_scenario, wedding_scenario), mode, 0)
    messages = trace.protocol_messages()
    validate_sequence(messages)
    seqs = [m.seq for m in messages]
    assert seqs == sorted(seqs)
    assert messages[0].msg_type == "plan_request"
    assert messages[-1].msg_type == "final_response"


def test_travel_ca_message_vocabulary(travel_scenario):
    types = [m.msg_type for m in run_context_aware(travel_scenario, 0).protocol_messages()]
    assert types[0] == "plan_request"
    assert types[1] == "context_seed"
    assert types.count("completion_signal") == 1
    assert types.count("summary_request") == 1
    assert types[-1] == "final_response"
    assert types.index("completion_signal") < types.index("summary_request")


def test_wedding_ca_combined_call_skips_summary_request(wedding_scenario):
    types = [m.msg_type for m in run_context_aware(wedding_scenario, 0).protocol_messages()]
    assert "summary_request" not in types
    assert types.count("completion_signal") == 1
    assert types[-1] == "final_response"


def test_traditional_messages_are_plan_and_final_only(travel_scenario):
    types = [m.msg_type for m in run_traditional(travel_scenario, 0).protocol_messages()]
    assert types == ["plan_request", "final_response"]


def test_ca_run_spends_no_calls_between_seed_and_summary(travel_scenario):
    trace = run_context_aware(travel_scenario, 0)
    calls = [e.t for e in trace.events_of("llm_call")]
    assert len(calls) == 2
    between = [
        e.kind for e in trace.events if calls[0] < e.t < calls[1] and e.kind == "llm_call"
    ]
    assert between == []


# -- Context-aware run content ------------------------------------------------------------------


def test_ca_stage_done_outputs_are_scoped_to_own_stage(travel_scenario):
    trace = run_context_aware(travel_scenario, 0)
    for event in trace.events_of("stage_done"):
        assert list(event.payload["outputs"]) == [event.payload["stage"]]


def test_ca_trigger_fire_precedes_matching_tool_exec(travel_scenario):
    trace = run_context_aware(travel_scenario, 0)
    fires = trace.events_of("trigger_fire")
    assert len(fires) == 4
    for fire in fires:
        follower = trace.events[fire.t]  # trace.events is 0-indexed, t is 1-based
        assert follower.kind == "tool_exec"
        assert follower.payload["server"] == fire.payload["server"]


def test_wedding_ca_store_coordination(wedding_scenario):
    trace = run_context_aware(wedding_scenario, 0)
    writes = {e.payload["key"]: e.payload for e in trace.events_of("scs_write")}
    request_keys = [k for k in writes if k.startswith("transport_request.")]
    assert len(request_keys) == 11
    # the tracker that fires second observes the first one's done flag and
    # posts the shared gate; the transport stage wakes on that single write
    assert writes["requests_posted"]["writer"] == "errand_tracker"
    assert writes["logistics_complete"]["writer"] == "runtime"
    schedule = writes["schedule"]["value"]
    assert schedule["makespan_min"] == 180
    assert any(len(t["requests"]) == 2 for t in schedule["trips"])


def test_final_response_echoes_constraints_and_outputs(travel_scenario, wedding_scenario):
    trace = run_context_aware(travel_scenario, 0)
    text = trace.protocol_messages()[-1].payload["text"]
    assert "constraint destination: Seattle" in text
    assert "constraint budget: 1500" in text
    assert "constraint preferences:" in text and "vegan" in text
    assert "hotel:" in text and "dining:" in text
    wedding_text = run_context_aware(wedding_scenario, 0).protocol_messages()[-1].payload["text"]
    assert "constraint vehicle_capacity: 2" in wedding_text
    assert '"makespan_min":180' in wedding_text


def test_traditional_failure_reason_reaches_trace_for_unknown_destination(travel_scenario):
    broken = dataclasses.replace(
        travel_scenario,
        constraints={**travel_scenario.constraints, "destination": "Atlantis"},
    )
    trace = run_traditional(broken, 0)
    failed = {e.payload["stage"]: e.payload["reason"] for e in trace.events_of("stage_failed")}
    assert "location" in failed
    assert "Atlantis" in failed["location"]
    assert trace.events[-1].payload["completed"] is False


# -- Serialization and parsing -------------------------------------------------------------------


def _renumber(lines: list[str]) -> list[str]:
    out = []
    for i, line in enumerate(lines, start=1):
        record = json.loads(line)
        record["t"] = i
        out.append(json.dumps(record, separators=(",", ":"), sort_keys=False))
    return out


def test_write_read_round_trip(tmp_path, wedding_scenario):
    trace = run_context_aware(wedding_scenario, 2)
    path = tmp_path / "trace.jsonl"
    write_trace(trace, path)
    loaded = read_trace(path)
    assert loaded.mode == trace.mode
    assert loaded.seed == trace.seed
    assert loaded.simulated_latency_s == trace.simulated_latency_s
    assert serialize_trace(loaded) == serialize_trace(trace)


@pytest.mark.parametrize(
    "mangle, line_no, message",
    [
        (lambda lines: ["nonsense"] + lines[1:], 1, "not valid JSON"),
        (lambda lines: [lines[1]] + lines[1:], 1, "logical time"),
        (lambda lines: [], 1, "empty trace"),
        (lambda lines: _renumber(lines[1:]), 1, "first event must be run_start"),
        (lambda lines: lines[:-1], None, "last event must be run_end"),
        (
            lambda lines: [lines[0].replace("run_start", "lift_off")] + lines[1:],
            1,
            "unknown event kind",
        ),
        (
            lambda lines: [lines[0], lines[0].replace('"t":1', '"t":2')] + lines[2:],
            2,
            "run_start may only appear at the boundary",
        ),
    ],
)
def test_parse_trace_rejects_corruption(travel_scenario, mangle, line_no, message):
    lines = serialize_trace(run_context_aware(travel_scenario, 0)).splitlines()
    text = "\n".join(mangle(lines)) + "\n"
    with pytest.raises(MalformedTraceError, match=message) as info:
        parse_trace(text)
    if line_no is not None:
        assert info.value.line_no == line_no


def test_parse_trace_requires_metric_fields(travel_scenario):
    lines = serialize_trace(run_context_aware(travel_scenario, 0)).splitlines()
    start = json.loads(lines[0])
    del start["payload"]["mode"]
    bad = "\n".join([json.dumps(start, separators=(",", ":"))] + lines[1:])
    with pytest.raises(MalformedTraceError, match="missing 'mode'"):
        parse_trace(bad)
