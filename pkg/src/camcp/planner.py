"""Planning and summarizing seat.

The default planner is a deterministic template mock so runs are cheap and
reproducible; every call is recorded through one atomic counter, which is
what the benchmark counts. A thin HTTP adapter defines the contract for
plugging in a hosted model without touching the counting or the templates.
"""
from __future__ import annotations

import os
import threading
from collections.abc import Mapping
from dataclasses import dataclass, field

import requests

from .store import (
    And,
    ContextEntry,
    ContextValue,
    Exists,
    WatchCondition,
    canonical_dumps,
    condition_to_value,
    copy_value,
)

KIND_TRAVEL = "travel"
KIND_WEDDING = "wedding"
KINDS = (KIND_TRAVEL, KIND_WEDDING)

ROLE_PLAN = "plan"
ROLE_STEP_DECISION = "step_decision"
ROLE_SUMMARIZE = "summarize"
ROLE_COMBINED = "combined"
ROLES = (ROLE_PLAN, ROLE_STEP_DECISION, ROLE_SUMMARIZE, ROLE_COMBINED)


class UnsupportedKindError(Exception):
    def __init__(self, kind):
        super().__init__(f"unsupported query kind: {kind!r}")
        self.kind = kind


class IncompleteContextError(Exception):
    """Summarization was asked for before the completion flag was written."""

    def __init__(self, completion_key: str):
        super().__init__(f"completion key {completion_key!r} absent from snapshot")
        self.completion_key = completion_key


@dataclass(frozen=True)
class Query:
    raw_text: str
    kind: str
    params: dict


@dataclass(frozen=True)
class Stage:
    stage_id: str
    server_id: str
    trigger: WatchCondition
    done_key: str


@dataclass(frozen=True)
class PlanBlueprint:
    goals: tuple[str, ...]
    constraints: dict
    stages: tuple[Stage, ...]
    completion_key: str


@dataclass(frozen=True)
class CostModel:
    per_call_latency_s: float = 6.0
    per_tool_latency_s: float = 0.4


@dataclass(frozen=True)
class CallRecord:
    call_index: int
    role: str
    simulated_latency_s: float


_REQUIRED_PARAMS = {
    KIND_TRAVEL: ("destination", "days", "budget"),
    KIND_WEDDING: ("scenario",),
}

# Fixed per-kind stage wiring: which server serves each stage, what edge
# wakes it, and which flag it raises when done.
_OUTLINES = {
    KIND_TRAVEL: (
        Stage("location", "location_server", Exists("goals_seeded"), "location_done"),
        Stage("weather", "weather_server", Exists("location_done"), "weather_done"),
        Stage("hotel", "hotel_server", Exists("location_done"), "hotel_done"),
        Stage("dining", "dining_server", Exists("hotel_done"), "dining_done"),
    ),
    KIND_WEDDING: (
        Stage("arrivals", "arrival_tracker", Exists("goals_seeded"), "arrivals_done"),
        Stage("errands", "errand_tracker", Exists("goals_seeded"), "errands_done"),
        Stage("schedule", "transport", Exists("requests_posted"), "schedule_done"),
    ),
}

_GOALS = {
    KIND_TRAVEL: (
        "shortlist places to visit",
        "forecast the weather",
        "book a hotel",
        "plan the dining",
    ),
    KIND_WEDDING: (
        "track guest arrivals",
        "track errand pickups",
        "produce the shared-vehicle schedule",
    ),
}

_COMPLETION_KEYS = {KIND_TRAVEL: "itinerary_complete", KIND_WEDDING: "logistics_complete"}


def stage_outline(kind: str) -> tuple[Stage, ...]:
    if kind not in _OUTLINES:
        raise UnsupportedKindError(kind)
    return _OUTLINES[kind]


def completion_condition(blueprint: PlanBlueprint) -> WatchCondition:
    """The completion flag is implied by the conjunction of all done keys."""
    return And(tuple(Exists(stage.done_key) for stage in blueprint.stages))


def blueprint_to_value(blueprint: PlanBlueprint) -> dict:
    return {
        "goals": list(blueprint.goals),
        "constraints": copy_value(blueprint.constraints),
        "stages": [
            {
                "stage_id": s.stage_id,
                "server_id": s.server_id,
                "trigger": condition_to_value(s.trigger),
                "done_key": s.done_key,
            }
            for s in blueprint.stages
        ],
        "completion_key": blueprint.completion_key,
    }


def render_summary(values: Mapping[str, ContextValue], blueprint: PlanBlueprint) -> str:
    """Render the final answer from context values with a fixed template.

    Pure and deterministic: echoes every constraint verbatim and one line
    per stage output, so nothing the servers produced can silently drop out.
    """
    lines = ["=== final response ==="]
    lines.append("goals: " + "; ".join(blueprint.goals))
    for name, value in blueprint.constraints.items():
        rendered = value if isinstance(value, str) else canonical_dumps(value)
        lines.append(f"constraint {name}: {rendered}")
    for stage in blueprint.stages:
        output = values.get(stage.stage_id)
        lines.append(f"{stage.stage_id}: {canonical_dumps(output)}")
    lines.append(f"complete: {str(bool(values.get(blueprint.completion_key))).lower()}")
    return "\n".join(lines)


class MockPlanner:
    """Deterministic stand-in for the central model.

    plan() is a pure function of the query; summarize() is a pure function
    of (snapshot, blueprint). The only state is the call counter.
    """

    def __init__(self, cost_model: CostModel | None = None):
        self.cost_model = cost_model or CostModel()
        self._lock = threading.Lock()
        self._records: list[CallRecord] = []

    # -- Call accounting --

    def note_call(self, role: str) -> CallRecord:
        if role not in ROLES:
            raise ValueError(f"unknown call role: {role!r}")
        with self._lock:
            record = CallRecord(
                call_index=len(self._records) + 1,
                role=role,
                simulated_latency_s=self.cost_model.per_call_latency_s,
            )
            self._records.append(record)
            return record

    def call_count(self) -> int:
        with self._lock:
            return len(self._records)

    def records(self) -> list[CallRecord]:
        with self._lock:
            return list(self._records)

    def reset_counter(self) -> None:
        with self._lock:
            self._records.clear()

    # -- Planning --

    def plan(self, query: Query, combined: bool = False) -> PlanBlueprint:
        """Turn a query into a blueprint: goals, constraints, stage wiring,
        completion key. Counts one call (role ``combined`` when the run
        policy folds summarization into this same call)."""
        if query.kind not in KINDS:
            raise UnsupportedKindError(query.kind)
        missing = [p for p in _REQUIRED_PARAMS[query.kind] if p not in query.params]
        if missing:
            raise ValueError(f"query params missing {missing[0]!r} for kind {query.kind!r}")
        self.note_call(ROLE_COMBINED if combined else ROLE_PLAN)
        constraints = {
            k: copy_value(v) for k, v in query.params.items() if k != "scenario"
        }
        return PlanBlueprint(
            goals=_GOALS[query.kind],
            constraints=constraints,
            stages=_OUTLINES[query.kind],
            completion_key=_COMPLETION_KEYS[query.kind],
        )

    # -- Summarization --

    def summarize(self, snapshot: Mapping[str, ContextEntry], blueprint: PlanBlueprint) -> str:
        """Summarize a completed run from the shared snapshot. Counts one call.

        Raises :class:`IncompleteContextError` when the completion key has
        not been written yet.
        """
        if blueprint.completion_key not in snapshot:
            raise IncompleteContextError(blueprint.completion_key)
        self.note_call(ROLE_SUMMARIZE)
        values = {k: e.value for k, e in snapshot.items()}
        return render_summary(values, blueprint)

    def step_decision(self, stage_id: str, visible_keys: list[str]) -> str:
        """One orchestration decision in the centrally driven baseline."""
        self.note_call(ROLE_STEP_DECISION)
        return f"run stage {stage_id} with context [{', '.join(visible_keys)}]"

    def synthesize(self, entries: list[tuple[str, ContextValue]]) -> str:
        """Final synthesis over the orchestrator's private history."""
        self.note_call(ROLE_SUMMARIZE)
        lines = ["=== final response ==="]
        for key, value in entries:
            rendered = value if isinstance(value, str) else canonical_dumps(value)
            lines.append(f"{key}: {rendered}")
        return "\n".join(lines)


# -- HTTP adapter seat --------------------------------------------------------


class AdapterError(Exception):
    pass


class AdapterConfigurationError(AdapterError):
    """The adapter is not configured; raised before any network activity."""


class AdapterNetworkError(AdapterError):
    pass


class AdapterTimeoutError(AdapterNetworkError):
    pass


class AdapterStatusError(AdapterError):
    def __init__(self, status_code: int, body: str):
        super().__init__(f"model endpoint returned status {status_code}")
        self.status_code = status_code
        self.body = body


class AdapterResponseError(AdapterError):
    """The endpoint answered 2xx but not with the expected JSON shape."""


ENV_URL = "CA_MCP_LLM_URL"
ENV_TOKEN = "CA_MCP_LLM_TOKEN"
DEFAULT_TIMEOUT_S = 60.0


@dataclass
class LlmAdapter:
    """POSTs ``{"messages": [...], "tools": [...]}`` and expects ``{"text": ...}``.

    ``recorder`` receives the verbatim request and response bodies, so a run
    can log them into its trace; ``on_call`` lets a planner count adapter
    calls identically to mock calls.
    """

    url: str
    token: str | None = None
    timeout_s: float = DEFAULT_TIMEOUT_S
    recorder: list | None = None
    on_call: object = None

    @classmethod
    def from_env(cls, env: Mapping[str, str] | None = None, **kwargs) -> "LlmAdapter":
        env = os.environ if env is None else env
        url = env.get(ENV_URL)
        if not url:
            raise AdapterConfigurationError(f"{ENV_URL} is not set")
        return cls(url=url, token=env.get(ENV_TOKEN), **kwargs)

    def request(self, messages: list, tools: list) -> str:
        if not self.url:
            raise AdapterConfigurationError("adapter has no endpoint URL")
        body = {"messages": copy_value(messages), "tools": copy_value(tools)}
        headers = {"content-type": "application/json"}
        if self.token:
            headers["authorization"] = f"Bearer {self.token}"
        if callable(self.on_call):
            self.on_call(ROLE_PLAN)
        try:
            response = requests.post(
                self.url, json=body, headers=headers, timeout=self.timeout_s
            )
        except requests.Timeout as exc:
            raise AdapterTimeoutError(f"model endpoint timed out: {exc}") from exc
        except requests.RequestException as exc:
            raise AdapterNetworkError(f"model endpoint unreachable: {exc}") from exc
        if not 200 <= response.status_code < 300:
            raise AdapterStatusError(response.status_code, response.text)
        if self.recorder is not None:
            self.recorder.append({"request": body, "response": response.text})
        try:
            data = response.json()
        except ValueError as exc:
            raise AdapterResponseError(f"response body is not JSON: {exc}") from exc
        if not isinstance(data, dict) or not isinstance(data.get("text"), str):
            raise AdapterResponseError('response JSON must carry a text field under "text"')
        return data["text"]
