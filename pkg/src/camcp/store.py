"""Versioned key/value blackboard with rising-edge watch subscriptions.

The store is the shared coordination surface: writers commit versioned
entries under a single store-wide logical clock, readers take consistent
snapshots, and subscribers are notified exactly once per false-to-true
transition of a watch condition evaluated over successive post-commit
states. Every commit is appended to an in-memory JSON-lines log that can
be replayed into an identical store.
"""
from __future__ import annotations

import json
import math
import threading
from collections import deque
from collections.abc import Iterable, Mapping
from dataclasses import dataclass
from typing import Any, Callable, Iterator, Union

ContextValue = Union[None, bool, int, float, str, list, dict]

DETERMINISTIC = "deterministic"
CONCURRENT = "concurrent"


class CasConflict(Exception):
    """cas_put lost the version race; carries the version that is actually live."""

    def __init__(self, key: str, current_version: int):
        super().__init__(f"stale expected version for {key!r}; current={current_version}")
        self.key = key
        self.current_version = current_version


def copy_value(value: Any, _path: str = "$") -> ContextValue:
    """Deep-copy *value* into plain JSON-shaped data, validating as it goes.

    Tuples are normalized to lists. Non-finite numbers, non-text map keys
    and foreign types are rejected so every stored value can round-trip
    through the canonical line encoding.
    """
    if value is None or isinstance(value, (bool, int, str)):
        return value
    if isinstance(value, float):
        if not math.isfinite(value):
            raise TypeError(f"non-finite number at {_path}")
        return value
    if isinstance(value, (list, tuple)):
        return [copy_value(v, f"{_path}[{i}]") for i, v in enumerate(value)]
    if isinstance(value, Mapping):
        out: dict[str, ContextValue] = {}
        for k, v in value.items():
            if not isinstance(k, str):
                raise TypeError(f"non-text key at {_path}: {k!r}")
            out[k] = copy_value(v, f"{_path}.{k}")
        return out
    raise TypeError(f"unsupported value type at {_path}: {type(value).__name__}")


def values_equal(a: ContextValue, b: ContextValue) -> bool:
    """Structural equality: numbers compare by numeric value (1 == 1.0),
    booleans are distinct from numbers, containers compare element-wise."""
    if isinstance(a, bool) or isinstance(b, bool):
        return isinstance(a, bool) and isinstance(b, bool) and a == b
    if isinstance(a, (int, float)) and isinstance(b, (int, float)):
        return float(a) == float(b)
    if isinstance(a, list) and isinstance(b, list):
        return len(a) == len(b) and all(values_equal(x, y) for x, y in zip(a, b))
    if isinstance(a, dict) and isinstance(b, dict):
        return a.keys() == b.keys() and all(values_equal(v, b[k]) for k, v in a.items())
    if type(a) is not type(b):
        return False
    return a == b


def canonicalize_value(value: ContextValue) -> ContextValue:
    """Rebuild containers with map keys in sorted order (scalars unchanged)."""
    if isinstance(value, list):
        return [canonicalize_value(v) for v in value]
    if isinstance(value, dict):
        return {k: canonicalize_value(value[k]) for k in sorted(value)}
    return value


def canonical_dumps(value: ContextValue) -> str:
    """Serialize a value to compact JSON with sorted map keys everywhere."""
    return json.dumps(
        canonicalize_value(copy_value(value)), separators=(",", ":"), allow_nan=False
    )


# -- Watch conditions --------------------------------------------------------


@dataclass(frozen=True)
class Exists:
    key: str


@dataclass(frozen=True)
class Equals:
    key: str
    value: ContextValue


@dataclass(frozen=True)
class And:
    children: tuple["WatchCondition", ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "children", tuple(self.children))


@dataclass(frozen=True)
class Or:
    children: tuple["WatchCondition", ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "children", tuple(self.children))


@dataclass(frozen=True)
class Not:
    child: "WatchCondition"


WatchCondition = Union[Exists, Equals, And, Or, Not]


def evaluate(condition: WatchCondition, entries: Mapping[str, "ContextEntry"]) -> bool:
    """Evaluate a condition against a snapshot. Total: missing keys make
    Exists/Equals false, never an error."""
    if isinstance(condition, Exists):
        return condition.key in entries
    if isinstance(condition, Equals):
        entry = entries.get(condition.key)
        return entry is not None and values_equal(entry.value, condition.value)
    if isinstance(condition, And):
        return all(evaluate(c, entries) for c in condition.children)
    if isinstance(condition, Or):
        return any(evaluate(c, entries) for c in condition.children)
    if isinstance(condition, Not):
        return not evaluate(condition.child, entries)
    raise TypeError(f"not a watch condition: {condition!r}")


def condition_to_value(condition: WatchCondition) -> dict:
    """Encode a condition as plain JSON-shaped data."""
    if isinstance(condition, Exists):
        return {"op": "exists", "key": condition.key}
    if isinstance(condition, Equals):
        return {"op": "equals", "key": condition.key, "value": copy_value(condition.value)}
    if isinstance(condition, And):
        return {"op": "and", "children": [condition_to_value(c) for c in condition.children]}
    if isinstance(condition, Or):
        return {"op": "or", "children": [condition_to_value(c) for c in condition.children]}
    if isinstance(condition, Not):
        return {"op": "not", "child": condition_to_value(condition.child)}
    raise TypeError(f"not a watch condition: {condition!r}")


def condition_from_value(data: Mapping) -> WatchCondition:
    op = data.get("op")
    if op == "exists":
        return Exists(data["key"])
    if op == "equals":
        return Equals(data["key"], copy_value(data["value"]))
    if op == "and":
        return And(tuple(condition_from_value(c) for c in data["children"]))
    if op == "or":
        return Or(tuple(condition_from_value(c) for c in data["children"]))
    if op == "not":
        return Not(condition_from_value(data["child"]))
    raise ValueError(f"unknown condition op: {op!r}")


# -- Entries, snapshots, subscriptions ---------------------------------------


@dataclass(frozen=True)
class ContextEntry:
    key: str
    value: ContextValue
    version: int
    writer_id: str
    logical_time: int


class Snapshot(Mapping):
    """Immutable consistent view: all commits up to one logical time, no later ones."""

    __slots__ = ("_entries", "logical_time")

    def __init__(self, entries: dict[str, ContextEntry], logical_time: int):
        self._entries = entries
        self.logical_time = logical_time

    def __getitem__(self, key: str) -> ContextEntry:
        return self._entries[key]

    def __iter__(self) -> Iterator[str]:
        return iter(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def value(self, key: str, default: ContextValue = None) -> ContextValue:
        entry = self._entries.get(key)
        return default if entry is None else entry.value

    def values_map(self) -> dict[str, ContextValue]:
        return {k: e.value for k, e in self._entries.items()}

    def __repr__(self) -> str:
        return f"Snapshot(t={self.logical_time}, keys={sorted(self._entries)})"


@dataclass
class Subscription:
    subscription_id: int
    condition: WatchCondition
    subscriber_id: str
    last_state: bool


def _log_line(entry: ContextEntry) -> str:
    record = {
        "t": entry.logical_time,
        "key": entry.key,
        "version": entry.version,
        "writer": entry.writer_id,
        "value": canonicalize_value(entry.value),
    }
    return json.dumps(record, separators=(",", ":"), allow_nan=False)


class ContextStore:
    """Shared watchable store.

    Two modes. In deterministic mode all notification delivery goes through
    :meth:`drain_notifications`, ordered by (logical_time, subscription_id).
    In concurrent mode every subscriber gets its own FIFO queue, drained via
    :meth:`poll_notifications`; commits stay totally ordered by an internal
    lock either way.
    """

    def __init__(self, mode: str = DETERMINISTIC):
        if mode not in (DETERMINISTIC, CONCURRENT):
            raise ValueError(f"unknown store mode: {mode!r}")
        self.mode = mode
        self._lock = threading.Lock()
        self._entries: dict[str, ContextEntry] = {}
        self._logical_time = 0
        self._subscriptions: list[Subscription] = []
        self._pending: deque[tuple[int, int]] = deque()  # (logical_time, subscription_id)
        self._queues: dict[int, deque[tuple[int, int]]] = {}
        self._log: list[str] = []
        self._listeners: list[Callable[[ContextEntry], None]] = []

    # -- Write operations --

    def put(self, key: str, value: ContextValue, writer_id: str) -> int:
        """Commit a new version of *key*; returns the committed version."""
        with self._lock:
            return self._commit(key, value, writer_id).version

    def cas_put(self, key: str, value: ContextValue, expected_version: int, writer_id: str) -> int:
        """Commit only if *key* is still at *expected_version* (0 = absent).

        Raises :class:`CasConflict` carrying the live version otherwise.
        """
        with self._lock:
            current = self._entries.get(key)
            current_version = 0 if current is None else current.version
            if current_version != expected_version:
                raise CasConflict(key, current_version)
            return self._commit(key, value, writer_id).version

    def put_many(self, writes: Iterable[tuple[str, ContextValue]], writer_id: str) -> list[int]:
        """Commit a batch atomically: no other writer or snapshot interleaves.

        Each write still gets its own version and logical time, and
        subscriptions are re-evaluated after each one.
        """
        with self._lock:
            return [self._commit(k, v, writer_id).version for k, v in writes]

    # -- Read operations --

    def get(self, key: str) -> ContextEntry | None:
        with self._lock:
            return self._entries.get(key)

    def snapshot(self) -> Snapshot:
        with self._lock:
            return Snapshot(dict(self._entries), self._logical_time)

    def last_logical_time(self) -> int:
        with self._lock:
            return self._logical_time

    # -- Subscriptions --

    def subscribe(self, condition: WatchCondition, subscriber_id: str) -> Subscription:
        """Register a rising-edge watch. If the condition already holds, one
        notification is queued immediately so registration order never races
        seeding order."""
        with self._lock:
            sub = Subscription(
                subscription_id=len(self._subscriptions) + 1,
                condition=condition,
                subscriber_id=subscriber_id,
                last_state=evaluate(condition, self._entries),
            )
            self._subscriptions.append(sub)
            if self.mode == CONCURRENT:
                self._queues[sub.subscription_id] = deque()
            if sub.last_state:
                self._enqueue(self._logical_time, sub.subscription_id)
            return sub

    def drain_notifications(self) -> list[tuple[int, int]]:
        """Deterministic mode only: return and clear all pending notifications
        as (subscription_id, logical_time), ordered by (logical_time, id)."""
        if self.mode != DETERMINISTIC:
            raise RuntimeError("drain_notifications requires deterministic mode")
        with self._lock:
            items = sorted(self._pending)
            self._pending.clear()
            return [(sub_id, t) for t, sub_id in items]

    def poll_notifications(self, subscriber_id: str) -> list[tuple[int, int]]:
        """Concurrent mode only: drain this subscriber's FIFO queues."""
        if self.mode != CONCURRENT:
            raise RuntimeError("poll_notifications requires concurrent mode")
        with self._lock:
            items: list[tuple[int, int]] = []
            for sub in self._subscriptions:
                if sub.subscriber_id == subscriber_id:
                    queue = self._queues[sub.subscription_id]
                    while queue:
                        items.append(queue.popleft())
            items.sort()
            return [(sub_id, t) for t, sub_id in items]

    # -- Commit log --

    def commit_log_lines(self) -> list[str]:
        with self._lock:
            return list(self._log)

    def write_commit_log(self, path) -> None:
        text = "\n".join(self.commit_log_lines())
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text + ("\n" if text else ""))

    def add_commit_listener(self, listener: Callable[[ContextEntry], None]) -> None:
        """Register a callback invoked once per commit, in commit order.

        Called with the store lock held; listeners must not call back into
        the store.
        """
        self._listeners.append(listener)

    # -- Internals --

    def _commit(self, key: str, value: ContextValue, writer_id: str) -> ContextEntry:
        if not isinstance(key, str) or not key:
            raise TypeError(f"key must be non-empty text, got {key!r}")
        if not isinstance(writer_id, str) or not writer_id:
            raise TypeError(f"writer_id must be non-empty text, got {writer_id!r}")
        previous = self._entries.get(key)
        self._logical_time += 1
        entry = ContextEntry(
            key=key,
            value=copy_value(value),
            version=1 if previous is None else previous.version + 1,
            writer_id=writer_id,
            logical_time=self._logical_time,
        )
        self._entries[key] = entry
        self._log.append(_log_line(entry))
        for listener in self._listeners:
            listener(entry)
        for sub in self._subscriptions:
            state = evaluate(sub.condition, self._entries)
            if state and not sub.last_state:
                self._enqueue(entry.logical_time, sub.subscription_id)
            sub.last_state = state
        return entry

    def _enqueue(self, logical_time: int, subscription_id: int) -> None:
        if self.mode == DETERMINISTIC:
            self._pending.append((logical_time, subscription_id))
        else:
            self._queues[subscription_id].append((logical_time, subscription_id))


def replay_commit_log(lines: Iterable[str]) -> ContextStore:
    """Rebuild a store from commit-log lines; the rebuilt log is bit-exact."""
    store = ContextStore()
    expected_t = 0
    for line_no, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"commit log line {line_no}: not valid JSON ({exc})") from exc
        if not isinstance(record, dict):
            raise ValueError(f"commit log line {line_no}: not an object")
        missing = [f for f in ("t", "key", "version", "writer", "value") if f not in record]
        if missing:
            raise ValueError(f"commit log line {line_no}: missing field {missing[0]!r}")
        expected_t += 1
        if record["t"] != expected_t:
            raise ValueError(
                f"commit log line {line_no}: logical time {record['t']} != {expected_t}"
            )
        previous = store._entries.get(record["key"])
        expected_version = 1 if previous is None else previous.version + 1
        if record["version"] != expected_version:
            raise ValueError(
                f"commit log line {line_no}: version {record['version']} != {expected_version}"
            )
        entry = ContextEntry(
            key=record["key"],
            value=copy_value(record["value"]),
            version=record["version"],
            writer_id=record["writer"],
            logical_time=record["t"],
        )
        store._entries[entry.key] = entry
        store._logical_time = entry.logical_time
        store._log.append(_log_line(entry))
    return store
