"""Shared system database: devices, states, scene, schedules, rules, users.

Single-process, in-memory, guarded by one writer lock.  Readers take
:class:`Snapshot` views that are consistent across tables and never torn by
concurrent writers.  Every mutation bumps a monotone revision counter.

Persistence is a text file reusing the record grammars under section
headers, so one parser covers both the wire and the disk.
"""

from __future__ import annotations

import os
import threading
from dataclasses import dataclass, replace
from types import MappingProxyType
from typing import Mapping

from . import records
from .mapcodec import MapScene, SceneError, decode_scene, encode_scene
from .model import (
    Device,
    DeviceState,
    Rule,
    ScheduledTask,
    User,
    validate_condition,
    validate_device,
)

__all__ = ["StoreError", "StoreParseError", "Snapshot", "Store"]

SECTIONS = ("#DEVICES", "#STATES", "#WALLS", "#ICONS", "#SCHEDULES", "#RULES", "#USERS")


class StoreError(ValueError):
    """A mutation violated a store invariant."""


class StoreParseError(ValueError):
    """Store file rejected; nothing was loaded."""

    def __init__(self, message: str, line_no: int | None = None):
        self.line_no = line_no
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class Snapshot:
    """Point-in-time read view; internally consistent across tables."""

    revision: int
    devices: Mapping[int, Device]
    states: Mapping[int, DeviceState]
    scene: MapScene
    schedules: Mapping[str, ScheduledTask]
    rules: Mapping[str, Rule]


class Store:
    """One writer lock, many readers via snapshots."""

    def __init__(self) -> None:
        self._lock = threading.RLock()
        self._devices: dict[int, Device] = {}
        self._states: dict[int, DeviceState] = {}
        self._scene: MapScene = MapScene()
        self._schedules: dict[str, ScheduledTask] = {}
        self._rules: dict[str, Rule] = {}
        self._users: dict[str, User] = {}
        self._user_secrets: dict[str, str] = {}
        self._revision = 0

    # -- reads ---------------------------------------------------------------

    @property
    def revision(self) -> int:
        with self._lock:
            return self._revision

    def snapshot(self) -> Snapshot:
        with self._lock:
            return Snapshot(
                revision=self._revision,
                devices=MappingProxyType(dict(self._devices)),
                states=MappingProxyType(dict(self._states)),
                scene=self._scene,
                schedules=MappingProxyType(dict(self._schedules)),
                rules=MappingProxyType(dict(self._rules)),
            )

    def device(self, oid: int) -> Device | None:
        with self._lock:
            return self._devices.get(oid)

    def user(self, username: str) -> User | None:
        with self._lock:
            return self._users.get(username)

    def user_secret(self, username: str) -> str | None:
        with self._lock:
            return self._user_secrets.get(username)

    # -- writes --------------------------------------------------------------

    def register_device(self, device: Device) -> int:
        problems = validate_device(device)
        if problems:
            raise StoreError("; ".join(problems))
        with self._lock:
            if device.oid in self._devices:
                raise StoreError(f"oid {device.oid} already registered")
            self._devices[device.oid] = device
            self._revision += 1
            return self._revision

    def upsert_state(self, state: DeviceState) -> int:
        with self._lock:
            device = self._devices.get(state.oid)
            if device is None:
                raise StoreError(f"unknown oid {state.oid}")
            if not state.matches_schema(device.status_schema):
                raise StoreError(
                    f"state {state.status_code!r}/{state.level!r} invalid for "
                    f"schema {device.status_schema}"
                )
            prev = self._states.get(state.oid)
            if prev is not None and state.timestamp < prev.timestamp:
                raise StoreError(
                    f"timestamp regression for oid {state.oid}: "
                    f"{state.timestamp} < {prev.timestamp}"
                )
            self._states[state.oid] = state
            self._revision += 1
            return self._revision

    def set_scene(self, scene: MapScene) -> int:
        with self._lock:
            for icon in scene.icons:
                if icon.oid > 0 and icon.oid not in self._devices:
                    raise StoreError(f"scene icon references unknown oid {icon.oid}")
            self._scene = scene
            self._revision += 1
            return self._revision

    def _check_target(self, oid: int, action: str) -> None:
        device = self._devices.get(oid)
        if device is None:
            raise StoreError(f"unknown oid {oid}")
        if device.capability(action) is None:
            raise StoreError(f"device {oid} has no action {action!r}")

    def put_schedule(self, task: ScheduledTask) -> int:
        with self._lock:
            self._check_target(task.oid, task.action)
            _check_when(task.when)
            for cond in task.criteria:
                problems = validate_condition(cond)
                if problems:
                    raise StoreError("; ".join(problems))
            self._schedules[task.id] = task
            self._revision += 1
            return self._revision

    def put_rule(self, rule: Rule) -> int:
        with self._lock:
            if not rule.conditions:
                raise StoreError("rule needs at least one condition")
            if not rule.actions:
                raise StoreError("rule needs at least one action")
            for cond in rule.conditions:
                problems = validate_condition(cond)
                if problems:
                    raise StoreError("; ".join(problems))
            for oid, action, _arg in rule.actions:
                self._check_target(oid, action)
            self._rules[rule.id] = rule
            self._revision += 1
            return self._revision

    def set_schedule_enabled(self, task_id: str, enabled: bool) -> int:
        with self._lock:
            task = self._schedules.get(task_id)
            if task is None:
                raise StoreError(f"unknown schedule {task_id!r}")
            self._schedules[task_id] = replace(task, enabled=enabled)
            self._revision += 1
            return self._revision

    def set_rule_enabled(self, rule_id: str, enabled: bool) -> int:
        with self._lock:
            rule = self._rules.get(rule_id)
            if rule is None:
                raise StoreError(f"unknown rule {rule_id!r}")
            self._rules[rule_id] = replace(rule, enabled=enabled)
            self._revision += 1
            return self._revision

    def add_user(self, user: User, sealed_secret: str) -> int:
        with self._lock:
            self._users[user.username] = user
            self._user_secrets[user.username] = sealed_secret
            self._revision += 1
            return self._revision

    # -- persistence -----------------------------------------------------------

    def dump(self) -> str:
        """Persisted form as text.  Ordering is deterministic, so equal
        stores always produce byte-identical dumps."""
        with self._lock:
            lines: list[str] = ["#DEVICES"]
            for oid in sorted(self._devices):
                lines.append(records.format_device(self._devices[oid], with_arg_kinds=True))
            lines.append("#STATES")
            for oid in sorted(self._states):
                lines.append(records.format_state(self._states[oid]))
            scene_block = encode_scene(self._scene)
            lines.extend(scene_block.split("\n")[:-1])
            lines.append("#SCHEDULES")
            for task_id in sorted(self._schedules):
                lines.append(records.format_schedule(self._schedules[task_id]))
            lines.append("#RULES")
            for rule_id in sorted(self._rules):
                lines.append(records.format_rule(self._rules[rule_id]))
            lines.append("#USERS")
            for username in sorted(self._users):
                lines.append(
                    records.format_user(self._users[username], self._user_secrets[username])
                )
            return "\n".join(lines) + "\n"

    def persist(self, path: str | os.PathLike[str]) -> None:
        """Write the whole store to ``path`` atomically."""
        text = self.dump()
        tmp = f"{os.fspath(path)}.tmp"
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)

    @classmethod
    def restore(cls, path: str | os.PathLike[str]) -> "Store":
        """Parse a store file; raises :class:`StoreParseError` and loads
        nothing on any defect (no partial stores)."""
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
        return cls.loads(text)

    @classmethod
    def loads(cls, text: str) -> "Store":
        if not text.endswith("\n"):
            raise StoreParseError("store file must end with a newline (truncated?)")
        lines = text.split("\n")[:-1]
        sections: dict[str, list[tuple[int, str]]] = {name: [] for name in SECTIONS}
        current: str | None = None
        expected = list(SECTIONS)
        for idx, line in enumerate(lines, start=1):
            if line in sections:
                if not expected or expected[0] != line:
                    raise StoreParseError(f"unexpected section {line}", idx)
                current = expected.pop(0)
            elif current is None:
                raise StoreParseError("content before #DEVICES header", idx)
            else:
                sections[current].append((idx, line))
        if expected:
            raise StoreParseError(f"missing section {expected[0]} (truncated?)")

        store = cls()

        def parse_section(name: str, parser, sink) -> None:
            for idx, line in sections[name]:
                try:
                    sink(parser(line))
                except (records.RecordError, StoreError) as exc:
                    raise StoreParseError(str(exc), idx) from None

        parse_section("#DEVICES", records.parse_device, store.register_device)
        parse_section("#STATES", records.parse_state, store.upsert_state)

        scene_lines = ["#WALLS"]
        scene_lines.extend(line for _, line in sections["#WALLS"])
        scene_lines.append("#ICONS")
        scene_lines.extend(line for _, line in sections["#ICONS"])
        try:
            store.set_scene(decode_scene("\n".join(scene_lines) + "\n"))
        except (SceneError, StoreError) as exc:
            raise StoreParseError(f"scene: {exc}") from None

        parse_section("#SCHEDULES", records.parse_schedule, store.put_schedule)
        parse_section("#RULES", records.parse_rule, store.put_rule)

        for idx, line in sections["#USERS"]:
            try:
                user, sealed = records.parse_user(line)
            except records.RecordError as exc:
                raise StoreParseError(str(exc), idx) from None
            store.add_user(user, sealed)

        store._revision = 0
        return store


def _check_when(when: str) -> None:
    if when == "now":
        return
    parts = when.split(":")
    if len(parts) == 2 and parts[0].isdigit() and parts[1].isdigit():
        hh, mm = int(parts[0]), int(parts[1])
        if 0 <= hh <= 23 and 0 <= mm <= 59:
            return
    raise StoreError(f"when must be 'now' or HH:MM, got {when!r}")
