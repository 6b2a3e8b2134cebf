"""Canonical domain types shared by the server, simulator, clients and codecs.

Everything here is immutable once constructed and safe to share across
threads.  Validation never raises for bad field values: ``validate_device``
returns the list of violated invariants instead.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

__all__ = [
    "KINDS",
    "CRITICALITIES",
    "SCHEMAS",
    "SCHEMA_CODES",
    "DEFAULT_POLL_PERIODS",
    "COMPARATORS",
    "ORDERING_COMPARATORS",
    "ActionDescriptor",
    "Device",
    "DeviceState",
    "User",
    "Condition",
    "ScheduledTask",
    "Rule",
    "validate_device",
    "validate_condition",
]

KINDS = ("actuator", "sensor", "hybrid")
CRITICALITIES = ("vital", "security", "ambient")
SCHEMAS = ("on_off", "leveled", "presence", "open_closed")
ARG_KINDS = ("none", "level_0_100", "boolean")

# Discrete status vocabulary per schema.  Leveled devices carry their value
# in DeviceState.level; their status_code is the fixed token "level".
SCHEMA_CODES: dict[str, tuple[str, ...]] = {
    "on_off": ("off", "on"),
    "leveled": ("level",),
    "presence": ("absent", "present"),
    "open_closed": ("closed", "open"),
}

# Polling period in seconds per criticality tier.
DEFAULT_POLL_PERIODS: dict[str, float] = {
    "vital": 1.0,
    "security": 5.0,
    "ambient": 60.0,
}

COMPARATORS = ("=", "!=", "<", "<=", ">", ">=")
ORDERING_COMPARATORS = ("<", "<=", ">", ">=")

_ACTION_NAME_CHARS = frozenset("abcdefghijklmnopqrstuvwxyz0123456789_.-")


def _valid_action_name(name: object) -> bool:
    if not isinstance(name, str) or not name:
        return False
    return all(c in _ACTION_NAME_CHARS for c in name)

# Arg kinds that make sense for a device of a given status schema.
_SCHEMA_ARG_KINDS: dict[str, tuple[str, ...]] = {
    "on_off": ("none", "boolean"),
    "leveled": ("none", "level_0_100"),
    "presence": ("none",),
    "open_closed": ("none",),
}


@dataclass(frozen=True)
class ActionDescriptor:
    """One controllable action a device offers, e.g. set_on or set_level."""

    action_name: str
    arg_kind: str = "none"


@dataclass(frozen=True)
class Device:
    """Registry entry: identity, taxonomy and controllable capabilities."""

    oid: int
    name: str
    kind: str
    criticality: str
    status_schema: str
    capabilities: tuple[ActionDescriptor, ...] = ()

    def capability(self, action_name: str) -> ActionDescriptor | None:
        for cap in self.capabilities:
            if cap.action_name == action_name:
                return cap
        return None


@dataclass(frozen=True)
class DeviceState:
    """Latest polled status of one device at a simulated-clock instant."""

    oid: int
    status_code: str
    level: int | None
    timestamp: float

    def matches_schema(self, schema: str) -> bool:
        codes = SCHEMA_CODES.get(schema)
        if codes is None or self.status_code not in codes:
            return False
        if schema == "leveled":
            return self.level is not None and 0 <= self.level <= 100
        return self.level is None


def initial_state(device: Device, timestamp: float = 0.0) -> DeviceState:
    """Default state for a freshly registered device."""
    code = SCHEMA_CODES[device.status_schema][0]
    level = 0 if device.status_schema == "leveled" else None
    return DeviceState(device.oid, code, level, timestamp)


@dataclass(frozen=True)
class User:
    """Account record.  Only derived material is stored, never the password.

    ``stored_verifier`` is a one-way digest under a server-local salt, used
    to check a directly presented password.  The recoverable material the
    salted-hash protocol needs lives in the auth module's credential vault.
    Scene authoring is a server-local file operation, so the mobile role can
    never acquire it: there is no endpoint and no flag to grant.
    """

    username: str
    stored_verifier: str
    role: str  # "admin" | "mobile"
    allowed_oids: frozenset[int] | str = "all"  # "all" or explicit oid set

    def may_control(self, oid: int) -> bool:
        if self.allowed_oids == "all":
            return True
        return oid in self.allowed_oids  # type: ignore[operator]


@dataclass(frozen=True)
class Condition:
    """Single comparison against a device's live state."""

    oid: int
    field: str  # "status" | "level"
    comparator: str
    operand: str | int


@dataclass(frozen=True)
class ScheduledTask:
    """One-shot action, fired at `now` or a time of day, then disabled."""

    id: str
    name: str
    oid: int
    action: str
    arg: str = ""
    when: str = "now"  # "now" or "HH:MM"
    criteria: tuple[Condition, ...] = ()
    enabled: bool = True

    def disabled(self) -> "ScheduledTask":
        return replace(self, enabled=False)


@dataclass(frozen=True)
class Rule:
    """Persistent condition set; while enabled, fires its actions on every
    false-to-true edge of the conjunction."""

    id: str
    name: str
    conditions: tuple[Condition, ...]
    actions: tuple[tuple[int, str, str], ...]  # (oid, action, arg)
    enabled: bool = True


def validate_condition(cond: Condition) -> list[str]:
    """Return every violated condition invariant (empty list means valid)."""
    problems: list[str] = []
    if not isinstance(cond.oid, int) or cond.oid < 1:
        problems.append("condition oid must be >= 1")
    if cond.field not in ("status", "level"):
        problems.append(f"unknown condition field {cond.field!r}")
    if cond.comparator not in COMPARATORS:
        problems.append(f"unknown comparator {cond.comparator!r}")
    elif cond.comparator in ORDERING_COMPARATORS and cond.field != "level":
        problems.append("ordering comparators require field=level")
    if cond.field == "level" and not isinstance(cond.operand, int):
        problems.append("level conditions need an integer operand")
    return problems


def validate_device(device: Device) -> list[str]:
    """Return every violated device invariant (empty list means valid).

    Total over arbitrary field values: never raises.
    """
    problems: list[str] = []
    if not isinstance(device.oid, int) or isinstance(device.oid, bool) or device.oid < 1:
        problems.append("oid must be >= 1")
    if not isinstance(device.name, str) or not device.name:
        problems.append("name must be non-empty text")
    if device.kind not in KINDS:
        problems.append(f"unknown kind {device.kind!r}")
    if device.criticality not in CRITICALITIES:
        problems.append(f"unknown criticality {device.criticality!r}")
    if device.status_schema not in SCHEMAS:
        problems.append(f"unknown status schema {device.status_schema!r}")

    caps = device.capabilities
    if not isinstance(caps, (tuple, list)):
        problems.append("capabilities must be a sequence of ActionDescriptor")
        return problems
    if device.kind == "sensor" and caps:
        problems.append("sensor has capabilities")
    if device.kind in ("actuator", "hybrid") and not caps:
        problems.append(f"{device.kind} must declare capabilities")

    seen: set[str] = set()
    if isinstance(device.status_schema, str):
        allowed_args = _SCHEMA_ARG_KINDS.get(device.status_schema, ARG_KINDS)
    else:
        allowed_args = ARG_KINDS
    for cap in caps:
        if not isinstance(cap, ActionDescriptor):
            problems.append("capabilities must be ActionDescriptor values")
            continue
        if not _valid_action_name(cap.action_name):
            problems.append(f"action name {cap.action_name!r} must match [a-z0-9_.-]+")
        elif cap.action_name in seen:
            problems.append(f"duplicate action name {cap.action_name!r}")
        else:
            seen.add(cap.action_name)
        if cap.arg_kind not in ARG_KINDS:
            problems.append(f"unknown arg kind {cap.arg_kind!r}")
        elif cap.arg_kind not in allowed_args:
            problems.append(
                f"arg kind {cap.arg_kind!r} inconsistent with schema "
                f"{device.status_schema!r}"
            )
    return problems
