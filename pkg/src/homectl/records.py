"""Line grammars for device, state, schedule, rule and user records.

One grammar serves both the wire responses and the store file, so a single
parser round-trips everything.  Fields are ``|``-separated with free-text
parts percent-escaped; structured sub-lists use ``,`` between items and
``:`` inside them.
"""

from __future__ import annotations

from .mapcodec import escape_field, unescape_field
from .model import (
    ActionDescriptor,
    Condition,
    Device,
    DeviceState,
    Rule,
    ScheduledTask,
    User,
)

__all__ = [
    "RecordError",
    "format_device",
    "parse_device",
    "format_state",
    "parse_state",
    "format_schedule",
    "parse_schedule",
    "format_rule",
    "parse_rule",
    "format_user",
    "parse_user",
    "format_conditions",
    "parse_conditions",
    "format_timestamp",
]


class RecordError(ValueError):
    """A record line does not match its grammar."""


def format_timestamp(ts: float) -> str:
    # millisecond precision; the virtual clock never produces finer grain
    return f"{ts:.3f}"


def _int_field(token: str, what: str) -> int:
    try:
        return int(token)
    except ValueError:
        raise RecordError(f"{what} is not an integer: {token!r}") from None


def _split(line: str, n: int, what: str) -> list[str]:
    parts = line.split("|")
    if len(parts) != n:
        raise RecordError(f"{what} needs {n} fields, got {len(parts)}: {line!r}")
    return parts


# -- devices ---------------------------------------------------------------

def format_device(device: Device, with_arg_kinds: bool = False) -> str:
    """Wire form lists action names; the store form appends ``:arg_kind``
    so capabilities survive a persistence round-trip."""
    if with_arg_kinds:
        caps = ",".join(f"{c.action_name}:{c.arg_kind}" for c in device.capabilities)
    else:
        caps = ",".join(c.action_name for c in device.capabilities)
    return "|".join(
        (
            str(device.oid),
            escape_field(device.name),
            device.kind,
            device.criticality,
            device.status_schema,
            caps,
        )
    )


def parse_device(line: str) -> Device:
    parts = _split(line, 6, "device record")
    caps: list[ActionDescriptor] = []
    if parts[5]:
        for token in parts[5].split(","):
            name, sep, arg_kind = token.partition(":")
            caps.append(ActionDescriptor(name, arg_kind if sep else "none"))
    return Device(
        oid=_int_field(parts[0], "oid"),
        name=unescape_field(parts[1]),
        kind=parts[2],
        criticality=parts[3],
        status_schema=parts[4],
        capabilities=tuple(caps),
    )


# -- states ----------------------------------------------------------------

def format_state(state: DeviceState) -> str:
    level = "" if state.level is None else str(state.level)
    return f"{state.oid}|{state.status_code}|{level}|{format_timestamp(state.timestamp)}"


def parse_state(line: str) -> DeviceState:
    parts = _split(line, 4, "state record")
    try:
        ts = float(parts[3])
    except ValueError:
        raise RecordError(f"bad timestamp {parts[3]!r}") from None
    level = None if parts[2] == "" else _int_field(parts[2], "level")
    return DeviceState(_int_field(parts[0], "oid"), parts[1], level, ts)


# -- conditions ------------------------------------------------------------

def format_conditions(conditions: tuple[Condition, ...]) -> str:
    tokens = []
    for c in conditions:
        operand = escape_field(str(c.operand))
        tokens.append(f"{c.oid}:{c.field}:{c.comparator}:{operand}")
    return ",".join(tokens)


def parse_conditions(text: str) -> tuple[Condition, ...]:
    if not text:
        return ()
    out: list[Condition] = []
    for token in text.split(","):
        parts = token.split(":", 3)
        if len(parts) != 4:
            raise RecordError(f"condition needs oid:field:cmp:operand, got {token!r}")
        oid = _int_field(parts[0], "condition oid")
        field, cmp_, raw = parts[1], parts[2], unescape_field(parts[3])
        operand: str | int = _int_field(raw, "operand") if field == "level" else raw
        out.append(Condition(oid, field, cmp_, operand))
    return tuple(out)


# -- schedules ---------------------------------------------------------------

def format_schedule(task: ScheduledTask) -> str:
    return "|".join(
        (
            escape_field(task.id),
            escape_field(task.name),
            str(task.oid),
            task.action,
            escape_field(task.arg),
            task.when,
            format_conditions(task.criteria),
            "1" if task.enabled else "0",
        )
    )


def parse_schedule(line: str) -> ScheduledTask:
    parts = _split(line, 8, "schedule record")
    return ScheduledTask(
        id=unescape_field(parts[0]),
        name=unescape_field(parts[1]),
        oid=_int_field(parts[2], "oid"),
        action=parts[3],
        arg=unescape_field(parts[4]),
        when=parts[5],
        criteria=parse_conditions(parts[6]),
        enabled=_parse_enabled(parts[7]),
    )


def _parse_enabled(token: str) -> bool:
    if token not in ("0", "1"):
        raise RecordError(f"enabled flag must be 0 or 1, got {token!r}")
    return token == "1"


# -- rules -------------------------------------------------------------------

def format_rule_actions(actions: tuple[tuple[int, str, str], ...]) -> str:
    return ",".join(f"{oid}:{action}:{escape_field(arg)}" for oid, action, arg in actions)


def parse_rule_actions(text: str) -> tuple[tuple[int, str, str], ...]:
    if not text:
        return ()
    out: list[tuple[int, str, str]] = []
    for token in text.split(","):
        parts = token.split(":", 2)
        if len(parts) != 3:
            raise RecordError(f"rule action needs oid:action:arg, got {token!r}")
        out.append((_int_field(parts[0], "action oid"), parts[1], unescape_field(parts[2])))
    return tuple(out)


def format_rule(rule: Rule) -> str:
    return "|".join(
        (
            escape_field(rule.id),
            escape_field(rule.name),
            format_conditions(rule.conditions),
            format_rule_actions(rule.actions),
            "1" if rule.enabled else "0",
        )
    )


def parse_rule(line: str) -> Rule:
    parts = _split(line, 5, "rule record")
    return Rule(
        id=unescape_field(parts[0]),
        name=unescape_field(parts[1]),
        conditions=parse_conditions(parts[2]),
        actions=parse_rule_actions(parts[3]),
        enabled=_parse_enabled(parts[4]),
    )


# -- users -------------------------------------------------------------------

def format_user(user: User, sealed_secret: str) -> str:
    if user.allowed_oids == "all":
        allowed = "all"
    else:
        allowed = ",".join(str(o) for o in sorted(user.allowed_oids))  # type: ignore[arg-type]
    return "|".join(
        (
            escape_field(user.username),
            user.role,
            allowed,
            user.stored_verifier,
            sealed_secret,
        )
    )


def parse_user(line: str) -> tuple[User, str]:
    parts = _split(line, 5, "user record")
    allowed: frozenset[int] | str
    if parts[2] == "all":
        allowed = "all"
    elif parts[2] == "":
        allowed = frozenset()
    else:
        allowed = frozenset(_int_field(t, "allowed oid") for t in parts[2].split(","))
    user = User(
        username=unescape_field(parts[0]),
        stored_verifier=parts[3],
        role=parts[1],
        allowed_oids=allowed,
    )
    return user, parts[4]
