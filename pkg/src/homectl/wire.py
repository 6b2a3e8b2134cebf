"""Machine-facing gateway: GET-style paths with query params in, terse
line-oriented responses out, plus the 160-character SMS framing.

Every response starts with ``OK`` or ``ERR <code>``; bodies are record
lines under the grammars in :mod:`homectl.records`.  All authentication
denials collapse to the single line ``ERR AUTH`` so the wire leaks nothing
about why a request was refused.  Requests decoded from SMS frames flow
through the same :meth:`Gateway.handle` as GET traffic, which is what makes
the two transports provably equivalent.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Callable
from urllib.parse import quote, unquote

from .auth import Authenticator, AuthRefused, Verdict
from .mapcodec import MapScene, encode_scene, escape_field, icon_for, unescape_field
from . import records
from .model import Rule, ScheduledTask, User
from .sim import DispatchError, Fleet
from .store import Snapshot, Store, StoreError

__all__ = [
    "SMS_LIMIT",
    "SmsEncodeError",
    "WireRequest",
    "WireResponse",
    "parse_query",
    "encode_query",
    "parse_response",
    "sms_encode",
    "sms_decode",
    "live_scene",
    "Gateway",
]

logger = logging.getLogger("homectl.wire")

SMS_LIMIT = 160

# endpoint -> (required params, optional params with defaults); auth params
# u/c/h are implied everywhere except the handshake
_ENDPOINTS: dict[str, tuple[tuple[str, ...], dict[str, str]]] = {
    "/m/devices": ((), {}),
    "/m/state": ((), {}),
    "/m/command": (("oid", "action"), {"arg": ""}),
    "/m/schedules": ((), {}),
    "/m/schedule_put": (
        ("id", "name", "oid", "action", "when"),
        {"arg": "", "criteria": "", "enabled": "1"},
    ),
    "/m/schedule_enable": (("id", "enabled"), {}),
    "/m/rules": ((), {}),
    "/m/rule_put": (("id", "name", "conditions", "actions"), {"enabled": "1"}),
    "/m/rule_enable": (("id", "enabled"), {}),
    "/m/step": (("ticks",), {}),
}


class SmsEncodeError(ValueError):
    """Operation does not fit the 160-character frame."""


@dataclass(frozen=True)
class WireRequest:
    path: str
    params: dict[str, str]

    @classmethod
    def parse(cls, text: str) -> "WireRequest":
        path, _, query = text.partition("?")
        return cls(path, parse_query(query))


def parse_query(query: str) -> dict[str, str]:
    """Percent-decoded key/value pairs; later duplicates win."""
    params: dict[str, str] = {}
    if not query:
        return params
    for piece in query.split("&"):
        if not piece:
            continue
        key, _, value = piece.partition("=")
        params[unquote(key)] = unquote(value)
    return params


def encode_query(params: dict[str, str]) -> str:
    return "&".join(f"{quote(k, safe='')}={quote(v, safe='')}" for k, v in params.items())


@dataclass(frozen=True)
class WireResponse:
    status: str  # "OK" or "ERR <code>"
    lines: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return self.status == "OK"

    def render(self) -> str:
        return "\n".join((self.status,) + self.lines) + "\n"


def parse_response(text: str) -> WireResponse:
    """Re-parse a rendered response; raises ValueError off-grammar."""
    if not text.endswith("\n"):
        raise ValueError("response must end with a newline")
    lines = text.split("\n")[:-1]
    if not lines:
        raise ValueError("empty response")
    status = lines[0]
    if status != "OK" and not (status.startswith("ERR ") and len(status) > 4):
        raise ValueError(f"bad status line {status!r}")
    for line in lines[1:]:
        if any((not ch.isprintable()) for ch in line):
            raise ValueError(f"unprintable character in body line {line!r}")
    return WireResponse(status, tuple(lines[1:]))


def _ok(*lines: str) -> WireResponse:
    return WireResponse("OK", tuple(lines))


def _err(code: str) -> WireResponse:
    return WireResponse(f"ERR {code}")


# -- SMS framing -----------------------------------------------------------------

def sms_encode(op: str, params: dict[str, str], client_id: str, username: str,
               credential_hash: str) -> str:
    """Pack an operation into one self-contained frame: ``S|c|u|h|op|k=v|…``.

    Empty parameters are omitted; the server fills documented defaults.
    """
    parts = ["S", escape_field(client_id), escape_field(username), credential_hash, op]
    for key, value in params.items():
        if value != "":
            parts.append(f"{key}={escape_field(value)}")
    frame = "|".join(parts)
    if len(frame) > SMS_LIMIT:
        raise SmsEncodeError(
            f"frame too large: {len(frame)} > {SMS_LIMIT} chars; shorten names or criteria"
        )
    return frame


def sms_decode(frame: str) -> WireRequest:
    """Rebuild the equivalent request; raises ValueError on malformed frames."""
    if len(frame) > SMS_LIMIT:
        raise ValueError("frame exceeds 160 characters")
    parts = frame.split("|")
    if len(parts) < 5 or parts[0] != "S":
        raise ValueError("malformed SMS frame")
    params: dict[str, str] = {
        "c": unescape_field(parts[1]),
        "u": unescape_field(parts[2]),
        "h": parts[3],
    }
    for token in parts[5:]:
        key, sep, value = token.partition("=")
        if not sep or not key:
            raise ValueError(f"malformed SMS parameter {token!r}")
        params[key] = unescape_field(value)
    return WireRequest(f"/m/{parts[4]}", params)


# -- payload builders --------------------------------------------------------------

def live_scene(snap: Snapshot) -> MapScene:
    """Scene with icon ids refreshed from current device states."""
    icons = []
    for icon in snap.scene.icons:
        if icon.oid > 0:
            device = snap.devices.get(icon.oid)
            state = snap.states.get(icon.oid)
            if device is not None and state is not None:
                icons.append(
                    replace(icon, icon_id=icon_for(device.status_schema, state))
                )
                continue
        icons.append(icon)
    return MapScene(snap.scene.walls, tuple(icons))


def serve_devices(snap: Snapshot) -> tuple[str, ...]:
    """The infrequent tier: device table with capability names."""
    return tuple(records.format_device(snap.devices[oid]) for oid in sorted(snap.devices))


def serve_state_and_map(snap: Snapshot) -> tuple[str, ...]:
    """The frequent tier: latest states plus the live-icon scene block."""
    lines = ["#STATES"]
    lines.extend(records.format_state(snap.states[oid]) for oid in sorted(snap.states))
    lines.extend(encode_scene(live_scene(snap)).split("\n")[:-1])
    return tuple(lines)


# -- the gateway ---------------------------------------------------------------------

class Gateway:
    """Dispatches wire requests against the store, fleet and authenticator."""

    def __init__(
        self,
        store: Store,
        auth: Authenticator,
        fleet: Fleet,
        step_fn: Callable[[int], float] | None = None,
    ):
        self._store = store
        self._auth = auth
        self._fleet = fleet
        self._step_fn = step_fn

    def handle(self, request: WireRequest, now: float) -> WireResponse:
        """Single entry point for both transports; never raises."""
        try:
            return self._route(request, now)
        except Exception:
            logger.exception("unhandled error for %s", request.path)
            return _err("INTERNAL")

    def handle_sms(self, frame: str, now: float) -> WireResponse:
        try:
            request = sms_decode(frame)
        except ValueError:
            return _err("SMS")
        return self.handle(request, now)

    def _route(self, request: WireRequest, now: float) -> WireResponse:
        if request.path == "/m/handshake":
            return self._handshake(request, now)
        if request.path == "/m/login":
            missing = [p for p in ("c", "u", "h") if p not in request.params]
            if missing:
                return _err(f"PARAM {missing[0]}")
            user = self._verify(request, now)
            return _ok() if user is not None else _err("AUTH")
        spec = _ENDPOINTS.get(request.path)
        if spec is None:
            return _err("PATH")
        missing = [p for p in ("c", "u", "h") if p not in request.params]
        if missing:
            return _err(f"PARAM {missing[0]}")
        user = self._verify(request, now)
        if user is None:
            return _err("AUTH")
        required, defaults = spec
        params = dict(defaults)
        for name in required:
            if name not in request.params:
                return _err(f"PARAM {name}")
        params.update(request.params)
        return self._execute(request.path, params, user, now)

    def _handshake(self, request: WireRequest, now: float) -> WireResponse:
        for name in ("c", "k"):
            if name not in request.params:
                return _err(f"PARAM {name}")
        try:
            sealed = self._auth.issue_magic(request.params["c"], request.params["k"], now)
        except AuthRefused:
            return _err("AUTH")
        return _ok(sealed)

    def _verify(self, request: WireRequest, now: float) -> User | None:
        verdict = self._auth.verify(
            request.params["c"], request.params["u"], request.params["h"], now
        )
        if verdict is not Verdict.ALLOW:
            return None
        return self._store.user(request.params["u"])

    def _execute(self, path: str, p: dict[str, str], user: User, now: float) -> WireResponse:
        snap = self._store.snapshot()
        try:
            if path == "/m/devices":
                return _ok(*serve_devices(snap))
            if path == "/m/state":
                return _ok(*serve_state_and_map(snap))
            if path == "/m/command":
                oid = int(p["oid"])
                if not user.may_control(oid):
                    return _err("AUTH")
                self._fleet.dispatch(oid, p["action"], p["arg"])
                return _ok()
            if path == "/m/schedules":
                return _ok(*(records.format_schedule(snap.schedules[i])
                             for i in sorted(snap.schedules)))
            if path == "/m/schedule_put":
                oid = int(p["oid"])
                if not user.may_control(oid):
                    return _err("AUTH")
                task = ScheduledTask(
                    id=p["id"],
                    name=p["name"],
                    oid=oid,
                    action=p["action"],
                    arg=p["arg"],
                    when=p["when"],
                    criteria=records.parse_conditions(p["criteria"]),
                    enabled=_parse_flag(p["enabled"]),
                )
                self._store.put_schedule(task)
                return _ok()
            if path == "/m/schedule_enable":
                self._store.set_schedule_enabled(p["id"], _parse_flag(p["enabled"]))
                return _ok()
            if path == "/m/rules":
                return _ok(*(records.format_rule(snap.rules[i]) for i in sorted(snap.rules)))
            if path == "/m/rule_put":
                rule = Rule(
                    id=p["id"],
                    name=p["name"],
                    conditions=records.parse_conditions(p["conditions"]),
                    actions=records.parse_rule_actions(p["actions"]),
                    enabled=_parse_flag(p["enabled"]),
                )
                for oid, _action, _arg in rule.actions:
                    if not user.may_control(oid):
                        return _err("AUTH")
                self._store.put_rule(rule)
                return _ok()
            if path == "/m/rule_enable":
                self._store.set_rule_enabled(p["id"], _parse_flag(p["enabled"]))
                return _ok()
            if path == "/m/step":
                if self._step_fn is None:
                    return _err("OP clock-stepping disabled")
                new_now = self._step_fn(int(p["ticks"]))
                return _ok(records.format_timestamp(new_now))
        except (DispatchError, StoreError, records.RecordError, ValueError) as exc:
            return _err(f"OP {_one_line(exc)}")
        return _err("PATH")


def _parse_flag(token: str) -> bool:
    if token not in ("0", "1"):
        raise ValueError(f"enabled flag must be 0 or 1, got {token!r}")
    return token == "1"


def _one_line(exc: Exception) -> str:
    text = str(exc).replace("\n", " ")
    return escape_field(text)[:120] or exc.__class__.__name__
