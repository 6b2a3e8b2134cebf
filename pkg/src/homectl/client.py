"""Scriptable client: handshake, salted login, two-tier refresh, schedule
and rule management, and the SMS fallback path.

The password lives in process memory only.  On any authentication denial
the session transparently re-handshakes and retries the request exactly
once; mutating operations carry client-generated stable ids, so a retried
request can never duplicate a record.
"""

from __future__ import annotations

import hashlib
import http.client
import time
from dataclasses import dataclass
from typing import Protocol
from urllib.parse import quote

from . import records
from .auth import compute_credential_hash, unseal_magic
from .mapcodec import MapScene, decode_scene, render_ascii
from .model import Device, DeviceState, Rule, ScheduledTask
from .wire import WireResponse, encode_query, parse_response, sms_encode

__all__ = [
    "ClientError",
    "AuthError",
    "NetworkError",
    "ValidationError",
    "Transport",
    "HttpTransport",
    "LocalTransport",
    "CaptureTransport",
    "ClientSession",
]

DEFAULT_STALENESS = 10.0  # seconds before cached state is considered old


class ClientError(Exception):
    exit_code = 1


class AuthError(ClientError):
    exit_code = 2


class NetworkError(ClientError):
    exit_code = 3


class ValidationError(ClientError):
    exit_code = 4


class Transport(Protocol):
    def request(self, path_query: str) -> str: ...

    def send_sms(self, frame: str) -> str: ...


class HttpTransport:
    """One short-lived HTTP connection per request."""

    def __init__(self, host: str, port: int, timeout: float = 10.0):
        self._host = host
        self._port = port
        self._timeout = timeout

    def request(self, path_query: str) -> str:
        conn = http.client.HTTPConnection(self._host, self._port, timeout=self._timeout)
        try:
            conn.request("GET", path_query)
            response = conn.getresponse()
            return response.read().decode("utf-8")
        except OSError as exc:
            raise NetworkError(f"cannot reach {self._host}:{self._port}: {exc}") from exc
        finally:
            conn.close()

    def send_sms(self, frame: str) -> str:
        # emulated GSM modem injection point on the server
        return self.request(f"/sms?f={quote(frame, safe='')}")


class LocalTransport:
    """In-process transport for tests: same grammar, no sockets."""

    def __init__(self, gateway, now_fn):
        self._gateway = gateway
        self._now_fn = now_fn

    def request(self, path_query: str) -> str:
        from .wire import WireRequest

        return self._gateway.handle(WireRequest.parse(path_query), self._now_fn()).render()

    def send_sms(self, frame: str) -> str:
        return self._gateway.handle_sms(frame, self._now_fn()).render()


class CaptureTransport:
    """Wrapper recording every byte sent and received (leak checks)."""

    def __init__(self, inner: Transport):
        self._inner = inner
        self.traffic: list[str] = []

    def request(self, path_query: str) -> str:
        self.traffic.append(path_query)
        response = self._inner.request(path_query)
        self.traffic.append(response)
        return response

    def send_sms(self, frame: str) -> str:
        self.traffic.append(frame)
        response = self._inner.send_sms(frame)
        self.traffic.append(response)
        return response


def _stable_id(*parts: str) -> str:
    return hashlib.sha256("|".join(parts).encode("utf-8")).hexdigest()[:12]


@dataclass
class _Cache:
    devices: dict[int, Device] | None = None
    devices_at: float | None = None
    states: dict[int, DeviceState] | None = None
    scene: MapScene | None = None
    state_at: float | None = None


class ClientSession:
    """Authenticated conversation with one gateway."""

    def __init__(
        self,
        transport: Transport,
        client_id: str,
        username: str,
        password: str,
        special_code: str,
        shared_secret: str,
        staleness: float = DEFAULT_STALENESS,
        now_fn=time.monotonic,
    ):
        self._transport = transport
        self.client_id = client_id
        self.username = username
        self._password = password
        self._special_code = special_code
        self._shared_secret = shared_secret
        self.staleness = staleness
        self._now_fn = now_fn
        self._magic_hex: str | None = None
        self._cache = _Cache()

    # -- session establishment -------------------------------------------------

    def handshake(self) -> None:
        """Obtain and unseal a fresh magic number."""
        query = encode_query({"c": self.client_id, "k": self._special_code})
        response = self._raw(f"/m/handshake?{query}")
        if not response.ok or len(response.lines) != 1:
            raise AuthError("handshake refused")
        try:
            self._magic_hex = unseal_magic(
                response.lines[0], self._shared_secret, self.client_id
            )
        except ValueError as exc:
            raise AuthError(f"cannot unseal magic: {exc}") from None

    def login(self) -> None:
        """Handshake plus the explicit acknowledge round-trip."""
        self.handshake()
        response = self._raw(f"/m/login?{self._auth_query({})}")
        if not response.ok:
            self._magic_hex = None
            raise AuthError("login refused")

    # -- plumbing ---------------------------------------------------------------

    def _raw(self, path_query: str) -> WireResponse:
        try:
            text = self._transport.request(path_query)
        except NetworkError:
            raise
        except OSError as exc:
            raise NetworkError(str(exc)) from exc
        try:
            return parse_response(text)
        except ValueError as exc:
            raise NetworkError(f"off-grammar response: {exc}") from None

    def credential_hash(self) -> str:
        if self._magic_hex is None:
            raise AuthError("not logged in")
        return compute_credential_hash(self.username, self._password, self._magic_hex)

    def _auth_query(self, params: dict[str, str]) -> str:
        full = {"c": self.client_id, "u": self.username, "h": self.credential_hash()}
        full.update(params)
        return encode_query(full)

    def _call(self, path: str, params: dict[str, str] | None = None) -> WireResponse:
        """Authenticated request with a single transparent retry on expiry."""
        if self._magic_hex is None:
            self.handshake()
        response = self._raw(f"{path}?{self._auth_query(params or {})}")
        if response.status == "ERR AUTH":
            self.handshake()
            response = self._raw(f"{path}?{self._auth_query(params or {})}")
            if response.status == "ERR AUTH":
                raise AuthError(f"{path} refused")
        if not response.ok:
            raise ValidationError(f"{path} -> {response.status}")
        return response

    # -- the two update tiers ----------------------------------------------------

    def update_devices_data(self) -> dict[int, Device]:
        response = self._call("/m/devices")
        devices = {}
        for line in response.lines:
            device = records.parse_device(line)
            devices[device.oid] = device
        self._cache.devices = devices
        self._cache.devices_at = self._now_fn()
        return devices

    def update_information(self) -> tuple[dict[int, DeviceState], MapScene]:
        response = self._call("/m/state")
        lines = list(response.lines)
        if not lines or lines[0] != "#STATES":
            raise ValidationError("state payload missing #STATES header")
        states: dict[int, DeviceState] = {}
        idx = 1
        while idx < len(lines) and lines[idx] != "#WALLS":
            state = records.parse_state(lines[idx])
            states[state.oid] = state
            idx += 1
        scene = decode_scene("\n".join(lines[idx:]) + "\n")
        self._cache.states = states
        self._cache.scene = scene
        self._cache.state_at = self._now_fn()
        return states, scene

    def devices(self) -> dict[int, Device]:
        if self._cache.devices is None:
            return self.update_devices_data()
        return self._cache.devices

    def fresh_information(self) -> tuple[dict[int, DeviceState], MapScene]:
        """State+scene, refreshed when older than the staleness bound."""
        if (
            self._cache.state_at is None
            or self._now_fn() - self._cache.state_at > self.staleness
        ):
            return self.update_information()
        assert self._cache.states is not None and self._cache.scene is not None
        return self._cache.states, self._cache.scene

    def render_map(self, cols: int = 60, rows: int = 24) -> str:
        _states, scene = self.fresh_information()
        return render_ascii(scene, cols, rows)

    # -- operations ---------------------------------------------------------------

    def _validate_target(self, oid: int, action: str, arg: str = "") -> None:
        devices = self.devices()
        device = devices.get(oid)
        if device is None:
            raise ValidationError(f"unknown device {oid}")
        if device.kind == "sensor":
            raise ValidationError(f"device {oid} ({device.name}) is a sensor")
        if device.capability(action) is None:
            names = ",".join(c.action_name for c in device.capabilities)
            raise ValidationError(f"device {oid} offers [{names}], not {action!r}")
        if action == "set_level":
            try:
                level = int(arg)
            except ValueError:
                raise ValidationError(f"level argument {arg!r} is not an integer") from None
            if not 0 <= level <= 100:
                raise ValidationError(f"level {level} out of range 0..100")

    def command(self, oid: int, action: str, arg: str = "") -> None:
        self._validate_target(oid, action, arg)
        self._call("/m/command", {"oid": str(oid), "action": action, "arg": arg})

    def schedules(self) -> dict[str, ScheduledTask]:
        response = self._call("/m/schedules")
        tasks = (records.parse_schedule(line) for line in response.lines)
        return {t.id: t for t in tasks}

    def define_schedule(
        self,
        name: str,
        oid: int,
        action: str,
        when: str = "now",
        arg: str = "",
        criteria: str = "",
        task_id: str | None = None,
        enabled: bool = True,
    ) -> ScheduledTask:
        """Create/overwrite a schedule; confirms by re-listing.

        The id is a stable digest of the definition, so retries and
        repeated defines collapse into one record.
        """
        self._validate_target(oid, action, arg)
        records.parse_conditions(criteria)  # early grammar check
        task_id = task_id or _stable_id(self.client_id, "sched", name, str(oid), action, when)
        self._call(
            "/m/schedule_put",
            {
                "id": task_id,
                "name": name,
                "oid": str(oid),
                "action": action,
                "arg": arg,
                "when": when,
                "criteria": criteria,
                "enabled": "1" if enabled else "0",
            },
        )
        listed = self.schedules().get(task_id)
        if listed is None:
            raise ValidationError("server did not accept the schedule")
        return listed

    def enable_schedule(self, task_id: str, enabled: bool) -> None:
        self._call("/m/schedule_enable", {"id": task_id, "enabled": "1" if enabled else "0"})

    def rules(self) -> dict[str, Rule]:
        response = self._call("/m/rules")
        parsed = (records.parse_rule(line) for line in response.lines)
        return {r.id: r for r in parsed}

    def define_rule(
        self,
        name: str,
        conditions: str,
        actions: str,
        rule_id: str | None = None,
        enabled: bool = True,
    ) -> Rule:
        for oid, action, arg in records.parse_rule_actions(actions):
            self._validate_target(oid, action, arg)
        records.parse_conditions(conditions)
        rule_id = rule_id or _stable_id(self.client_id, "rule", name, conditions, actions)
        self._call(
            "/m/rule_put",
            {
                "id": rule_id,
                "name": name,
                "conditions": conditions,
                "actions": actions,
                "enabled": "1" if enabled else "0",
            },
        )
        listed = self.rules().get(rule_id)
        if listed is None:
            raise ValidationError("server did not accept the rule")
        return listed

    def enable_rule(self, rule_id: str, enabled: bool) -> None:
        self._call("/m/rule_enable", {"id": rule_id, "enabled": "1" if enabled else "0"})

    # -- SMS path -------------------------------------------------------------------

    def send_via_sms(self, op: str, params: dict[str, str]) -> WireResponse:
        """Route one operation through the constrained channel.

        Raises :class:`ValidationError` before sending when the frame
        cannot fit 160 characters.
        """
        if self._magic_hex is None:
            self.handshake()

        def frame() -> str:
            from .wire import SmsEncodeError

            try:
                return sms_encode(
                    op, params, self.client_id, self.username, self.credential_hash()
                )
            except SmsEncodeError as exc:
                raise ValidationError(str(exc)) from None

        text = self._transport.send_sms(frame())
        response = parse_response(text)
        if response.status == "ERR AUTH":
            self.handshake()
            response = parse_response(self._transport.send_sms(frame()))
            if response.status == "ERR AUTH":
                raise AuthError(f"sms {op} refused")
        if not response.ok:
            raise ValidationError(f"sms {op} -> {response.status}")
        return response
