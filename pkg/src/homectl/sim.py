"""Simulated device fleet: tiered polling, command dispatch, scripted sensors.

The whole system runs on a virtual clock with a 100 ms tick so every test
is deterministic; wall-clock operation is a runtime choice made by the
controller, not by this module.  Actuator commands are queued FIFO and
applied on the device's next tick; the resulting status is pushed to the
store immediately (the actuator reporting its own transition) while sensor
values only become visible when their criticality tier polls them.
"""

from __future__ import annotations

import threading
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable

from .model import (
    DEFAULT_POLL_PERIODS,
    ActionDescriptor,
    Device,
    DeviceState,
    initial_state,
)
from .store import Store

__all__ = [
    "TICK_SECONDS",
    "DispatchError",
    "ScenarioError",
    "VirtualClock",
    "WallClock",
    "DeviceRuntime",
    "Fleet",
    "parse_scenario",
    "level_ramp",
    "presence_toggle",
    "lamp",
    "door",
    "gas_sensor",
    "presence_sensor",
    "air_conditioner",
]

TICK_MS = 100
TICK_SECONDS = TICK_MS / 1000.0

# status a no-arg action leaves the device in
_NO_ARG_EFFECTS = {
    "set_on": "on",
    "set_off": "off",
    "open": "open",
    "close": "closed",
}

_TRUE_TOKENS = ("1", "true", "on")
_FALSE_TOKENS = ("0", "false", "off")


class DispatchError(ValueError):
    """Command rejected before queuing (capability, target or range)."""


class ScenarioError(ValueError):
    """Scenario script rejected, with its line number."""


class VirtualClock:
    """Monotone simulated time, advanced only by the harness.

    Integer milliseconds internally, so timestamps land exactly on the
    millisecond grid the record grammar preserves.
    """

    def __init__(self, start: float = 0.0):
        self._ms = int(round(start * 1000))

    @property
    def now(self) -> float:
        return self._ms / 1000.0

    def advance(self, seconds: float) -> float:
        if seconds < 0:
            raise ValueError("clock never moves backwards")
        self._ms += int(round(seconds * 1000))
        return self.now


class WallClock:
    """Same interface backed by the OS clock.

    Anchored to local midnight so ``now % 86400`` is the local time of day
    and HH:MM schedule triggers mean what the user expects.
    """

    def __init__(self):
        import time

        self._time = time
        local = time.localtime()
        midnight_offset = local.tm_hour * 3600 + local.tm_min * 60 + local.tm_sec
        self._t0 = time.monotonic() - midnight_offset

    @property
    def now(self) -> float:
        return self._time.monotonic() - self._t0


# autonomous sensor behavior: simulated time -> (status_code, level | None)
SensorScript = Callable[[float], tuple[str, int | None]]


def level_ramp(rate_per_second: float, start: int = 0) -> SensorScript:
    """Leveled sensor that climbs from ``start`` and saturates at 100."""

    def script(now: float) -> tuple[str, int | None]:
        return "level", min(100, max(0, int(start + rate_per_second * now)))

    return script


def presence_toggle(period_seconds: float) -> SensorScript:
    """Presence sensor that flips every ``period_seconds``."""

    def script(now: float) -> tuple[str, int | None]:
        present = int(now / period_seconds) % 2 == 1
        return ("present" if present else "absent"), None

    return script


@dataclass
class DeviceRuntime:
    """Mutable per-device simulation state."""

    device: Device
    status_code: str
    level: int | None
    script: SensorScript | None = None
    pending: deque = field(default_factory=deque)
    last_poll: float = 0.0


def parse_scenario(text: str) -> list[tuple[float, int, str, str]]:
    """Parse scenario lines ``t=<s> oid=<n> level=<v>`` / ``status=<code>``.

    Returns (t, oid, field, value) tuples sorted by time, original order
    preserved among equal times.
    """
    entries: list[tuple[float, int, str, str]] = []
    for line_no, raw in enumerate(text.split("\n"), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields: dict[str, str] = {}
        for token in line.split():
            key, sep, value = token.partition("=")
            if not sep:
                raise ScenarioError(f"line {line_no}: bad token {token!r}")
            fields[key] = value
        try:
            t = float(fields.pop("t"))
            oid = int(fields.pop("oid"))
        except (KeyError, ValueError):
            raise ScenarioError(f"line {line_no}: needs t= and oid=") from None
        if len(fields) != 1:
            raise ScenarioError(f"line {line_no}: exactly one of level=/status= required")
        fname, value = next(iter(fields.items()))
        if fname not in ("level", "status"):
            raise ScenarioError(f"line {line_no}: unknown field {fname!r}")
        entries.append((t, oid, fname, value))
    entries.sort(key=lambda e: e[0])
    return entries


class Fleet:
    """Device-manager middleware over the simulated devices.

    Single logical simulation thread: :meth:`tick` and :meth:`poll_due` are
    called only by the controller loop.  :meth:`dispatch` may be called from
    any request-handler thread; it only validates and enqueues.
    """

    def __init__(self, store: Store, periods: dict[str, float] | None = None):
        self._store = store
        self._periods = dict(periods or DEFAULT_POLL_PERIODS)
        self._runtimes: dict[int, DeviceRuntime] = {}
        self._scenario: list[tuple[float, int, str, str]] = []
        self._scenario_pos = 0
        self._lock = threading.Lock()

    def register(
        self,
        device: Device,
        script: SensorScript | None = None,
        now: float = 0.0,
    ) -> None:
        """Add a device to the fleet and the registry, with initial state."""
        for cap in device.capabilities:
            if cap.arg_kind == "none" and cap.action_name not in _NO_ARG_EFFECTS:
                raise DispatchError(
                    f"no built-in effect for action {cap.action_name!r}"
                )
        self._store.register_device(device)
        init = initial_state(device, now)
        self._store.upsert_state(init)
        self._runtimes[device.oid] = DeviceRuntime(
            device=device,
            status_code=init.status_code,
            level=init.level,
            script=script,
            last_poll=now,
        )

    def adopt(self, now: float = 0.0, scripts: dict[int, SensorScript] | None = None) -> None:
        """Create runtimes for devices already present in the store (e.g.
        after a restore); sensors stay static unless given a script."""
        snap = self._store.snapshot()
        for oid in sorted(snap.devices):
            if oid in self._runtimes:
                continue
            device = snap.devices[oid]
            state = snap.states.get(oid)
            if state is None:
                state = initial_state(device, now)
                self._store.upsert_state(state)
            self._runtimes[oid] = DeviceRuntime(
                device=device,
                status_code=state.status_code,
                level=state.level,
                script=(scripts or {}).get(oid),
                last_poll=now,
            )

    def load_scenario(self, entries: Iterable[tuple[float, int, str, str]]) -> None:
        entries = list(entries)
        for t, oid, fname, value in entries:
            if oid not in self._runtimes:
                raise ScenarioError(f"scenario references unknown oid {oid}")
            if fname == "level" and not value.lstrip("-").isdigit():
                raise ScenarioError(f"scenario level {value!r} is not an integer")
        self._scenario = sorted(entries, key=lambda e: e[0])
        self._scenario_pos = 0

    # -- command path ----------------------------------------------------------

    def dispatch(self, oid: int, action: str, arg: str = "") -> None:
        """Validate and queue a command; applied on the device's next tick."""
        rt = self._runtimes.get(oid)
        if rt is None:
            raise DispatchError(f"unknown oid {oid}")
        if rt.device.kind == "sensor":
            raise DispatchError(f"device {oid} is not an actuator")
        cap = rt.device.capability(action)
        if cap is None:
            raise DispatchError(f"device {oid} has no capability {action!r}")
        self._check_arg(cap, arg)
        with self._lock:
            rt.pending.append((cap, arg))

    @staticmethod
    def _check_arg(cap: ActionDescriptor, arg: str) -> None:
        if cap.arg_kind == "none":
            if arg:
                raise DispatchError(f"action {cap.action_name!r} takes no argument")
        elif cap.arg_kind == "level_0_100":
            try:
                value = int(arg)
            except ValueError:
                raise DispatchError(f"level argument {arg!r} is not an integer") from None
            if not 0 <= value <= 100:
                raise DispatchError(f"level {value} out of range 0..100")
        elif cap.arg_kind == "boolean":
            if arg.lower() not in _TRUE_TOKENS + _FALSE_TOKENS:
                raise DispatchError(f"boolean argument {arg!r} not understood")

    @staticmethod
    def _apply(rt: DeviceRuntime, cap: ActionDescriptor, arg: str) -> None:
        if cap.arg_kind == "none":
            rt.status_code = _NO_ARG_EFFECTS[cap.action_name]
        elif cap.arg_kind == "level_0_100":
            rt.level = int(arg)
        elif cap.arg_kind == "boolean":
            rt.status_code = "on" if arg.lower() in _TRUE_TOKENS else "off"

    # -- simulation loop -------------------------------------------------------

    def tick(self, now: float) -> None:
        """Apply queued commands and scripted sensor values for this tick."""
        for oid in sorted(self._runtimes):
            rt = self._runtimes[oid]
            with self._lock:
                queued = list(rt.pending)
                rt.pending.clear()
            if queued:
                for cap, arg in queued:
                    self._apply(rt, cap, arg)
                # the actuator reports its own transition right away
                self._write_state(rt, now)
            if rt.script is not None:
                rt.status_code, rt.level = rt.script(now)

        while self._scenario_pos < len(self._scenario):
            t, oid, fname, value = self._scenario[self._scenario_pos]
            if t > now:
                break
            rt = self._runtimes[oid]
            if fname == "level":
                rt.level = max(0, min(100, int(value)))
            else:
                rt.status_code = value
            self._scenario_pos += 1

    def poll_due(self, now: float) -> list[tuple[int, DeviceState]]:
        """Fresh states for every device whose tier period has elapsed."""
        polled: list[tuple[int, DeviceState]] = []
        for oid in sorted(self._runtimes):
            rt = self._runtimes[oid]
            period = self._periods[rt.device.criticality]
            # small epsilon so 100 ms float ticks cannot miss a boundary
            if now - rt.last_poll >= period - 1e-9:
                state = self._write_state(rt, now)
                rt.last_poll = now
                polled.append((oid, state))
        return polled

    def _write_state(self, rt: DeviceRuntime, now: float) -> DeviceState:
        state = DeviceState(rt.device.oid, rt.status_code, rt.level, now)
        self._store.upsert_state(state)
        return state


# -- built-in device builders (the shipped example fleet) ----------------------

def lamp(oid: int, name: str, criticality: str = "ambient") -> Device:
    return Device(
        oid,
        name,
        "actuator",
        criticality,
        "on_off",
        (ActionDescriptor("set_on"), ActionDescriptor("set_off")),
    )


def door(oid: int, name: str, criticality: str = "security") -> Device:
    return Device(
        oid,
        name,
        "actuator",
        criticality,
        "open_closed",
        (ActionDescriptor("open"), ActionDescriptor("close")),
    )


def gas_sensor(oid: int, name: str, criticality: str = "vital") -> Device:
    return Device(oid, name, "sensor", criticality, "leveled")


def presence_sensor(oid: int, name: str, criticality: str = "security") -> Device:
    return Device(oid, name, "sensor", criticality, "presence")


def air_conditioner(oid: int, name: str, criticality: str = "ambient") -> Device:
    return Device(
        oid,
        name,
        "hybrid",
        criticality,
        "leveled",
        (ActionDescriptor("set_level", "level_0_100"),),
    )
