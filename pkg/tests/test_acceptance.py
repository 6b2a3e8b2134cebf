"""Acceptance suite: one test per release criterion, at stated tolerances.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one PASS line per
criterion.
"""

from __future__ import annotations

import itertools
import random
import string
import time

import pytest

from conftest import make_random_scene
from homectl.auth import compute_credential_hash, unseal_magic
from homectl.client import CaptureTransport, ClientSession, LocalTransport
from homectl.demo import build_demo_house
from homectl.engine import edge_policy, eval_condition
from homectl.mapcodec import SceneError, decode_scene, encode_scene, pack_header, unpack_header
from homectl.model import ActionDescriptor, Condition, Device, DeviceState
from homectl.server import Controller
from homectl.sim import Fleet, TICK_SECONDS, VirtualClock, gas_sensor, lamp, presence_sensor
from homectl.store import Store
from homectl.wire import WireRequest, parse_response, sms_encode

SPECIAL = "7777"
SECRET = "sesame"


def report(name: str, ok: bool, detail: str = "") -> None:
    suffix = f" ({detail})" if detail else ""
    print(f"\n[ACCEPTANCE] {name}: {'PASS' if ok else 'FAIL'}{suffix}")
    assert ok, f"{name} failed {detail}"


def authed_params(controller: Controller, client_id: str, user: str, pw: str) -> dict[str, str]:
    resp = controller.gateway.handle(
        WireRequest("/m/handshake", {"c": client_id, "k": SPECIAL}), controller.now
    )
    magic = unseal_magic(resp.lines[0], SECRET, client_id)
    return {"c": client_id, "u": user, "h": compute_credential_hash(user, pw, magic)}


def test_criterion_codec_round_trip():
    """1000 random scenes round-trip exactly; header packing bijective."""
    started = time.perf_counter()
    rng = random.Random(1234)
    for _ in range(1000):
        scene = make_random_scene(rng, max_walls=50, max_icons=100)
        assert decode_scene(encode_scene(scene)) == scene

    seen: dict[tuple, tuple] = {}
    for width in range(1, 256):  # exhaustive width sweep
        for _ in range(4):  # sampled RGB per width
            color = (rng.randint(0, 255), rng.randint(0, 255), rng.randint(0, 255))
            packed = pack_header(width, color)
            assert unpack_header(*packed) == (width, color)
            if packed in seen:
                assert seen[packed] == (width, color)
            seen[packed] = (width, color)
    elapsed = time.perf_counter() - started
    report("codec-round-trip", elapsed < 5.0, f"{elapsed:.2f}s for 1000 scenes")


def test_criterion_auth_lifecycle():
    """Allow at +299 s, deny at +301 s, replay denied, no password leaks."""
    controller = Controller(special_code=SPECIAL, shared_secret=SECRET, ttl=300.0)
    build_demo_house(controller, scripted_sensors=False)
    passwords = {"amy": "wrench-orchid!", "bob": "meadow-lantern!"}
    for name, pw in passwords.items():
        controller.add_user(name, pw, role="admin")

    transport = CaptureTransport(LocalTransport(controller.gateway, lambda: controller.now))
    session = ClientSession(transport, "ph1", "amy", passwords["amy"], SPECIAL, SECRET,
                            now_fn=lambda: controller.now)
    session.login()
    session.update_devices_data()
    session.update_information()
    session.command(1, "set_on")
    session.send_via_sms("command", {"oid": "1", "action": "set_off"})

    params = authed_params(controller, "ph2", "bob", passwords["bob"])
    issued = controller.now

    def state_at(offset: float) -> str:
        while controller.now < issued + offset:
            controller.step(1)
        return controller.gateway.handle(
            WireRequest("/m/state", params), controller.now
        ).status

    allow_299 = state_at(299.0)
    deny_301 = state_at(301.0)

    # fresh handshake rotates the magic; the captured hash must be useless
    stale = dict(params)
    params_new = authed_params(controller, "ph2", "bob", passwords["bob"])
    replay = controller.gateway.handle(WireRequest("/m/state", stale), controller.now)
    resumed = controller.gateway.handle(WireRequest("/m/state", params_new), controller.now)

    blob = "\n".join(transport.traffic)
    leaks = [pw for pw in passwords.values() if pw in blob]

    ok = (
        allow_299 == "OK"
        and deny_301 == "ERR AUTH"
        and replay.status == "ERR AUTH"
        and resumed.status == "OK"
        and not leaks
    )
    report("auth-lifecycle", ok,
           f"+299s={allow_299} +301s={deny_301} replay={replay.status} leaks={leaks}")


def test_criterion_tiered_polling():
    """600 simulated seconds: vital 600±1, security 120±1, ambient 10±1."""
    store = Store()
    fleet = Fleet(store)
    fleet.register(gas_sensor(1, "health", criticality="vital"))
    fleet.register(presence_sensor(2, "motion", criticality="security"))
    fleet.register(gas_sensor(3, "temperature", criticality="ambient"))
    clock = VirtualClock()
    counts = {1: 0, 2: 0, 3: 0}
    for _ in range(6000):
        now = clock.advance(TICK_SECONDS)
        fleet.tick(now)
        for oid, _state in fleet.poll_due(now):
            counts[oid] += 1
    ok = (
        abs(counts[1] - 600) <= 1
        and abs(counts[2] - 120) <= 1
        and abs(counts[3] - 10) <= 1
    )
    report("tiered-polling", ok, f"vital={counts[1]} security={counts[2]} ambient={counts[3]}")


def test_criterion_rule_engine_oracle():
    """Exhaustive truth-table agreement plus edge-policy firing counts."""
    levels = (10, 50, 90)
    oids = (1, 2, 3)

    def oracle(cond: Condition, assignment) -> bool:
        value = assignment[cond.oid - 1]
        return {
            "=": value == cond.operand, "!=": value != cond.operand,
            "<": value < cond.operand, "<=": value <= cond.operand,
            ">": value > cond.operand, ">=": value >= cond.operand,
        }[cond.comparator]

    def snap_for(assignment):
        store = Store()
        for oid, level in zip(oids, assignment):
            store.register_device(Device(oid, f"d{oid}", "hybrid", "ambient", "leveled",
                                         (ActionDescriptor("set_level", "level_0_100"),)))
            store.upsert_state(DeviceState(oid, "level", level, 0.0))
        return store.snapshot()

    assignments = list(itertools.product(levels, repeat=3))
    snaps = [snap_for(a) for a in assignments]
    conds = [
        Condition(oid, "level", cmp_, operand)
        for oid in oids
        for cmp_ in ("=", "!=", "<", "<=", ">", ">=")
        for operand in levels
    ]
    impl_vec, oracle_vec = {}, {}
    for cond in conds:
        iv = ov = 0
        for i, (snap, assignment) in enumerate(zip(snaps, assignments)):
            iv |= eval_condition(cond, snap) << i
            ov |= oracle(cond, assignment) << i
        impl_vec[cond], oracle_vec[cond] = iv, ov

    mismatches = 0
    for c1, c2, c3 in itertools.product(conds, repeat=3):
        if impl_vec[c1] & impl_vec[c2] & impl_vec[c3] != oracle_vec[c1] & oracle_vec[c2] & oracle_vec[c3]:
            mismatches += 1

    # edge policy over scripted truth timelines
    timelines = {
        (True, True, True, True): 1,
        (False, True, True, False, True): 2,
        (True, False, True, False, True): 3,
        (False, False, False): 0,
    }
    edge_ok = True
    for timeline, expected in timelines.items():
        prev = None
        firings = 0
        for value in timeline:
            if edge_policy(prev, value):
                firings += 1
            prev = value
        edge_ok = edge_ok and firings == expected

    ok = mismatches == 0 and edge_ok
    report("rule-engine-oracle", ok,
           f"{len(conds) ** 3} conjunctions x {len(assignments)} assignments, "
           f"mismatches={mismatches}, edge_ok={edge_ok}")


def test_criterion_schedule_end_to_end():
    """Define 'lamp on at T'; stepping past T flips the lamp within a tick."""
    started = time.perf_counter()
    controller = Controller(special_code=SPECIAL, shared_secret=SECRET)
    build_demo_house(controller, scripted_sensors=False)
    transport = LocalTransport(controller.gateway, lambda: controller.now)
    session = ClientSession(transport, "ph1", "admin", "opensesame!", SPECIAL, SECRET,
                            now_fn=lambda: controller.now)
    session.login()
    target = 60.0  # T = 00:01
    task = session.define_schedule("evening lamp", 1, "set_on", when="00:01")

    while controller.now < target:
        controller.step(1)
    assert controller.store.snapshot().states[1].status_code == "off"
    controller.step(1)  # the tick that crosses T: engine fires
    controller.step(1)  # one 100 ms tick later the actuator has applied it
    flipped = controller.store.snapshot().states[1].status_code == "on"
    disabled = controller.store.snapshot().schedules[task.id].enabled is False
    elapsed = time.perf_counter() - started
    ok = flipped and disabled and elapsed < 2.0
    report("schedule-end-to-end", ok,
           f"flipped={flipped} disabled={disabled} wall={elapsed:.2f}s")


MUTATING_OPS = [
    ("command", {"oid": "1", "action": "set_on", "arg": ""}),
    ("command", {"oid": "5", "action": "set_level", "arg": "70"}),
    ("schedule_put", {"id": "s1", "name": "lamp", "oid": "1",
                      "action": "set_on", "when": "21:30", "criteria": "3:level:<:50"}),
    ("schedule_enable", {"id": "s1", "enabled": "0"}),
    ("rule_put", {"id": "r1", "name": "vent", "conditions": "3:level:>:80",
                  "actions": "2:open:"}),
    ("rule_enable", {"id": "r1", "enabled": "0"}),
]


def test_criterion_transport_equivalence():
    """Each mutating op via SMS leaves a store byte-identical to GET."""
    dumps = []
    for transport_kind in ("get", "sms"):
        controller = Controller(special_code=SPECIAL, shared_secret=SECRET)
        build_demo_house(controller, scripted_sensors=False)
        params = authed_params(controller, "ph1", "admin", "opensesame!")
        for op, op_params in MUTATING_OPS:
            if transport_kind == "get":
                resp = controller.gateway.handle(
                    WireRequest(f"/m/{op}", {**params, **op_params}), controller.now
                )
            else:
                frame = sms_encode(op, op_params, params["c"], params["u"], params["h"])
                assert len(frame) <= 160
                resp = controller.gateway.handle_sms(frame, controller.now)
            assert resp.ok, f"{transport_kind} {op}: {resp.status}"
            controller.step(2)
        dumps.append(controller.store.dump())
    ok = dumps[0] == dumps[1]
    report("transport-equivalence", ok, f"{len(MUTATING_OPS)} ops, dump {len(dumps[0])} bytes")


def test_criterion_two_tier_payload():
    """20-device registry: frequent tier strictly smaller than both tiers."""
    controller = Controller(special_code=SPECIAL, shared_secret=SECRET)
    for oid in range(1, 21):
        controller.fleet.register(lamp(oid, f"fixture lamp {oid}"))
    controller.add_user("amy", "wrench-orchid", role="admin")
    params = authed_params(controller, "ph1", "amy", "wrench-orchid")

    def payload(path: str) -> int:
        return len(controller.gateway.handle(
            WireRequest(path, params), controller.now
        ).render().encode("utf-8"))

    state_size = payload("/m/state")
    devices_size = payload("/m/devices")
    ok = state_size < devices_size + state_size and devices_size > 0
    report("two-tier-payload", ok, f"state={state_size}B devices={devices_size}B")


def _random_request(rng: random.Random) -> str:
    kind = rng.random()
    if kind < 0.3:
        # pure noise
        length = rng.randint(0, 80)
        return "".join(rng.choice(string.printable) for _ in range(length))
    paths = ["/m/state", "/m/devices", "/m/command", "/m/schedule_put", "/m/handshake",
             "/m/login", "/m/rules", "/m/step", "/m/bogus", "", "/", "m/state"]
    keys = ["c", "u", "h", "k", "oid", "action", "arg", "id", "name", "when",
            "criteria", "enabled", "ticks", "x"]
    path = rng.choice(paths)
    pieces = []
    for _ in range(rng.randint(0, 6)):
        key = rng.choice(keys)
        value = "".join(rng.choice(string.printable) for _ in range(rng.randint(0, 12)))
        pieces.append(f"{key}={value}")
    return path + "?" + "&".join(pieces)


def _random_scene_text(rng: random.Random) -> str:
    kind = rng.random()
    if kind < 0.4:
        length = rng.randint(0, 200)
        return "".join(rng.choice(string.printable) for _ in range(length))
    # mutated valid scene
    scene = make_random_scene(rng, max_walls=3, max_icons=3)
    text = list(encode_scene(scene))
    for _ in range(rng.randint(0, 6)):
        if not text:
            break
        text[rng.randrange(len(text))] = rng.choice(string.printable)
    return "".join(text)


def test_criterion_fuzzing():
    """10k random request lines and 10k scene files: no crash, well-formed."""
    controller = Controller(special_code=SPECIAL, shared_secret=SECRET)
    build_demo_house(controller, scripted_sensors=False)
    rng = random.Random(987654)

    for i in range(10_000):
        line = _random_request(rng)
        if i % 3 == 0:
            response = controller.gateway.handle_sms(line, controller.now)
        else:
            response = controller.gateway.handle(WireRequest.parse(line), controller.now)
        reparsed = parse_response(response.render())
        assert reparsed.status == response.status

    decoded = rejected = 0
    for _ in range(10_000):
        text = _random_scene_text(rng)
        try:
            decode_scene(text)
            decoded += 1
        except SceneError:
            rejected += 1
    ok = decoded + rejected == 10_000
    report("fuzzing", ok, f"requests=10000 scenes: decoded={decoded} rejected={rejected}")
