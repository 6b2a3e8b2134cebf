"""Client sessions end-to-end: login, caching tiers, retries, SMS, CLI."""

from __future__ import annotations

import http.client

import pytest

from homectl import cli
from homectl.auth import compute_credential_hash
from homectl.client import (
    AuthError,
    CaptureTransport,
    ClientSession,
    HttpTransport,
    LocalTransport,
    ValidationError,
)
from homectl.demo import build_demo_house
from homectl.mapcodec import encode_scene
from homectl.server import Controller, HomeServer
from homectl.sim import lamp
from homectl.wire import live_scene, sms_encode

SPECIAL = "7777"
SECRET = "sesame"
ADMIN_PW = "wrench-orchid"


def make_stack(populate: bool = True):
    controller = Controller(special_code=SPECIAL, shared_secret=SECRET)
    if populate:
        build_demo_house(controller, scripted_sensors=False)
    controller.add_user("amy", ADMIN_PW, role="admin")
    transport = CaptureTransport(LocalTransport(controller.gateway, lambda: controller.now))
    session = ClientSession(
        transport, "ph1", "amy", ADMIN_PW, SPECIAL, SECRET,
        now_fn=lambda: controller.now,
    )
    return controller, transport, session


class TestLogin:
    def test_correct_credentials(self):
        _c, _t, session = make_stack()
        session.login()
        assert session.credential_hash()  # magic established

    def test_wrong_password_refused(self):
        controller, _t, _s = make_stack()
        transport = LocalTransport(controller.gateway, lambda: controller.now)
        bad = ClientSession(transport, "ph2", "amy", "bad-guess", SPECIAL, SECRET,
                            now_fn=lambda: controller.now)
        with pytest.raises(AuthError):
            bad.login()

    def test_wrong_special_code_refused(self):
        controller, _t, _s = make_stack()
        transport = LocalTransport(controller.gateway, lambda: controller.now)
        bad = ClientSession(transport, "ph2", "amy", ADMIN_PW, "0000", SECRET,
                            now_fn=lambda: controller.now)
        with pytest.raises(AuthError, match="handshake"):
            bad.login()

    def test_wrong_shared_secret_cannot_authenticate(self):
        controller, _t, _s = make_stack()
        transport = LocalTransport(controller.gateway, lambda: controller.now)
        bad = ClientSession(transport, "ph2", "amy", ADMIN_PW, SPECIAL, "wrong",
                            now_fn=lambda: controller.now)
        # unsealing silently yields a wrong magic, so login is refused
        with pytest.raises(AuthError):
            bad.login()

    def test_expiry_transparently_rehandshakes(self):
        controller, _t, session = make_stack()
        session.login()
        controller.step(int(301 / 0.1))  # blow past the 300 s ttl
        devices = session.update_devices_data()  # must not raise
        assert 1 in devices


class TestTwoTierCaches:
    def test_device_additions_only_in_devices_tier(self):
        controller, _t, session = make_stack()
        session.login()
        session.update_devices_data()
        session.update_information()
        controller.fleet.register(lamp(9, "new lamp"))
        states, _scene = session.update_information()
        assert 9 in states  # state tier sees the new state line
        assert 9 not in session.devices()  # device table cache untouched
        session.update_devices_data()
        assert 9 in session.devices()

    def test_state_changes_visible_after_update_information(self):
        controller, _t, session = make_stack()
        session.login()
        session.command(1, "set_on")
        controller.step(2)
        states, _ = session.update_information()
        assert states[1].status_code == "on"

    def test_empty_registry_no_error(self):
        _c, _t, session = make_stack(populate=False)
        session.login()
        assert session.update_devices_data() == {}
        states, scene = session.update_information()
        assert states == {} and scene.walls == () and scene.icons == ()

    def test_staleness_bound_triggers_refresh(self):
        controller, transport, session = make_stack()
        session.staleness = 5.0
        session.login()
        session.update_information()
        calls_before = sum("/m/state?" in t for t in transport.traffic)
        session.fresh_information()  # fresh: served from cache
        assert sum("/m/state?" in t for t in transport.traffic) == calls_before
        controller.step(int(6 / 0.1))
        session.fresh_information()  # stale now
        assert sum("/m/state?" in t for t in transport.traffic) == calls_before + 1

    def test_client_scene_equals_server_scene(self):
        controller, _t, session = make_stack()
        session.login()
        _states, scene = session.update_information()
        assert encode_scene(scene) == encode_scene(live_scene(controller.store.snapshot()))


class TestScheduleManagement:
    def test_lamp_on_now_fires_and_disables(self):
        controller, _t, session = make_stack()
        session.login()
        task = session.define_schedule("lamp on", 1, "set_on", when="now")
        assert task.enabled
        controller.step(2)  # fire tick + apply tick
        states, _ = session.update_information()
        assert states[1].status_code == "on"
        assert session.schedules()[task.id].enabled is False

    def test_schedule_on_sensor_rejected_before_sending(self):
        _c, transport, session = make_stack()
        session.login()
        sent_before = len(transport.traffic)
        with pytest.raises(ValidationError, match="sensor"):
            session.define_schedule("impossible", 3, "set_on")
        sent_after = [t for t in transport.traffic[sent_before:] if "schedule_put" in t]
        assert sent_after == []

    def test_unknown_action_rejected_with_capability_list(self):
        _c, _t, session = make_stack()
        session.login()
        with pytest.raises(ValidationError, match="set_on"):
            session.define_schedule("x", 1, "warp")

    def test_double_define_single_record(self):
        _c, _t, session = make_stack()
        session.login()
        session.define_schedule("evening lamp", 1, "set_on", when="21:30")
        session.define_schedule("evening lamp", 1, "set_on", when="21:30")
        assert len(session.schedules()) == 1

    def test_retry_after_expiry_does_not_duplicate(self):
        controller, _t, session = make_stack()
        session.login()
        controller.step(int(301 / 0.1))  # expired: first put gets ERR AUTH, retried
        session.define_schedule("late lamp", 1, "set_on", when="21:30")
        assert len(session.schedules()) == 1

    def test_rule_round_trip(self):
        controller, _t, session = make_stack()
        session.login()
        rule = session.define_rule("vent", "3:level:>:80", "2:open:")
        assert session.rules()[rule.id].name == "vent"
        session.enable_rule(rule.id, False)
        assert session.rules()[rule.id].enabled is False


class TestSmsPath:
    def test_command_equivalence(self):
        controller, _t, session = make_stack()
        session.login()
        session.send_via_sms("command", {"oid": "1", "action": "set_on"})
        controller.step(2)
        assert controller.store.snapshot().states[1].status_code == "on"

    def test_oversize_rejected_nothing_sent(self):
        _c, transport, session = make_stack()
        session.login()
        before = len(transport.traffic)
        with pytest.raises(ValidationError, match="too large"):
            session.send_via_sms(
                "schedule_put",
                {"id": "s", "name": "y" * 120, "oid": "1", "action": "set_on",
                 "when": "now"},
            )
        assert len(transport.traffic) == before

    def test_stale_hash_after_expiry_gets_err_auth(self):
        controller, _t, session = make_stack()
        session.login()
        stale_hash = session.credential_hash()
        controller.step(int(301 / 0.1))
        frame = sms_encode("command", {"oid": "1", "action": "set_on"},
                           "ph1", "amy", stale_hash)
        resp = controller.gateway.handle_sms(frame, controller.now)
        assert resp.status == "ERR AUTH"


class TestNoPasswordOnWire:
    def test_traffic_never_contains_password(self):
        controller, transport, session = make_stack()
        session.login()
        session.update_devices_data()
        session.update_information()
        session.command(1, "set_on")
        session.define_schedule("evening", 1, "set_off", when="21:30")
        session.send_via_sms("command", {"oid": "1", "action": "set_on"})
        controller.step(5)
        blob = "\n".join(transport.traffic)
        assert ADMIN_PW not in blob


@pytest.fixture(scope="module")
def live_server():
    controller = Controller(special_code=SPECIAL, shared_secret=SECRET)
    build_demo_house(controller, scripted_sensors=False)
    controller.add_user("amy", ADMIN_PW, role="admin")
    server = HomeServer(controller, "127.0.0.1", 0)
    server.start()
    yield controller, server.address
    server.stop()


class TestOverRealHttp:
    def test_full_flow_over_sockets(self, live_server):
        controller, (host, port) = live_server
        session = ClientSession(
            HttpTransport(host, port), "sock1", "amy", ADMIN_PW, SPECIAL, SECRET,
            now_fn=lambda: controller.now,
        )
        session.login()
        devices = session.update_devices_data()
        assert devices[2].name == "front door"
        session.command(2, "open")
        controller.step(2)
        states, _ = session.update_information()
        assert states[2].status_code == "open"

    def test_sms_over_http_carrier(self, live_server):
        controller, (host, port) = live_server
        session = ClientSession(
            HttpTransport(host, port), "sock2", "amy", ADMIN_PW, SPECIAL, SECRET,
            now_fn=lambda: controller.now,
        )
        session.login()
        session.send_via_sms("command", {"oid": "1", "action": "set_on"})
        controller.step(2)
        assert controller.store.snapshot().states[1].status_code == "on"

    def test_unknown_http_path_is_wire_error(self, live_server):
        _controller, (host, port) = live_server
        conn = http.client.HTTPConnection(host, port, timeout=5)
        conn.request("GET", "/m/bogus?c=x&u=y&h=z")
        body = conn.getresponse().read().decode()
        conn.close()
        assert body == "ERR PATH\n"


class TestCliExitCodes:
    def _argv(self, port: int, *tail: str) -> list[str]:
        return [
            *tail,
            "--server", f"127.0.0.1:{port}",
            "--user", "amy",
            "--special-code", SPECIAL,
            "--shared-secret", SECRET,
            "--password-env", "HOMECTL_TEST_PW",
            "--config", "/nonexistent.ini",
        ]

    def test_ok_path(self, live_server, monkeypatch, capsys):
        _c, (_host, port) = live_server
        monkeypatch.setenv("HOMECTL_TEST_PW", ADMIN_PW)
        assert cli.main(self._argv(port, "devices")) == 0
        out = capsys.readouterr().out
        assert "living lamp" in out

    def test_auth_failure_exit_2(self, live_server, monkeypatch):
        _c, (_host, port) = live_server
        monkeypatch.setenv("HOMECTL_TEST_PW", "wrong-password")
        assert cli.main(self._argv(port, "login")) == 2

    def test_network_failure_exit_3(self, monkeypatch):
        monkeypatch.setenv("HOMECTL_TEST_PW", ADMIN_PW)
        # nothing listens on port 9 ("discard") on localhost
        assert cli.main(self._argv(9, "login")) == 3

    def test_validation_failure_exit_4(self, live_server, monkeypatch):
        _c, (_host, port) = live_server
        monkeypatch.setenv("HOMECTL_TEST_PW", ADMIN_PW)
        assert cli.main(self._argv(port, "cmd", "3", "set_on")) == 4

    def test_cmd_and_map_outputs(self, live_server, monkeypatch, capsys):
        _c, (_host, port) = live_server
        monkeypatch.setenv("HOMECTL_TEST_PW", ADMIN_PW)
        assert cli.main(self._argv(port, "cmd", "1", "set_on")) == 0
        assert cli.main(self._argv(port, "map")) == 0
        out = capsys.readouterr().out
        assert "OK" in out and "#" in out

    def test_sched_put_and_list(self, live_server, monkeypatch, capsys):
        _c, (_host, port) = live_server
        monkeypatch.setenv("HOMECTL_TEST_PW", ADMIN_PW)
        assert cli.main(self._argv(port, "sched", "put", "cli lamp", "1", "set_on",
                                   "--at", "07:45")) == 0
        assert cli.main(self._argv(port, "sched", "list")) == 0
        out = capsys.readouterr().out
        assert "cli lamp" in out and "07:45" in out
