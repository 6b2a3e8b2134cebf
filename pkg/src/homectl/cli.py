"""Command-line front: the server runner plus every mobile use case.

Client subcommands speak the gateway grammar over HTTP.  Each invocation
performs its own handshake; nothing secret is ever written to disk.  Exit
codes: 0 ok, 2 authentication, 3 network, 4 validation.
"""

from __future__ import annotations

import argparse
import configparser
import getpass
import logging
import os
import signal
import stat
import sys

from . import records
from .client import ClientError, ClientSession, HttpTransport, ValidationError
from .demo import build_demo_house
from .mapcodec import decode_scene
from .server import Controller, HomeServer
from .sim import parse_scenario
from .store import Store

logger = logging.getLogger("homectl.cli")

DEFAULT_CONFIG = os.path.expanduser("~/.config/homectl.ini")
DEFAULT_PORT = 8732


def _load_config(path: str) -> dict[str, str]:
    if not os.path.exists(path):
        return {}
    mode = stat.S_IMODE(os.stat(path).st_mode)
    if mode & 0o077:
        print(f"warning: {path} is readable by others (chmod 600 it)", file=sys.stderr)
    parser = configparser.ConfigParser()
    parser.read(path)
    if "client" not in parser:
        return {}
    return dict(parser["client"])


def _client_parent() -> argparse.ArgumentParser:
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--server", help="host:port of the control server")
    parent.add_argument("--user", help="account name")
    parent.add_argument("--client-id", help="stable identifier for this client")
    parent.add_argument("--special-code", help="handshake code")
    parent.add_argument("--shared-secret", help="magic-unsealing secret")
    parent.add_argument("--staleness", type=float, default=10.0,
                        help="seconds before cached state is refreshed (default 10)")
    parent.add_argument("--config", default=DEFAULT_CONFIG,
                        help=f"INI config path (default {DEFAULT_CONFIG})")
    parent.add_argument("--password-env", metavar="VAR",
                        help="environment variable holding the password")
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="homectl")
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the control server")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=DEFAULT_PORT)
    serve.add_argument("--special-code", default="0000")
    serve.add_argument("--shared-secret", default="change-me")
    serve.add_argument("--storage-salt", default="homectl-local-salt")
    serve.add_argument("--ttl", type=float, default=300.0, help="magic lifetime seconds")
    serve.add_argument("--store", help="store file to restore from / persist to")
    serve.add_argument("--scene", help="scene text file to load")
    serve.add_argument("--scenario", help="sensor timeline script to load")
    serve.add_argument("--demo", action="store_true", help="populate the demo house")
    serve.add_argument("--virtual", action="store_true",
                       help="virtual clock driven via /m/step (testing)")
    serve.add_argument("--ui-dir", help="static directory served under /ui/")
    serve.add_argument("--add-user", action="append", default=[], metavar="NAME:PASS[:ROLE]",
                       help="provision an account (repeatable)")

    parent = _client_parent()
    sub.add_parser("login", parents=[parent], help="check credentials")
    sub.add_parser("devices", parents=[parent], help="update devices data (infrequent tier)")
    sub.add_parser("state", parents=[parent], help="update information: states (frequent tier)")
    sub.add_parser("map", parents=[parent], help="ASCII floor plan with live icons")

    cmd = sub.add_parser("cmd", parents=[parent], help="send a device command")
    cmd.add_argument("oid", type=int)
    cmd.add_argument("action")
    cmd.add_argument("arg", nargs="?", default="")

    # two-level commands carry the client flags on their leaves
    sched = sub.add_parser("sched", help="manage schedules")
    sched_sub = sched.add_subparsers(dest="sched_command", required=True)
    sched_sub.add_parser("list", parents=[parent])
    sched_put = sched_sub.add_parser("put", parents=[parent])
    sched_put.add_argument("name")
    sched_put.add_argument("oid", type=int)
    sched_put.add_argument("action")
    sched_put.add_argument("--arg", default="")
    sched_put.add_argument("--at", default="now", help="'now' or HH:MM")
    sched_put.add_argument("--criteria", default="",
                           help="oid:field:cmp:operand[,...] gate conditions")
    sched_put.add_argument("--id", help="explicit id (default: stable digest)")
    sched_enable = sched_sub.add_parser("enable", parents=[parent])
    sched_enable.add_argument("id")
    sched_enable.add_argument("flag", choices=["on", "off"])

    rule = sub.add_parser("rule", help="manage rules")
    rule_sub = rule.add_subparsers(dest="rule_command", required=True)
    rule_sub.add_parser("list", parents=[parent])
    rule_put = rule_sub.add_parser("put", parents=[parent])
    rule_put.add_argument("name")
    rule_put.add_argument("conditions", help="oid:field:cmp:operand[,...]")
    rule_put.add_argument("actions", help="oid:action:arg[,...]")
    rule_put.add_argument("--id")
    rule_enable = rule_sub.add_parser("enable", parents=[parent])
    rule_enable.add_argument("id")
    rule_enable.add_argument("flag", choices=["on", "off"])

    sms = sub.add_parser("sms", help="send one op over the SMS channel")
    sms_sub = sms.add_subparsers(dest="sms_command", required=True)
    sms_cmd = sms_sub.add_parser("cmd", parents=[parent])
    sms_cmd.add_argument("oid", type=int)
    sms_cmd.add_argument("action")
    sms_cmd.add_argument("arg", nargs="?", default="")
    sms_sched = sms_sub.add_parser("sched", parents=[parent])
    sms_sched.add_argument("name")
    sms_sched.add_argument("oid", type=int)
    sms_sched.add_argument("action")
    sms_sched.add_argument("--at", default="now")
    sms_sched.add_argument("--arg", default="")
    sms_sched.add_argument("--criteria", default="")
    sms_sched.add_argument("--id")

    return parser


def _run_serve(args: argparse.Namespace) -> int:
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(message)s")
    store = None
    if args.store and os.path.exists(args.store):
        store = Store.restore(args.store)
        print(f"restored store from {args.store}", flush=True)
    controller = Controller(
        store=store,
        special_code=args.special_code,
        shared_secret=args.shared_secret,
        storage_salt=args.storage_salt,
        ttl=args.ttl,
        virtual=args.virtual,
    )
    if args.demo and store is None:
        build_demo_house(controller)
    if args.scene:
        with open(args.scene, "r", encoding="utf-8") as fh:
            controller.store.set_scene(decode_scene(fh.read()))
    if args.scenario:
        with open(args.scenario, "r", encoding="utf-8") as fh:
            controller.fleet.load_scenario(parse_scenario(fh.read()))
    for entry in args.add_user:
        parts = entry.split(":")
        if len(parts) < 2:
            print(f"bad --add-user {entry!r}, want NAME:PASS[:ROLE]", file=sys.stderr)
            return 4
        role = parts[2] if len(parts) > 2 else "mobile"
        controller.add_user(parts[0], parts[1], role=role)

    ui_dir = args.ui_dir
    if ui_dir is None:
        candidate = os.path.join(os.getcwd(), "frontend", "dist")
        ui_dir = candidate if os.path.isdir(candidate) else None

    server = HomeServer(controller, args.host, args.port, ui_dir=ui_dir)
    host, port = server.address
    mode = "virtual clock (drive via /m/step)" if args.virtual else "wall clock"
    print(f"listening on {host}:{port}, {mode}", flush=True)
    if ui_dir:
        print(f"web remote at http://{host}:{port}/ui/", flush=True)

    def _terminate(_signum, _frame):
        raise KeyboardInterrupt

    signal.signal(signal.SIGTERM, _terminate)
    try:
        server.serve_forever()
    finally:
        if args.store:
            controller.store.persist(args.store)
            print(f"persisted store to {args.store}", flush=True)
    return 0


def _make_session(args: argparse.Namespace) -> ClientSession:
    config = _load_config(args.config)

    def pick(flag_value, key: str, fallback: str | None = None) -> str:
        if flag_value:
            return flag_value
        if key in config:
            return config[key]
        if fallback is not None:
            return fallback
        raise ValidationError(f"missing --{key.replace('_', '-')} (or config entry {key})")

    server = pick(args.server, "server", f"127.0.0.1:{DEFAULT_PORT}")
    host, _, port_text = server.partition(":")
    username = pick(args.user, "user")
    client_id = pick(args.client_id, "client_id", f"cli-{username}")
    special_code = pick(args.special_code, "special_code")
    shared_secret = pick(args.shared_secret, "shared_secret")

    if args.password_env:
        password = os.environ.get(args.password_env)
        if password is None:
            raise ValidationError(f"environment variable {args.password_env} is not set")
    else:
        password = getpass.getpass(f"password for {username}: ")

    return ClientSession(
        transport=HttpTransport(host, int(port_text or DEFAULT_PORT)),
        client_id=client_id,
        username=username,
        password=password,
        special_code=special_code,
        shared_secret=shared_secret,
        staleness=args.staleness,
    )


def _print_devices(session: ClientSession) -> None:
    for oid in sorted(session.devices()):
        device = session.devices()[oid]
        caps = ",".join(c.action_name for c in device.capabilities) or "-"
        print(f"{oid}\t{device.name}\t{device.kind}/{device.criticality}"
              f"\t{device.status_schema}\t{caps}")


def _run_client(args: argparse.Namespace) -> int:
    session = _make_session(args)
    if args.command == "login":
        session.login()
        print("OK")
        return 0
    session.login()
    if args.command == "devices":
        session.update_devices_data()
        _print_devices(session)
    elif args.command == "state":
        states, _scene = session.update_information()
        for oid in sorted(states):
            print(records.format_state(states[oid]))
    elif args.command == "map":
        print(session.render_map())
    elif args.command == "cmd":
        session.command(args.oid, args.action, args.arg)
        print("OK")
    elif args.command == "sched":
        if args.sched_command == "list":
            for task_id in sorted(session.schedules()):
                print(records.format_schedule(session.schedules()[task_id]))
        elif args.sched_command == "put":
            task = session.define_schedule(
                args.name, args.oid, args.action,
                when=args.at, arg=args.arg, criteria=args.criteria, task_id=args.id,
            )
            print(records.format_schedule(task))
        else:
            session.enable_schedule(args.id, args.flag == "on")
            print("OK")
    elif args.command == "rule":
        if args.rule_command == "list":
            for rule_id in sorted(session.rules()):
                print(records.format_rule(session.rules()[rule_id]))
        elif args.rule_command == "put":
            rule = session.define_rule(args.name, args.conditions, args.actions,
                                       rule_id=args.id)
            print(records.format_rule(rule))
        else:
            session.enable_rule(args.id, args.flag == "on")
            print("OK")
    elif args.command == "sms":
        if args.sms_command == "cmd":
            session.devices()
            session.send_via_sms(
                "command", {"oid": str(args.oid), "action": args.action, "arg": args.arg}
            )
        else:
            task_id = args.id or ""
            params = {
                "id": task_id,
                "name": args.name,
                "oid": str(args.oid),
                "action": args.action,
                "arg": args.arg,
                "when": args.at,
                "criteria": args.criteria,
            }
            if not task_id:
                from .client import _stable_id

                params["id"] = _stable_id(
                    session.client_id, "sched", args.name, str(args.oid), args.action, args.at
                )
            session.send_via_sms("schedule_put", params)
        print("OK")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "serve":
            return _run_serve(args)
        return _run_client(args)
    except ClientError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
