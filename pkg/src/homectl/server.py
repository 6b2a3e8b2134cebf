"""Wires store, fleet, engine, auth and gateway into one runnable server.

The controller owns the 100 ms tick: commands queued since the last tick
are applied first, then due devices are polled into the store, then the
automation engine evaluates schedules and rules (its dispatches land on
the next tick).  In virtual mode nothing moves until :meth:`Controller.step`
is called, which the gateway exposes as ``/m/step`` so black-box tests and
the web client's test harness can drive time deterministically.
"""

from __future__ import annotations

import logging
import mimetypes
import os
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from urllib.parse import unquote

from .auth import Authenticator, CredentialVault, DEFAULT_TTL
from .engine import AutomationEngine
from .model import User
from .sim import Fleet, TICK_SECONDS, VirtualClock, WallClock
from .store import Store
from .wire import Gateway, WireRequest, parse_query

__all__ = ["Controller", "HomeServer", "provision_user"]

logger = logging.getLogger("homectl.server")


def provision_user(
    store: Store,
    vault: CredentialVault,
    username: str,
    password: str,
    role: str = "mobile",
    allowed_oids: frozenset[int] | str = "all",
) -> User:
    """Derive and store a user's verifier and sealed credential."""
    user = User(
        username=username,
        stored_verifier=vault.verifier(username, password),
        role=role,
        allowed_oids=allowed_oids,
    )
    store.add_user(user, vault.seal(username, password))
    return user


class Controller:
    """The simulation/automation loop plus everything it coordinates."""

    def __init__(
        self,
        store: Store | None = None,
        special_code: str = "0000",
        shared_secret: str = "change-me",
        storage_salt: str = "homectl-local-salt",
        ttl: float = DEFAULT_TTL,
        virtual: bool = True,
    ):
        self.store = store if store is not None else Store()
        self.vault = CredentialVault(storage_salt)
        self.auth = Authenticator(
            self.store.user_secret, self.vault, special_code, shared_secret, ttl
        )
        self.virtual = virtual
        self.clock = VirtualClock() if virtual else WallClock()
        self.fleet = Fleet(self.store)
        self.fleet.adopt(self.clock.now)
        self.engine = AutomationEngine(self.store, self.fleet.dispatch, start_now=self.clock.now)
        self.gateway = Gateway(
            self.store, self.auth, self.fleet, step_fn=self.step if virtual else None
        )
        self._tick_lock = threading.Lock()

    @property
    def now(self) -> float:
        return self.clock.now

    def add_user(self, username: str, password: str, role: str = "mobile",
                 allowed_oids: frozenset[int] | str = "all") -> User:
        return provision_user(self.store, self.vault, username, password, role, allowed_oids)

    def tick_once(self, now: float) -> None:
        with self._tick_lock:
            self.fleet.tick(now)
            self.fleet.poll_due(now)
            self.engine.tick(now)

    def step(self, ticks: int = 1) -> float:
        """Advance virtual time tick by tick; returns the new now."""
        if not self.virtual:
            raise RuntimeError("step() needs the virtual clock")
        if ticks < 0:
            raise ValueError("ticks must be >= 0")
        for _ in range(ticks):
            now = self.clock.advance(TICK_SECONDS)
            self.tick_once(now)
        return self.clock.now

    def run_wall_clock(self, stop: threading.Event) -> None:
        """Tick on real time until ``stop`` is set (non-virtual serving)."""
        import time

        while not stop.is_set():
            self.tick_once(self.clock.now)
            time.sleep(TICK_SECONDS)


class _GatewayHandler(BaseHTTPRequestHandler):
    """Thin HTTP shim: the machine grammar lives in the response body."""

    server_version = "homectl/0.1"
    controller: Controller  # set by HomeServer on the handler subclass
    ui_dir: str | None = None

    def do_GET(self) -> None:  # noqa: N802 (http.server naming)
        path, _, query = self.path.partition("?")
        path = unquote(path)
        if path == "/":
            # relative asset URLs in the page only resolve under /ui/
            self.send_response(302)
            self.send_header("Location", "/ui/")
            self.end_headers()
            return
        if path.startswith("/ui"):
            self._serve_static(path)
            return
        controller = self.controller
        if path == "/sms":
            frame = parse_query(query).get("f", "")
            response = controller.gateway.handle_sms(frame, controller.now)
        else:
            request = WireRequest(path, parse_query(query))
            response = controller.gateway.handle(request, controller.now)
        body = response.render().encode("utf-8")
        self.send_response(200)
        self.send_header("Content-Type", "text/plain; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _serve_static(self, path: str) -> None:
        if self.ui_dir is None:
            self.send_error(404, "web client not installed")
            return
        rel = path[len("/ui"):].lstrip("/") or "index.html"
        full = os.path.realpath(os.path.join(self.ui_dir, rel))
        root = os.path.realpath(self.ui_dir)
        if not full.startswith(root + os.sep) and full != root:
            self.send_error(404)
            return
        if not os.path.isfile(full):
            self.send_error(404)
            return
        ctype = mimetypes.guess_type(full)[0] or "application/octet-stream"
        with open(full, "rb") as fh:
            data = fh.read()
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, fmt: str, *args) -> None:
        logger.debug("%s %s", self.address_string(), fmt % args)


class HomeServer:
    """HTTP front for a controller; serves the web client under ``/ui/``."""

    def __init__(self, controller: Controller, host: str = "127.0.0.1", port: int = 8732,
                 ui_dir: str | None = None):
        handler = type(
            "BoundGatewayHandler",
            (_GatewayHandler,),
            {"controller": controller, "ui_dir": ui_dir},
        )
        self.controller = controller
        self.httpd = ThreadingHTTPServer((host, port), handler)
        self._thread: threading.Thread | None = None
        self._stop = threading.Event()
        self._ticker: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self.httpd.server_address[0], self.httpd.server_address[1]

    def start(self) -> None:
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self._thread.start()
        if not self.controller.virtual:
            self._ticker = threading.Thread(
                target=self.controller.run_wall_clock, args=(self._stop,), daemon=True
            )
            self._ticker.start()

    def stop(self) -> None:
        self._stop.set()
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)
        if self._ticker is not None:
            self._ticker.join(timeout=5)

    def serve_forever(self) -> None:
        self.start()
        try:
            while True:
                threading.Event().wait(3600)
        except KeyboardInterrupt:
            pass
        finally:
            self.stop()
