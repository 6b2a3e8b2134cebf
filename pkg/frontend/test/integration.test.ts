// @vitest-environment jsdom
//
// End-to-end against a real control server (spawned as a child process in
// virtual-clock mode): sign in through the login form, define a schedule
// through the schedule form, step the server clock, and watch it fire.
import { spawn, ChildProcess } from "node:child_process";
import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { App } from "../src/app.js";
import { GatewayClient } from "../src/api.js";

const SPECIAL = "7777";
const SECRET = "sesame";
const ADMIN = "admin";
const ADMIN_PW = "opensesame!";

let server: ChildProcess;
let base = "";

function waitFor(predicate: () => boolean, what: string, timeoutMs = 8000): Promise<void> {
  const started = Date.now();
  return new Promise((resolve, reject) => {
    const poll = () => {
      if (predicate()) {
        resolve();
      } else if (Date.now() - started > timeoutMs) {
        reject(new Error(`timed out waiting for ${what}`));
      } else {
        setTimeout(poll, 25);
      }
    };
    poll();
  });
}

beforeAll(async () => {
  server = spawn(
    "python3",
    [
      "-m", "homectl.cli", "serve",
      "--virtual", "--demo",
      "--host", "127.0.0.1", "--port", "0",
      "--special-code", SPECIAL, "--shared-secret", SECRET,
    ],
    { stdio: ["ignore", "pipe", "pipe"] },
  );
  let stdout = "";
  server.stdout!.on("data", (chunk) => {
    stdout += String(chunk);
    const match = stdout.match(/listening on ([\d.]+):(\d+)/);
    if (match) {
      base = `http://${match[1]}:${match[2]}`;
    }
  });
  await waitFor(() => base !== "", "server to listen");
}, 20000);

afterAll(() => {
  server?.kill();
});

function fill(form: HTMLElement, name: string, value: string): void {
  const input = form.querySelector(`[name='${name}']`) as HTMLInputElement;
  input.value = value;
}

function submit(form: HTMLFormElement): void {
  form.dispatchEvent(new (window as any).Event("submit", { bubbles: true, cancelable: true }));
}

describe("web remote against a live server", () => {
  it(
    "login form, schedule form, clock step, firing",
    async () => {
      document.body.innerHTML = "<main id='app'></main>";
      const app = new App(document.getElementById("app") as HTMLElement);

      // -- sign in through the form
      const loginForm = document.getElementById("login-form") as HTMLFormElement;
      fill(loginForm, "serverPath", base);
      fill(loginForm, "username", ADMIN);
      fill(loginForm, "password", ADMIN_PW);
      fill(loginForm, "clientId", "webtest");
      fill(loginForm, "specialCode", SPECIAL);
      fill(loginForm, "sharedSecret", SECRET);
      submit(loginForm);
      await waitFor(() => !app.screens.menu.hidden, "menu after login");

      // -- the two update tiers and the floor plan
      await app.openMap();
      await waitFor(() => !app.screens.map.hidden, "map screen");
      const icons = document.querySelectorAll("#screen-map .icon");
      expect(icons.length).toBe(6); // demo scene: 5 devices + sofa
      expect(document.querySelectorAll("#screen-map .icon.decorative").length).toBe(1);

      // -- define "lamp on now" through the schedule form
      await app.openSchedules(1);
      await waitFor(() => !app.screens.schedules.hidden, "schedules screen");
      const schedForm = document.getElementById("schedule-form") as HTMLFormElement;
      fill(schedForm, "name", "web lamp now");
      (schedForm.querySelector("[name='oid']") as HTMLSelectElement).value = "1";
      (schedForm.querySelector("[name='oid']") as HTMLSelectElement)
        .dispatchEvent(new (window as any).Event("change"));
      (schedForm.querySelector("[name='action']") as HTMLSelectElement).value = "set_on";
      fill(schedForm, "when", "now");
      submit(schedForm);
      await waitFor(
        () => document.querySelectorAll("#screen-schedules .schedule-row").length === 1,
        "schedule row to appear",
      );
      const row = document.querySelector("#screen-schedules .schedule-row") as HTMLElement;
      expect(row.textContent).toContain("web lamp now");
      expect(row.textContent).toContain("enabled");

      // the record is really on the server
      const probe = new GatewayClient({
        serverPath: base, username: ADMIN, password: ADMIN_PW,
        clientId: "probe", specialCode: SPECIAL, sharedSecret: SECRET,
      });
      await probe.login();
      const listed = await probe.schedules();
      expect(listed.some((t) => t.name === "web lamp now" && t.enabled)).toBe(true);

      // -- step the virtual clock: fire tick + apply tick
      await probe.step(3);
      const after = await probe.schedules();
      const fired = after.find((t) => t.name === "web lamp now");
      expect(fired?.enabled).toBe(false); // one-shot, auto-disabled
      const { states } = await probe.stateAndScene();
      expect(states.get(1)?.status).toBe("on"); // the lamp actually flipped

      // -- refreshing the map view picks up the new lamp glyph
      await app.openMap();
      const refresh = document.getElementById("map-refresh") as HTMLButtonElement;
      refresh.dispatchEvent(new (window as any).MouseEvent("click", { bubbles: true }));
      await waitFor(() => {
        const icon = document.querySelector(
          "#screen-map .icon[data-oid='1']",
        ) as HTMLElement | null;
        return icon?.dataset.iconId === "11"; // on-glyph id
      }, "lamp glyph to flip after refresh");
    },
    30000,
  );

  it(
    "expired magic is re-handshaken transparently",
    async () => {
      const client = new GatewayClient({
        serverPath: base, username: ADMIN, password: ADMIN_PW,
        clientId: "expiry-probe", specialCode: SPECIAL, sharedSecret: SECRET,
      });
      await client.login();
      await client.step(3); // burn a few ticks; ttl is 300 s
      // jump far past the ttl: 301 s = 3010 ticks
      await client.step(3010);
      const devices = await client.devices(); // silently re-handshakes
      expect(devices.size).toBe(5);
    },
    30000,
  );
});
