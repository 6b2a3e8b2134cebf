/**
 * The browser remote: login, main menu, interactive floor plan, schedule
 * and rule managers.  One GatewayClient per signed-in session; the password
 * never leaves the page's memory.
 */

import { AuthFailure, GatewayClient, GatewayError, LoginDetails, stableId } from "./api.js";
import { Device, DeviceState, Scene, Schedule } from "./protocol.js";
import { FloorPlanView, Selection, describeState } from "./view.js";

export const STALENESS_SECONDS = 10;

type ScreenName = "login" | "menu" | "map" | "schedules" | "rules";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text = "",
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, value);
  }
  if (text) {
    node.textContent = text;
  }
  return node;
}

interface Caches {
  devices: Map<number, Device> | null;
  devicesAt: number | null;
  states: Map<number, DeviceState> | null;
  scene: Scene | null;
  stateAt: number | null;
}

export class App {
  root: HTMLElement;
  client: GatewayClient | null = null;
  caches: Caches = { devices: null, devicesAt: null, states: null, scene: null, stateAt: null };
  screens: Record<ScreenName, HTMLElement>;
  plan: FloorPlanView;
  private refreshing: Promise<void> | null = null;
  private now: () => number;

  constructor(root: HTMLElement, now: () => number = () => Date.now() / 1000) {
    this.root = root;
    this.now = now;
    this.screens = {
      login: el("section", { id: "screen-login" }),
      menu: el("section", { id: "screen-menu", hidden: "" }),
      map: el("section", { id: "screen-map", hidden: "" }),
      schedules: el("section", { id: "screen-schedules", hidden: "" }),
      rules: el("section", { id: "screen-rules", hidden: "" }),
    };
    for (const screen of Object.values(this.screens)) {
      root.appendChild(screen);
    }
    this.buildLogin();
    this.buildMenu();
    this.buildMap();
    this.plan = new FloorPlanView(
      this.screens.map.querySelector(".plan-holder") as HTMLElement,
    );
    this.plan.onSelect = (selection) => this.openDeviceDialog(selection);
  }

  show(name: ScreenName): void {
    for (const [key, screen] of Object.entries(this.screens)) {
      if (key === name) {
        screen.removeAttribute("hidden");
      } else {
        screen.setAttribute("hidden", "");
      }
    }
  }

  private flash(message: string): void {
    let banner = this.root.querySelector("#flash") as HTMLElement | null;
    if (banner === null) {
      banner = el("div", { id: "flash" });
      this.root.prepend(banner);
    }
    banner.textContent = message;
    banner.hidden = message === "";
  }

  /** Uniform handling: auth failures drop back to login, generically. */
  private async guarded(work: () => Promise<void>): Promise<void> {
    try {
      await work();
      this.flash("");
    } catch (error) {
      if (error instanceof AuthFailure) {
        this.client = null;
        this.show("login");
        this.flash("Sign-in required.");
      } else if (error instanceof GatewayError) {
        this.flash(`Request failed: ${error.status}`);
      } else {
        this.flash("Cannot reach the server.");
      }
    }
  }

  // -- login -----------------------------------------------------------------

  private buildLogin(): void {
    const screen = this.screens.login;
    screen.appendChild(el("h2", {}, "Sign in"));
    const form = el("form", { id: "login-form" });
    const fields: [keyof LoginDetails, string, string][] = [
      ["serverPath", "Server path", ""],
      ["username", "Username", ""],
      ["password", "Password", "password"],
      ["clientId", "Client id", ""],
      ["specialCode", "Special code", "password"],
      ["sharedSecret", "Shared secret", "password"],
    ];
    for (const [name, label, type] of fields) {
      const row = el("label", {}, `${label} `);
      row.appendChild(el("input", { name, type: type || "text" }));
      form.appendChild(row);
    }
    form.appendChild(el("button", { type: "submit" }, "Connect"));
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      const data = new FormData(form);
      const details: LoginDetails = {
        serverPath: String(data.get("serverPath") ?? ""),
        username: String(data.get("username") ?? ""),
        password: String(data.get("password") ?? ""),
        clientId: String(data.get("clientId") ?? "") || `web-${String(data.get("username"))}`,
        specialCode: String(data.get("specialCode") ?? ""),
        sharedSecret: String(data.get("sharedSecret") ?? ""),
      };
      void this.login(details);
    });
    screen.appendChild(form);
  }

  async login(details: LoginDetails): Promise<void> {
    const client = new GatewayClient(details);
    try {
      await client.login();
    } catch (error) {
      this.flash(error instanceof AuthFailure ? "Sign-in refused." : "Cannot reach the server.");
      return;
    }
    this.client = client;
    this.caches = { devices: null, devicesAt: null, states: null, scene: null, stateAt: null };
    this.flash("");
    this.show("menu");
  }

  // -- menu ------------------------------------------------------------------

  private buildMenu(): void {
    const screen = this.screens.menu;
    screen.appendChild(el("h2", {}, "Main menu"));
    const entries: [string, string, () => void][] = [
      ["menu-update-devices", "Update Devices Data", () => void this.guarded(() => this.updateDevices())],
      ["menu-update-info", "Update Information", () => void this.guarded(() => this.updateInformation())],
      ["menu-map", "Home Top Plane View", () => void this.openMap()],
      ["menu-schedules", "Manage Schedules", () => void this.openSchedules()],
      ["menu-rules", "Manage Rules", () => void this.openRules()],
      ["menu-logout", "Log out", () => { this.client = null; this.show("login"); }],
    ];
    for (const [id, label, handler] of entries) {
      const button = el("button", { id, type: "button" }, label);
      button.addEventListener("click", handler);
      screen.appendChild(button);
    }
    screen.appendChild(el("p", { class: "menu-status" }));
  }

  private menuStatus(text: string): void {
    const status = this.screens.menu.querySelector(".menu-status");
    if (status) {
      status.textContent = text;
    }
  }

  async updateDevices(): Promise<void> {
    if (this.client === null) {
      throw new AuthFailure();
    }
    this.caches.devices = await this.client.devices();
    this.caches.devicesAt = this.now();
    this.plan.setDevices(this.caches.devices);
    this.menuStatus(`Device table: ${this.caches.devices.size} devices.`);
  }

  async updateInformation(): Promise<void> {
    if (this.client === null) {
      throw new AuthFailure();
    }
    // coalesce: a second refresh while one is in flight reuses it
    if (this.refreshing === null) {
      this.refreshing = (async () => {
        const { states, scene } = await this.client!.stateAndScene();
        this.caches.states = states;
        this.caches.scene = scene;
        this.caches.stateAt = this.now();
      })().finally(() => {
        this.refreshing = null;
      });
    }
    await this.refreshing;
    this.menuStatus(`Information updated: ${this.caches.states?.size ?? 0} states.`);
  }

  stateAge(): number | null {
    return this.caches.stateAt === null ? null : this.now() - this.caches.stateAt;
  }

  // -- map -------------------------------------------------------------------

  private buildMap(): void {
    const screen = this.screens.map;
    screen.appendChild(el("h2", {}, "Home top plane view"));
    const stale = el("div", { class: "stale-prompt", hidden: "" });
    stale.appendChild(el("span", {}, "Information is out of date. "))
    const staleButton = el("button", { id: "stale-refresh", type: "button" }, "Update now");
    staleButton.addEventListener("click", () => void this.guarded(async () => {
      await this.updateInformation();
      this.repaint();
    }));
    stale.appendChild(staleButton);
    screen.appendChild(stale);
    screen.appendChild(el("div", { class: "plan-holder" }));
    const back = el("button", { id: "map-back", type: "button" }, "Back");
    back.addEventListener("click", () => this.show("menu"));
    const refresh = el("button", { id: "map-refresh", type: "button" }, "Refresh");
    refresh.addEventListener("click", () => void this.guarded(async () => {
      await this.updateInformation();
      this.repaint();
    }));
    screen.appendChild(refresh);
    screen.appendChild(back);
    screen.appendChild(el("div", { class: "dialog-holder" }));
  }

  async openMap(): Promise<void> {
    await this.guarded(async () => {
      if (this.caches.devices === null) {
        await this.updateDevices();
      }
      if (this.caches.states === null) {
        await this.updateInformation();
      }
      this.repaint();
      this.show("map");
    });
  }

  repaint(): void {
    if (this.caches.scene !== null && this.caches.states !== null) {
      this.plan.render(this.caches.scene, this.caches.states);
    }
    const age = this.stateAge();
    const prompt = this.screens.map.querySelector(".stale-prompt") as HTMLElement;
    prompt.hidden = !(age !== null && age > STALENESS_SECONDS);
  }

  openDeviceDialog(selection: Selection): void {
    const holder = this.screens.map.querySelector(".dialog-holder") as HTMLElement;
    holder.textContent = "";
    const dialog = el("div", { class: "device-dialog", "data-oid": String(selection.icon.oid) });
    dialog.appendChild(el("h3", {}, selection.icon.name));
    dialog.appendChild(
      el("p", { class: "status-line" },
         `Status: ${describeState(selection.device, selection.state)}`),
    );
    for (const action of selection.device?.actions ?? []) {
      const needsArg = selection.device?.schema === "leveled" && action === "set_level";
      const button = el("button", { class: "cmd", "data-action": action, type: "button" }, action);
      button.addEventListener("click", () => void this.guarded(async () => {
        const arg = needsArg
          ? (dialog.querySelector(".level-input") as HTMLInputElement).value
          : "";
        await this.client!.command(selection.icon.oid, action, arg);
        await this.updateInformation();
        this.repaint();
      }));
      dialog.appendChild(button);
      if (needsArg) {
        dialog.appendChild(el("input", { class: "level-input", type: "number", value: "50" }));
      }
    }
    const addSchedule = el("button", { class: "add-schedule", type: "button" }, "Add schedule");
    addSchedule.addEventListener("click", () => {
      void this.openSchedules(selection.icon.oid);
    });
    dialog.appendChild(addSchedule);
    const close = el("button", { class: "close", type: "button" }, "Close");
    close.addEventListener("click", () => holder.replaceChildren());
    dialog.appendChild(close);
    holder.appendChild(dialog);
  }

  // -- schedules ---------------------------------------------------------------

  async openSchedules(prefillOid?: number): Promise<void> {
    await this.guarded(async () => {
      if (this.caches.devices === null) {
        await this.updateDevices();
      }
      await this.renderSchedules(prefillOid);
      this.show("schedules");
    });
  }

  private async renderSchedules(prefillOid?: number): Promise<void> {
    const screen = this.screens.schedules;
    screen.textContent = "";
    screen.appendChild(el("h2", {}, "Schedules"));
    const list = el("ul", { id: "schedule-list" });
    const schedules = await this.client!.schedules();
    for (const task of schedules) {
      list.appendChild(this.scheduleRow(task));
    }
    screen.appendChild(list);
    screen.appendChild(this.scheduleForm(prefillOid));
    const back = el("button", { id: "schedules-back", type: "button" }, "Back");
    back.addEventListener("click", () => this.show("menu"));
    screen.appendChild(back);
  }

  private scheduleRow(task: Schedule): HTMLElement {
    const device = this.caches.devices?.get(task.oid);
    const row = el("li", { class: "schedule-row", "data-id": task.id });
    row.appendChild(el("span", { class: "sched-desc" },
      `${task.name}: ${device?.name ?? task.oid} ${task.action}` +
      `${task.arg ? " " + task.arg : ""} @ ${task.when}` +
      `${task.criteria ? " if " + task.criteria : ""}`));
    const toggle = el("button", { class: "toggle", type: "button" },
                      task.enabled ? "Disable" : "Enable");
    toggle.addEventListener("click", () => void this.guarded(async () => {
      await this.client!.enableSchedule(task.id, !task.enabled);
      await this.renderSchedules();
    }));
    row.appendChild(toggle);
    const edit = el("button", { class: "edit", type: "button" }, "Edit");
    edit.addEventListener("click", () => this.fillScheduleForm(task));
    row.appendChild(edit);
    row.appendChild(el("span", { class: "sched-state" },
                       task.enabled ? "enabled" : "disabled"));
    return row;
  }

  /** Load an existing record into the form; saving keeps its id. */
  private fillScheduleForm(task: Schedule): void {
    const form = this.screens.schedules.querySelector("#schedule-form") as HTMLFormElement;
    (form.querySelector("[name='id']") as HTMLInputElement).value = task.id;
    (form.querySelector("[name='name']") as HTMLInputElement).value = task.name;
    const deviceSelect = form.querySelector("[name='oid']") as HTMLSelectElement;
    deviceSelect.value = String(task.oid);
    deviceSelect.dispatchEvent(new Event("change"));
    (form.querySelector("[name='action']") as HTMLSelectElement).value = task.action;
    (form.querySelector("[name='arg']") as HTMLInputElement).value = task.arg;
    (form.querySelector("[name='when']") as HTMLInputElement).value = task.when;
    (form.querySelector("[name='criteria']") as HTMLInputElement).value = task.criteria;
  }

  private scheduleForm(prefillOid?: number): HTMLElement {
    const form = el("form", { id: "schedule-form" });
    form.appendChild(el("h3", {}, "Define schedule"));
    form.appendChild(el("input", { name: "id", type: "hidden" }));
    const nameRow = el("label", {}, "Name ");
    nameRow.appendChild(el("input", { name: "name", required: "" }));
    form.appendChild(nameRow);

    const deviceSelect = el("select", { name: "oid" });
    const actionSelect = el("select", { name: "action" });
    const controllable = [...(this.caches.devices?.values() ?? [])]
      .filter((d) => d.actions.length > 0);
    for (const device of controllable) {
      deviceSelect.appendChild(el("option", { value: String(device.oid) },
                                  `${device.oid}: ${device.name}`));
    }
    const fillActions = () => {
      actionSelect.textContent = "";
      const device = this.caches.devices?.get(Number(deviceSelect.value));
      for (const action of device?.actions ?? []) {
        actionSelect.appendChild(el("option", { value: action }, action));
      }
    };
    deviceSelect.addEventListener("change", fillActions);
    if (prefillOid !== undefined) {
      deviceSelect.value = String(prefillOid);
    }
    fillActions();

    const deviceRow = el("label", {}, "Device ");
    deviceRow.appendChild(deviceSelect);
    form.appendChild(deviceRow);
    const actionRow = el("label", {}, "Action ");
    actionRow.appendChild(actionSelect);
    form.appendChild(actionRow);
    const argRow = el("label", {}, "Argument ");
    argRow.appendChild(el("input", { name: "arg" }));
    form.appendChild(argRow);
    const whenRow = el("label", {}, "When (now or HH:MM) ");
    whenRow.appendChild(el("input", { name: "when", value: "now" }));
    form.appendChild(whenRow);
    const critRow = el("label", {}, "Criteria (oid:field:cmp:operand,...) ");
    critRow.appendChild(el("input", { name: "criteria" }));
    form.appendChild(critRow);
    form.appendChild(el("button", { type: "submit" }, "Save"));

    form.addEventListener("submit", (event) => {
      event.preventDefault();
      const data = new FormData(form);
      void this.guarded(async () => {
        const name = String(data.get("name") ?? "");
        const oid = String(data.get("oid") ?? "");
        const action = String(data.get("action") ?? "");
        const when = String(data.get("when") ?? "now");
        const explicitId = String(data.get("id") ?? "");
        await this.client!.putSchedule({
          id: explicitId || stableId(this.client!.username, "sched", name, oid, action, when),
          name,
          oid: Number(oid),
          action,
          arg: String(data.get("arg") ?? ""),
          when,
          criteria: String(data.get("criteria") ?? ""),
        });
        await this.renderSchedules();
      });
    });
    return form;
  }

  // -- rules -------------------------------------------------------------------

  async openRules(): Promise<void> {
    await this.guarded(async () => {
      await this.renderRules();
      this.show("rules");
    });
  }

  private async renderRules(): Promise<void> {
    const screen = this.screens.rules;
    screen.textContent = "";
    screen.appendChild(el("h2", {}, "Rules"));
    const list = el("ul", { id: "rule-list" });
    for (const rule of await this.client!.rules()) {
      const row = el("li", { class: "rule-row", "data-id": rule.id });
      row.appendChild(el("span", {},
        `${rule.name}: if ${rule.conditions} then ${rule.actions}`));
      const toggle = el("button", { class: "toggle", type: "button" },
                        rule.enabled ? "Disable" : "Enable");
      toggle.addEventListener("click", () => void this.guarded(async () => {
        await this.client!.enableRule(rule.id, !rule.enabled);
        await this.renderRules();
      }));
      row.appendChild(toggle);
      list.appendChild(row);
    }
    screen.appendChild(list);

    const form = el("form", { id: "rule-form" });
    form.appendChild(el("h3", {}, "Define rule"));
    for (const [name, label] of [
      ["name", "Name"],
      ["conditions", "Conditions (oid:field:cmp:operand,...)"],
      ["actions", "Actions (oid:action:arg,...)"],
    ] as const) {
      const row = el("label", {}, `${label} `);
      row.appendChild(el("input", { name, required: "" }));
      form.appendChild(row);
    }
    form.appendChild(el("button", { type: "submit" }, "Save"));
    form.addEventListener("submit", (event) => {
      event.preventDefault();
      const data = new FormData(form);
      void this.guarded(async () => {
        const name = String(data.get("name") ?? "");
        const conditions = String(data.get("conditions") ?? "");
        const actions = String(data.get("actions") ?? "");
        await this.client!.putRule({
          id: stableId(this.client!.username, "rule", name, conditions, actions),
          name,
          conditions,
          actions,
        });
        await this.renderRules();
      });
    });
    screen.appendChild(form);
    const back = el("button", { id: "rules-back", type: "button" }, "Back");
    back.addEventListener("click", () => this.show("menu"));
    screen.appendChild(back);
  }
}

export function mountApp(root: HTMLElement): App {
  return new App(root);
}

// auto-mount in the browser; tests construct App themselves
if (typeof document !== "undefined" && document.getElementById("app") !== null) {
  mountApp(document.getElementById("app") as HTMLElement);
}
