/**
 * Authenticated gateway client.  Hashing happens here, in the page; the
 * password stays in memory and is re-salted with a fresh magic whenever the
 * server reports an authentication failure (single transparent retry).
 */

import {
  Device,
  DeviceState,
  Rule,
  Scene,
  Schedule,
  WireResponse,
  computeCredentialHash,
  encodeQuery,
  parseDevice,
  parseResponse,
  parseRule,
  parseSchedule,
  parseStatePayload,
  unsealMagic,
} from "./protocol.js";

export class GatewayError extends Error {
  constructor(public status: string, message?: string) {
    super(message ?? status);
  }
}

export class AuthFailure extends GatewayError {
  constructor() {
    super("ERR AUTH", "authentication refused");
  }
}

export interface LoginDetails {
  serverPath: string; // base URL of the gateway, "" when same-origin
  username: string;
  password: string;
  clientId: string;
  specialCode: string;
  sharedSecret: string;
}

export class GatewayClient {
  private magicHex: string | null = null;
  private details: LoginDetails;

  constructor(details: LoginDetails) {
    this.details = details;
  }

  get username(): string {
    return this.details.username;
  }

  private async raw(pathQuery: string): Promise<WireResponse> {
    const response = await fetch(this.details.serverPath + pathQuery);
    return parseResponse(await response.text());
  }

  async handshake(): Promise<void> {
    const query = encodeQuery({ c: this.details.clientId, k: this.details.specialCode });
    const response = await this.raw(`/m/handshake?${query}`);
    if (!response.ok || response.lines.length !== 1) {
      throw new AuthFailure();
    }
    this.magicHex = unsealMagic(
      response.lines[0], this.details.sharedSecret, this.details.clientId,
    );
  }

  async login(): Promise<void> {
    await this.handshake();
    const response = await this.raw(`/m/login?${this.authQuery({})}`);
    if (!response.ok) {
      this.magicHex = null;
      throw new AuthFailure();
    }
  }

  private authQuery(params: Record<string, string>): string {
    if (this.magicHex === null) {
      throw new AuthFailure();
    }
    return encodeQuery({
      c: this.details.clientId,
      u: this.details.username,
      h: computeCredentialHash(this.details.username, this.details.password, this.magicHex),
      ...params,
    });
  }

  private async call(path: string, params: Record<string, string> = {}): Promise<WireResponse> {
    if (this.magicHex === null) {
      await this.handshake();
    }
    let response = await this.raw(`${path}?${this.authQuery(params)}`);
    if (response.status === "ERR AUTH") {
      // expired magic: one silent re-handshake, then give up
      await this.handshake();
      response = await this.raw(`${path}?${this.authQuery(params)}`);
      if (response.status === "ERR AUTH") {
        throw new AuthFailure();
      }
    }
    if (!response.ok) {
      throw new GatewayError(response.status, `${path} -> ${response.status}`);
    }
    return response;
  }

  /** Infrequent tier: device table with capabilities. */
  async devices(): Promise<Map<number, Device>> {
    const response = await this.call("/m/devices");
    const table = new Map<number, Device>();
    for (const line of response.lines) {
      const device = parseDevice(line);
      table.set(device.oid, device);
    }
    return table;
  }

  /** Frequent tier: latest states plus the live-icon scene. */
  async stateAndScene(): Promise<{ states: Map<number, DeviceState>; scene: Scene }> {
    const response = await this.call("/m/state");
    return parseStatePayload(response.lines);
  }

  async command(oid: number, action: string, arg = ""): Promise<void> {
    await this.call("/m/command", { oid: String(oid), action, arg });
  }

  async schedules(): Promise<Schedule[]> {
    const response = await this.call("/m/schedules");
    return response.lines.map(parseSchedule);
  }

  async putSchedule(s: Omit<Schedule, "enabled"> & { enabled?: boolean }): Promise<void> {
    await this.call("/m/schedule_put", {
      id: s.id,
      name: s.name,
      oid: String(s.oid),
      action: s.action,
      arg: s.arg,
      when: s.when,
      criteria: s.criteria,
      enabled: s.enabled === false ? "0" : "1",
    });
  }

  async enableSchedule(id: string, enabled: boolean): Promise<void> {
    await this.call("/m/schedule_enable", { id, enabled: enabled ? "1" : "0" });
  }

  async rules(): Promise<Rule[]> {
    const response = await this.call("/m/rules");
    return response.lines.map(parseRule);
  }

  async putRule(r: Omit<Rule, "enabled"> & { enabled?: boolean }): Promise<void> {
    await this.call("/m/rule_put", {
      id: r.id,
      name: r.name,
      conditions: r.conditions,
      actions: r.actions,
      enabled: r.enabled === false ? "0" : "1",
    });
  }

  async enableRule(id: string, enabled: boolean): Promise<void> {
    await this.call("/m/rule_enable", { id, enabled: enabled ? "1" : "0" });
  }

  /** Advance the server's virtual clock (test-mode servers only). */
  async step(ticks: number): Promise<void> {
    await this.call("/m/step", { ticks: String(ticks) });
  }
}

/** Stable schedule id so a repeated or retried define collapses to one record. */
export function stableId(...parts: string[]): string {
  let h = 2166136261;
  const text = parts.join("|");
  for (let i = 0; i < text.length; i++) {
    h ^= text.charCodeAt(i);
    h = Math.imul(h, 16777619);
  }
  return "w" + (h >>> 0).toString(16).padStart(8, "0");
}
