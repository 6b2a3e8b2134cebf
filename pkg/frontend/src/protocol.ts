/**
 * The gateway wire grammar, mirrored from the server: terse OK/ERR
 * responses, percent-escaped record lines, the scene text block, hit
 * testing with the same tie-break, and the expiring-magic credential
 * hashing.
 */

import { fromHex, sha256, sha256Hex, toHex, utf8 } from "./sha256.js";

export interface Device {
  oid: number;
  name: string;
  kind: string;
  criticality: string;
  schema: string;
  actions: string[];
}

export interface DeviceState {
  oid: number;
  status: string;
  level: number | null;
  timestamp: number;
}

export interface Polyline {
  width: number;
  color: [number, number, number];
  points: [number, number][];
}

export interface IconRecord {
  oid: number;
  name: string;
  x: number;
  y: number;
  iconId: number;
}

export interface Scene {
  walls: Polyline[];
  icons: IconRecord[];
}

export interface Schedule {
  id: string;
  name: string;
  oid: number;
  action: string;
  arg: string;
  when: string;
  criteria: string;
  enabled: boolean;
}

export interface Rule {
  id: string;
  name: string;
  conditions: string;
  actions: string;
  enabled: boolean;
}

export interface WireResponse {
  status: string;
  lines: string[];
  ok: boolean;
}

export function parseResponse(text: string): WireResponse {
  if (!text.endsWith("\n")) {
    throw new Error("response must end with a newline");
  }
  const lines = text.split("\n");
  lines.pop();
  const status = lines.shift();
  if (status === undefined || (status !== "OK" && !status.startsWith("ERR "))) {
    throw new Error(`bad status line: ${status}`);
  }
  return { status, lines, ok: status === "OK" };
}

/** Strict inverse of the server's field escaping (%XX as UTF-8 bytes). */
export function unescapeField(text: string): string {
  const bytes: number[] = [];
  let i = 0;
  const hexdigit = /^[0-9a-fA-F]$/;
  while (i < text.length) {
    if (
      text[i] === "%" &&
      i + 3 <= text.length &&
      hexdigit.test(text[i + 1]) &&
      hexdigit.test(text[i + 2])
    ) {
      bytes.push(parseInt(text.slice(i + 1, i + 3), 16));
      i += 3;
    } else {
      for (const b of utf8(text[i])) {
        bytes.push(b);
      }
      i += 1;
    }
  }
  return new TextDecoder().decode(new Uint8Array(bytes));
}

function int(token: string, what: string): number {
  if (!/^-?\d+$/.test(token)) {
    throw new Error(`${what} is not an integer: ${token}`);
  }
  return parseInt(token, 10);
}

export function parseDevice(line: string): Device {
  const parts = line.split("|");
  if (parts.length !== 6) {
    throw new Error(`device record needs 6 fields: ${line}`);
  }
  return {
    oid: int(parts[0], "oid"),
    name: unescapeField(parts[1]),
    kind: parts[2],
    criticality: parts[3],
    schema: parts[4],
    actions: parts[5] ? parts[5].split(",").map((t) => t.split(":")[0]) : [],
  };
}

export function parseState(line: string): DeviceState {
  const parts = line.split("|");
  if (parts.length !== 4) {
    throw new Error(`state record needs 4 fields: ${line}`);
  }
  return {
    oid: int(parts[0], "oid"),
    status: parts[1],
    level: parts[2] === "" ? null : int(parts[2], "level"),
    timestamp: parseFloat(parts[3]),
  };
}

export function parseSchedule(line: string): Schedule {
  const parts = line.split("|");
  if (parts.length !== 8) {
    throw new Error(`schedule record needs 8 fields: ${line}`);
  }
  return {
    id: unescapeField(parts[0]),
    name: unescapeField(parts[1]),
    oid: int(parts[2], "oid"),
    action: parts[3],
    arg: unescapeField(parts[4]),
    when: parts[5],
    criteria: parts[6],
    enabled: parts[7] === "1",
  };
}

export function parseRule(line: string): Rule {
  const parts = line.split("|");
  if (parts.length !== 5) {
    throw new Error(`rule record needs 5 fields: ${line}`);
  }
  return {
    id: unescapeField(parts[0]),
    name: unescapeField(parts[1]),
    conditions: parts[2],
    actions: parts[3],
    enabled: parts[4] === "1",
  };
}

function parsePoint(token: string, lineNo: number): [number, number] {
  const parts = token.split(",");
  if (parts.length !== 2) {
    throw new Error(`line ${lineNo}: bad point ${token}`);
  }
  return [int(parts[0], "x"), int(parts[1], "y")];
}

export function decodeScene(text: string): Scene {
  const lines = text.split("\n");
  if (lines[lines.length - 1] === "") {
    lines.pop();
  }
  if (lines[0] !== "#WALLS") {
    throw new Error("line 1: expected #WALLS header");
  }
  const walls: Polyline[] = [];
  const icons: IconRecord[] = [];
  let section: "walls" | "icons" = "walls";
  for (let i = 1; i < lines.length; i++) {
    const line = lines[i];
    const lineNo = i + 1;
    if (line === "#ICONS") {
      section = "icons";
    } else if (section === "walls") {
      const points = line.split(";").filter((t) => t !== "").map((t) => parsePoint(t, lineNo));
      if (points.length < 4) {
        throw new Error(`line ${lineNo}: truncated polyline`);
      }
      const [width, r] = points[0];
      const [g, b] = points[1];
      if (width < 1) {
        throw new Error(`line ${lineNo}: malformed header width ${width}`);
      }
      for (const channel of [r, g, b]) {
        if (channel < 0 || channel > 255) {
          throw new Error(`line ${lineNo}: malformed header channel ${channel}`);
        }
      }
      walls.push({ width, color: [r, g, b], points: points.slice(2) });
    } else {
      const parts = line.split("|");
      if (parts.length !== 5) {
        throw new Error(`line ${lineNo}: icon record needs 5 fields`);
      }
      icons.push({
        oid: int(parts[0], "oid"),
        name: unescapeField(parts[1]),
        x: int(parts[2], "x"),
        y: int(parts[3], "y"),
        iconId: int(parts[4], "icon id"),
      });
    }
  }
  if (section !== "icons") {
    throw new Error("missing #ICONS header");
  }
  return { walls, icons };
}

/** Split an Update Information payload into states and the scene block. */
export function parseStatePayload(lines: string[]): { states: Map<number, DeviceState>; scene: Scene } {
  if (lines[0] !== "#STATES") {
    throw new Error("state payload missing #STATES header");
  }
  const states = new Map<number, DeviceState>();
  let i = 1;
  while (i < lines.length && lines[i] !== "#WALLS") {
    const state = parseState(lines[i]);
    states.set(state.oid, state);
    i++;
  }
  return { states, scene: decodeScene(lines.slice(i).join("\n") + "\n") };
}

/**
 * Nearest selectable icon within `radius`, ties to the lowest oid; icons
 * with oid 0 are decoration and can never be selected.  Identical to the
 * server's selection semantics.
 */
export function hitTest(scene: Scene, x: number, y: number, radius: number): IconRecord | null {
  let best: IconRecord | null = null;
  let bestD2 = Infinity;
  for (const icon of scene.icons) {
    if (icon.oid === 0) {
      continue;
    }
    const dx = icon.x - x;
    const dy = icon.y - y;
    const d2 = dx * dx + dy * dy;
    if (d2 > radius * radius) {
      continue;
    }
    if (d2 < bestD2 || (d2 === bestD2 && best !== null && icon.oid < best.oid)) {
      best = icon;
      bestD2 = d2;
    }
  }
  return best;
}

// -- credentials ------------------------------------------------------------

export function computeCredentialHash(username: string, password: string, magicHex: string): string {
  if (!/^[0-9a-f]{32}$/.test(magicHex.toLowerCase())) {
    throw new Error("magic must be 32 hex chars");
  }
  return sha256Hex(`${username}:${password}:${magicHex.toLowerCase()}`);
}

function keystream(key: Uint8Array, length: number): Uint8Array {
  const out = new Uint8Array(length);
  let produced = 0;
  let counter = 0;
  while (produced < length) {
    const block = new Uint8Array(key.length + 4);
    block.set(key);
    new DataView(block.buffer).setUint32(key.length, counter);
    const digest = sha256(block);
    const take = Math.min(digest.length, length - produced);
    out.set(digest.slice(0, take), produced);
    produced += take;
    counter += 1;
  }
  return out;
}

/** Recover the magic from the handshake line using the shared secret. */
export function unsealMagic(sealedHex: string, sharedSecret: string, clientId: string): string {
  const sealed = fromHex(sealedHex);
  if (sealed.length !== 16) {
    throw new Error("sealed magic must be 32 hex chars");
  }
  const key = sha256(utf8(`magic-seal|${sharedSecret}|${clientId}`));
  const stream = keystream(key, sealed.length);
  const magic = sealed.map((byte, i) => byte ^ stream[i]);
  return toHex(magic);
}

export function encodeQuery(params: Record<string, string>): string {
  return Object.entries(params)
    .map(([k, v]) => `${encodeURIComponent(k)}=${encodeURIComponent(v)}`)
    .join("&");
}
