/**
 * Floor-plan rendering and selection.
 *
 * Walls become SVG polylines carrying their packed width and color; icons
 * become positioned glyph elements laid over the plan.  Selection funnels
 * through the same nearest-icon hit test the server documents (oid 0 is
 * decoration and unselectable; distance ties go to the lowest oid).
 */

import { Device, DeviceState, IconRecord, Scene, hitTest } from "./protocol.js";

const SVG_NS = "http://www.w3.org/2000/svg";
export const CANVAS_UNITS = 1000; // scene coordinate space is a fixed square
export const SELECT_RADIUS = 40; // scene units around a tap

/** Glyphs for live states (ids 10..18) and a few decorative ids. */
const GLYPHS: Record<number, string> = {
  0: "·", 1: "▢", 2: "▣", 3: "▬", 4: "◆", 5: "✦", 6: "♨", 7: "🪑", 8: "🛏", 9: "🚪",
  10: "○", // on_off: off
  11: "●", // on_off: on
  12: "▁", // leveled: low band
  13: "▄", // leveled: mid band
  14: "█", // leveled: high band
  15: "▽", // presence: absent
  16: "▲", // presence: present
  17: "▮", // open_closed: closed
  18: "▯", // open_closed: open
};

const CATEGORY_FALLBACK = "?";

export function glyphFor(iconId: number): string {
  return GLYPHS[iconId] ?? CATEGORY_FALLBACK;
}

export interface Selection {
  icon: IconRecord;
  device?: Device;
  state?: DeviceState;
}

export class FloorPlanView {
  readonly root: HTMLElement;
  private scene: Scene = { walls: [], icons: [] };
  private states = new Map<number, DeviceState>();
  private devices = new Map<number, Device>();
  onSelect: ((selection: Selection) => void) | null = null;

  constructor(root: HTMLElement) {
    this.root = root;
    this.root.classList.add("floor-plan");
    this.root.addEventListener("click", (event) => this.handleClick(event));
  }

  setDevices(devices: Map<number, Device>): void {
    this.devices = devices;
  }

  /** Repaint from a freshly decoded scene and state table. */
  render(scene: Scene, states: Map<number, DeviceState>): void {
    this.scene = scene;
    this.states = states;
    this.root.textContent = "";

    const svg = document.createElementNS(SVG_NS, "svg");
    svg.setAttribute("viewBox", `0 0 ${CANVAS_UNITS} ${CANVAS_UNITS}`);
    svg.setAttribute("preserveAspectRatio", "xMidYMid meet");
    svg.classList.add("walls");
    for (const wall of scene.walls) {
      const poly = document.createElementNS(SVG_NS, "polyline");
      poly.setAttribute("points", wall.points.map(([x, y]) => `${x},${y}`).join(" "));
      poly.setAttribute("fill", "none");
      poly.setAttribute("stroke", `rgb(${wall.color[0]},${wall.color[1]},${wall.color[2]})`);
      poly.setAttribute("stroke-width", String(wall.width));
      svg.appendChild(poly);
    }
    this.root.appendChild(svg);

    for (const icon of scene.icons) {
      const el = document.createElement("span");
      el.className = icon.oid === 0 ? "icon decorative" : "icon selectable";
      el.dataset.oid = String(icon.oid);
      el.dataset.x = String(icon.x);
      el.dataset.y = String(icon.y);
      el.dataset.iconId = String(icon.iconId);
      el.style.left = `${(icon.x / CANVAS_UNITS) * 100}%`;
      el.style.top = `${(icon.y / CANVAS_UNITS) * 100}%`;
      el.textContent = glyphFor(icon.iconId);
      el.title = icon.name;
      this.root.appendChild(el);
    }
  }

  /** Selection entry point in scene coordinates (documented semantics). */
  selectAt(x: number, y: number): Selection | null {
    const icon = hitTest(this.scene, x, y, SELECT_RADIUS);
    if (icon === null) {
      return null;
    }
    const selection: Selection = {
      icon,
      device: this.devices.get(icon.oid),
      state: this.states.get(icon.oid),
    };
    this.onSelect?.(selection);
    return selection;
  }

  private handleClick(event: MouseEvent): void {
    const target = event.target as HTMLElement;
    if (target.dataset && target.dataset.x !== undefined) {
      // a tap directly on a glyph still resolves through the hit test, so
      // overlapping icons and decorative items behave like everywhere else
      this.selectAt(Number(target.dataset.x), Number(target.dataset.y));
      return;
    }
    const rect = this.root.getBoundingClientRect();
    if (rect.width === 0 || rect.height === 0) {
      return;
    }
    const x = ((event.clientX - rect.left) / rect.width) * CANVAS_UNITS;
    const y = ((event.clientY - rect.top) / rect.height) * CANVAS_UNITS;
    this.selectAt(Math.round(x), Math.round(y));
  }
}

export function describeState(device: Device | undefined, state: DeviceState | undefined): string {
  if (state === undefined) {
    return "no data";
  }
  const level = state.level === null ? "" : ` (${state.level})`;
  return `${state.status}${level} at t=${state.timestamp.toFixed(1)}s`;
}
