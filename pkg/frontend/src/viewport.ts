/**
 * Canvas viewport: wireframe boxes for objects, stick figures for avatars,
 * markers for lights, all drawn through the same projection conventions
 * the server renders with.  Pointer gestures feed the input mapper and the
 * optimistic store.
 */

import { project, V3 } from "./geometry.js";
import { mapInput } from "./mapInput.js";
import { OptimisticStore } from "./optimistic.js";
import { LightSlider, sliderTargetFor } from "./lightSlider.js";
import type { InputEvent as SceneInput, SceneDoc, SceneObjectDoc } from "./types.js";

const BUTTONS: Record<number, "left" | "middle" | "right"> = {
  0: "left", 1: "middle", 2: "right",
};

function boxCorners(obj: SceneObjectDoc): V3[] {
  const lo = obj.local_bounds.min;
  const hi = obj.local_bounds.max;
  const t = obj.transform.translation;
  const yawRad = (obj.transform.rotation.yaw * Math.PI) / 180;
  const [c, s] = [Math.cos(yawRad), Math.sin(yawRad)];
  const corners: V3[] = [];
  for (const x of [lo[0], hi[0]]) {
    for (const y of [lo[1], hi[1]]) {
      for (const z of [lo[2], hi[2]]) {
        // yaw-only preview; the canonical transform lives on the server
        corners.push([t[0] + c * x + s * z, t[1] + y, t[2] - s * x + c * z]);
      }
    }
  }
  return corners;
}

const BOX_EDGES: Array<[number, number]> = [
  [0, 1], [0, 2], [0, 4], [1, 3], [1, 5], [2, 3], [2, 6],
  [3, 7], [4, 5], [4, 6], [5, 7], [6, 7],
];

export class Viewport {
  private dragButton: "left" | "middle" | "right" | null = null;
  private lastPointer: [number, number] | null = null;
  private slider: LightSlider;

  constructor(private canvas: HTMLCanvasElement,
              private store: OptimisticStore) {
    this.slider = new LightSlider(store);
    canvas.addEventListener("pointerdown", (e) => this.onDown(e));
    canvas.addEventListener("pointermove", (e) => this.onMove(e));
    canvas.addEventListener("pointerup", () => this.onUp());
    canvas.addEventListener("contextmenu", (e) => e.preventDefault());
    window.addEventListener("keydown", (e) => this.onKey(e));
  }

  /** Object/avatar/light id under a canvas point, via projected bounds. */
  hitTest(scene: SceneDoc, x: number, y: number): string | null {
    let best: { id: string; depth: number } | null = null;
    for (const obj of scene.objects) {
      const pts = boxCorners(obj).map((p) => project(scene.camera, p));
      const visible = pts.filter(([, , d]) => d > 0);
      if (visible.length === 0) continue;
      const xs = visible.map((p) => p[0]);
      const ys = visible.map((p) => p[1]);
      if (x >= Math.min(...xs) && x <= Math.max(...xs) &&
          y >= Math.min(...ys) && y <= Math.max(...ys)) {
        const depth = Math.min(...visible.map((p) => p[2]));
        if (!best || depth < best.depth) best = { id: obj.id, depth };
      }
    }
    for (const av of scene.avatars) {
      const [u, v, d] = project(scene.camera, av.root_transform.translation as V3);
      if (d > 0 && Math.abs(u - x) < 30 && Math.abs(v - y) < 80) {
        if (!best || d < best.depth) best = { id: av.id, depth: d };
      }
    }
    for (const light of scene.lights) {
      if (light.kind === "global") continue;
      const [u, v, d] = project(scene.camera, light.position as V3);
      if (d > 0 && Math.abs(u - x) < 12 && Math.abs(v - y) < 12) {
        if (!best || d < best.depth) best = { id: light.id, depth: d };
      }
    }
    return best ? best.id : null;
  }

  private canvasPoint(e: PointerEvent): [number, number] {
    const rect = this.canvas.getBoundingClientRect();
    const scene = this.store.localDocument();
    return [((e.clientX - rect.left) / rect.width) * scene.camera.image_width,
            ((e.clientY - rect.top) / rect.height) * scene.camera.image_height];
  }

  private onDown(e: PointerEvent): void {
    const scene = this.store.localDocument();
    const [x, y] = this.canvasPoint(e);
    this.dragButton = BUTTONS[e.button] ?? null;
    this.lastPointer = [x, y];
    this.store.hoverTarget = this.hitTest(scene, x, y);
    this.store.sliderVisible = this.dragButton === "right" &&
      sliderTargetFor(scene, this.store.hoverTarget) !== null;
    if (this.dragButton === "middle") {
      const mapped = mapInput({ device: "mouse", button: "middle",
                                hoverTarget: this.store.hoverTarget }, scene);
      if (mapped) this.store.submit(mapped);
    }
    this.draw();
  }

  private onMove(e: PointerEvent): void {
    if (!this.dragButton || !this.lastPointer) return;
    const scene = this.store.localDocument();
    const [x, y] = this.canvasPoint(e);
    const delta: [number, number] = [x - this.lastPointer[0], y - this.lastPointer[1]];
    if (delta[0] === 0 && delta[1] === 0) return;
    this.lastPointer = [x, y];
    const input: SceneInput = {
      device: "mouse", button: this.dragButton, dragDelta: delta,
      hoverTarget: this.store.hoverTarget,
    };
    const mapped = mapInput(input, scene);
    if (mapped) this.store.submit(mapped);
    this.draw();
  }

  private onUp(): void {
    this.dragButton = null;
    this.lastPointer = null;
    this.store.sliderVisible = false;
    this.draw();
  }

  private onKey(e: KeyboardEvent): void {
    const mapped = mapInput({ device: "keyboard", key: e.key },
                            this.store.localDocument());
    if (mapped) {
      this.store.submit(mapped);
      this.draw();
    }
  }

  /** Slider widget entry point (wired from main). */
  setSliderValue(value: number): void {
    const scene = this.store.localDocument();
    const target = sliderTargetFor(scene, this.store.hoverTarget);
    if (target) this.slider.setValue(target, value);
  }

  draw(): void {
    const ctx = this.canvas.getContext("2d");
    if (!ctx) return;
    const scene = this.store.localDocument();
    const sx = this.canvas.width / scene.camera.image_width;
    const sy = this.canvas.height / scene.camera.image_height;
    ctx.fillStyle = "#10141b";
    ctx.fillRect(0, 0, this.canvas.width, this.canvas.height);
    ctx.lineWidth = 1;
    for (const obj of scene.objects) {
      const pts = boxCorners(obj).map((p) => project(scene.camera, p));
      ctx.strokeStyle = obj.id === this.store.hoverTarget ? "#ffd166" : "#4ecdc4";
      ctx.beginPath();
      for (const [a, b] of BOX_EDGES) {
        if (pts[a][2] <= 0 || pts[b][2] <= 0) continue;
        ctx.moveTo(pts[a][0] * sx, pts[a][1] * sy);
        ctx.lineTo(pts[b][0] * sx, pts[b][1] * sy);
      }
      ctx.stroke();
    }
    for (const av of scene.avatars) {
      const base = av.root_transform.translation as V3;
      const head: V3 = [base[0], base[1] + 1.7, base[2]];
      const pb = project(scene.camera, base);
      const ph = project(scene.camera, head);
      if (pb[2] > 0 && ph[2] > 0) {
        ctx.strokeStyle = "#f7fff7";
        ctx.beginPath();
        ctx.moveTo(pb[0] * sx, pb[1] * sy);
        ctx.lineTo(ph[0] * sx, ph[1] * sy);
        ctx.stroke();
        ctx.beginPath();
        ctx.arc(ph[0] * sx, ph[1] * sy, 6, 0, 2 * Math.PI);
        ctx.stroke();
      }
    }
    for (const light of scene.lights) {
      if (light.kind === "global") continue;
      const [u, v, d] = project(scene.camera, light.position as V3);
      if (d <= 0) continue;
      ctx.fillStyle = `rgba(255, 220, 120, ${0.3 + 0.7 * light.intensity})`;
      ctx.beginPath();
      ctx.arc(u * sx, v * sy, 5, 0, 2 * Math.PI);
      ctx.fill();
    }
  }
}
