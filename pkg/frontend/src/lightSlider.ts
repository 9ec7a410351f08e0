/**
 * Intensity slider stream: shown while hovering a light source with the
 * right button held; value changes are throttled to at most 10 actions per
 * second with the trailing value always delivered.
 */

import { OptimisticStore } from "./optimistic.js";
import type { SceneDoc } from "./types.js";

export function sliderTargetFor(scene: SceneDoc, hover: string | null):
    string | null {
  if (!hover) return null;
  if (scene.lights.some((l) => l.id === hover)) return hover;
  const obj = scene.objects.find((o) => o.id === hover);
  if (obj && obj.affordances.intensity_slider) return obj.id;
  return null;
}

export class LightSlider {
  private lastSent = -Infinity;
  private trailing: { target: string; value: number } | null = null;
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(private store: OptimisticStore,
              private minIntervalMs = 100,
              private now: () => number = Date.now,
              private schedule: typeof setTimeout = setTimeout) {}

  /** Throttled SetIntensity submission (<= 1000/minIntervalMs per second). */
  setValue(target: string, value: number): void {
    const elapsed = this.now() - this.lastSent;
    if (elapsed >= this.minIntervalMs) {
      this.send(target, value);
      return;
    }
    this.trailing = { target, value };
    if (this.timer === null) {
      this.timer = this.schedule(() => {
        this.timer = null;
        if (this.trailing) {
          const { target: t, value: v } = this.trailing;
          this.trailing = null;
          this.send(t, v);
        }
      }, this.minIntervalMs - elapsed);
    }
  }

  private send(target: string, value: number): void {
    this.lastSent = this.now();
    this.store.submit({ target, action: { type: "set_intensity", value } });
  }
}
